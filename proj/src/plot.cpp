#include "phasediv/plot.hpp"

#include "phasediv/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

namespace phasediv {

namespace fs = std::filesystem;

namespace {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column. Lowercase letters
// are drawn with the uppercase glyphs.
struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

constexpr Glyph kFont[] = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
    {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
    {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
    {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'/', {0, 0x01, 0x02, 0x04, 0x08, 0x10, 0}},
    {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
    {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
    {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
    {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0, 0x04}},
};

const Glyph& glyph(char c) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == up) return g;
  }
  for (const auto& g : kFont) {
    if (g.c == '?') return g;
  }
  throw std::logic_error("font has no fallback glyph");
}

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGrey{200, 200, 200};
constexpr Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}, {140, 86, 75}};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  int width() const { return w_; }
  int height() const { return h_; }
  const std::vector<std::uint8_t>& pixels() const { return px_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    px_[i] = c[0], px_[i + 1] = c[1], px_[i + 2] = c[2];
  }

  void fill(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    const int lo = -(thickness - 1) / 2, hi = thickness / 2;
    for (;;) {
      fill(x0 + lo, y0 + lo, x0 + hi, y0 + hi, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  static int text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 6 * scale; }

  void text(int x, int y, const std::string& s, int scale, Rgb c) {
    for (char ch : s) {
      const auto& g = glyph(ch);
      for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
          if (g.rows[r] & (0x10 >> col)) fill(x + col * scale, y + r * scale, x + col * scale + scale - 1, y + r * scale + scale - 1, c);
        }
      }
      x += 6 * scale;
    }
  }

  // Text rotated 90 degrees counter-clockwise, reading bottom to top from (x, y).
  void text_up(int x, int y, const std::string& s, int scale, Rgb c) {
    for (char ch : s) {
      const auto& g = glyph(ch);
      for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
          if (!(g.rows[r] & (0x10 >> col))) continue;
          const int px = x + r * scale;
          const int py = y - col * scale;
          fill(px, py - scale + 1, px + scale - 1, py, c);
        }
      }
      y -= 6 * scale;
    }
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

std::string format_tick(double v) {
  if (std::abs(v) < 1e-12) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<double> linear_ticks(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(t);
  return ticks;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> ticks;
  for (double d = std::floor(std::log10(lo)); d <= std::ceil(std::log10(hi)); d += 1.0) {
    for (double m : {1.0, 2.0, 5.0}) {
      const double t = m * std::pow(10.0, d);
      if (t >= lo * (1 - 1e-9) && t <= hi * (1 + 1e-9)) ticks.push_back(t);
    }
  }
  return ticks;
}

struct Png {
  std::vector<std::uint8_t> bytes;
};

void png_write(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<Png*>(png_get_io_ptr(png));
  out->bytes.insert(out->bytes.end(), data, data + length);
}

void png_flush(png_structp) {}

std::vector<std::uint8_t> encode_png(const Canvas& canvas) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: cannot create info");
  }
  Png out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_write, png_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width()), static_cast<png_uint_32>(canvas.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto& px = canvas.pixels();
  for (int y = 0; y < canvas.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(y) * canvas.width() * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out.bytes;
}

}  // namespace

std::vector<std::uint8_t> render_png(const PlotSpec& spec) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = 0.0, y_hi = -std::numeric_limits<double>::infinity();
  std::size_t points = 0;
  for (const auto& s : spec.series) {
    if (s.x.size() != s.y.size() || (!s.error.empty() && s.error.size() != s.y.size())) {
      throw std::invalid_argument("plot: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (spec.log_x && s.x[i] <= 0.0) throw std::invalid_argument("plot: nonpositive x on a log axis");
      const double e = s.error.empty() || !std::isfinite(s.error[i]) ? 0.0 : s.error[i];
      x_lo = std::min(x_lo, s.x[i]), x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i] - e), y_hi = std::max(y_hi, s.y[i] + e);
      ++points;
    }
  }
  if (points == 0) throw std::invalid_argument("plot: nothing to plot (empty axis)");
  if (spec.width < 200 || spec.height < 150) throw std::invalid_argument("plot: image too small");

  auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
  double a = tx(x_lo), b = tx(x_hi);
  if (b - a < 1e-12) a -= 0.5, b += 0.5;
  const double pad_x = 0.05 * (b - a);
  a -= pad_x, b += pad_x;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  y_hi += 0.05 * (y_hi - y_lo);

  Canvas canvas(spec.width, spec.height);
  const int left = 90, right = spec.width - 190, top = 50, bottom = spec.height - 70;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((tx(x) - a) / (b - a) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (bottom - top))); };

  const double x_min_data = spec.log_x ? std::pow(10.0, a) : a;
  const double x_max_data = spec.log_x ? std::pow(10.0, b) : b;
  const auto xticks = spec.log_x ? log_ticks(x_min_data, x_max_data) : linear_ticks(x_min_data, x_max_data);
  for (double t : xticks) {
    const int x = px(t);
    canvas.line(x, top, x, bottom, kGrey);
    canvas.line(x, bottom, x, bottom + 5, kBlack);
    const auto label = format_tick(t);
    canvas.text(x - Canvas::text_width(label, 1) / 2, bottom + 10, label, 1, kBlack);
  }
  for (double t : linear_ticks(y_lo, y_hi)) {
    const int y = py(t);
    canvas.line(left, y, right, y, kGrey);
    canvas.line(left - 5, y, left, y, kBlack);
    const auto label = format_tick(t);
    canvas.text(left - 10 - Canvas::text_width(label, 1), y - 3, label, 1, kBlack);
  }
  canvas.line(left, top, left, bottom, kBlack);
  canvas.line(left, bottom, right, bottom, kBlack);
  canvas.line(right, top, right, bottom, kBlack);
  canvas.line(left, top, right, top, kBlack);

  canvas.text((left + right - Canvas::text_width(spec.title, 2)) / 2, 15, spec.title, 2, kBlack);
  canvas.text((left + right - Canvas::text_width(spec.x_label, 1)) / 2, bottom + 35, spec.x_label, 1, kBlack);
  canvas.text_up(20, (top + bottom + Canvas::text_width(spec.y_label, 1)) / 2, spec.y_label, 1, kBlack);

  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const auto& series = spec.series[s];
    const Rgb color = kPalette[s % std::size(kPalette)];
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      if (std::isfinite(series.x[i]) && std::isfinite(series.y[i])) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return series.x[i] < series.x[j]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
      canvas.line(px(series.x[order[k - 1]]), py(series.y[order[k - 1]]), px(series.x[order[k]]), py(series.y[order[k]]),
                  color, 2);
    }
    for (auto i : order) {
      const int x = px(series.x[i]), y = py(series.y[i]);
      if (!series.error.empty() && std::isfinite(series.error[i]) && series.error[i] > 0.0) {
        const int y0 = py(series.y[i] - series.error[i]), y1 = py(series.y[i] + series.error[i]);
        canvas.line(x, y0, x, y1, color);
        canvas.line(x - 4, y0, x + 4, y0, color);
        canvas.line(x - 4, y1, x + 4, y1, color);
      }
      canvas.fill(x - 3, y - 3, x + 3, y + 3, color);
    }
    const int ly = top + 10 + static_cast<int>(s) * 20;
    canvas.fill(right + 15, ly, right + 27, ly + 6, color);
    canvas.text(right + 35, ly, series.label, 1, kBlack);
  }
  return encode_png(canvas);
}

void render_plot(const PlotSpec& spec, const fs::path& path) {
  const auto bytes = render_png(spec);
  write_text_atomic(path, std::string(bytes.begin(), bytes.end()));
}

PlotSpec sweep_plot(const SweepResult& result, const std::string& title, const std::string& x_label, bool wall_time) {
  PlotSpec spec;
  spec.title = title;
  spec.x_label = x_label;
  spec.y_label = wall_time ? "WALL TIME (S)" : result.metric == "ssim" ? "SSIM" : "RWE (WAVES)";
  for (const auto& name : result.estimators()) {
    PlotSeries s;
    s.label = name;
    for (const auto& p : result.points) {
      if (p.estimator != name) continue;
      s.x.push_back(p.axis_value);
      s.y.push_back(wall_time ? p.mean_wall_time : p.mean);
      s.error.push_back(wall_time ? 0.0 : p.standard_error);
    }
    spec.series.push_back(std::move(s));
  }
  return spec;
}

std::vector<fs::path> render_plots(std::span<const fs::path> csv_paths, const fs::path& out_dir) {
  // Parse everything first so a bad input leaves no partial output behind.
  std::vector<SweepResult> results;
  for (const auto& path : csv_paths) {
    const SweepResult r = aggregate(parse_trials_csv(read_text(path)));
    if (r.points.empty()) throw std::invalid_argument(path.string() + ": no successful trials to plot");
    results.push_back(r);
  }
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const fs::path out = out_dir / (csv_paths[i].stem().string() + ".png");
    render_plot(sweep_plot(results[i], csv_paths[i].stem().string(), "AXIS VALUE"), out);
    written.push_back(out);
  }
  return written;
}

}  // namespace phasediv
