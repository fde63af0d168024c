#include "phasediv/gaussian.hpp"

#include "phasediv/diversity_model.hpp"
#include "phasediv/fft.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phasediv {

std::vector<int> noll_range(int first, int last) {
  std::vector<int> out;
  for (int j = first; j <= last; ++j) out.push_back(j);
  return out;
}

void GaussianOptions::validate() const {
  if (estimated_indices.empty()) throw ConfigError("gaussian: no estimated indices");
  for (int j : estimated_indices) {
    if (j < ZernikeVector::kMinIndex) throw ConfigError("gaussian: estimated indices must be >= 4");
  }
  if (max_iterations < 1) throw ConfigError("gaussian: max_iterations must be >= 1");
  if (!(gradient_norm_tol > 0.0)) throw ConfigError("gaussian: gradient_norm_tol must be positive");
  if (!(object_regularization > 0.0)) throw ConfigError("gaussian: object_regularization must be positive");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) throw ConfigError("gaussian: backtrack_factor must be in (0, 1)");
  if (max_backtracks < 1) throw ConfigError("gaussian: max_backtracks must be >= 1");
}

double gaussian_reduced_value(std::span<const ComplexField> data_spectra, std::span<const ComplexField> otfs,
                              double eps) {
  if (data_spectra.size() != otfs.size() || data_spectra.empty()) {
    throw std::invalid_argument("gaussian_reduced_value: one OTF per image required");
  }
  const auto rows = data_spectra[0].rows();
  const auto cols = data_spectra[0].cols();
  ComplexField q = ComplexField::Zero(rows, cols);
  RealField w = RealField::Constant(rows, cols, eps);
  RealField energy = RealField::Zero(rows, cols);
  for (std::size_t k = 0; k < otfs.size(); ++k) {
    q += data_spectra[k] * otfs[k].conjugate();
    w += otfs[k].abs2();
    energy += data_spectra[k].abs2();
  }
  const double n2 = static_cast<double>(rows) * cols;
  return -(energy - q.abs2() / w).sum() / n2;
}

ComplexField gaussian_object_spectrum(std::span<const ComplexField> data_spectra, std::span<const ComplexField> otfs,
                                      double eps) {
  if (data_spectra.size() != otfs.size() || data_spectra.empty()) {
    throw std::invalid_argument("gaussian_object_spectrum: one OTF per image required");
  }
  ComplexField q = ComplexField::Zero(data_spectra[0].rows(), data_spectra[0].cols());
  RealField w = RealField::Constant(q.rows(), q.cols(), eps);
  for (std::size_t k = 0; k < otfs.size(); ++k) {
    q += data_spectra[k] * otfs[k].conjugate();
    w += otfs[k].abs2();
  }
  return q / w.cast<std::complex<double>>();
}

std::vector<ComplexField> gaussian_data_spectra(const DiversityStack& stack, const GaussianOptions& opts) {
  std::vector<ComplexField> out;
  const RealField taper = edge_taper_window(static_cast<int>(stack.images.at(0).rows()), opts.edge_taper);
  for (const auto& im : stack.images) {
    RealField d = opts.subtract_mean ? RealField(im - im.mean()) : im;
    out.push_back(fft::forward(RealField(d * taper)));
  }
  return out;
}

RealField edge_taper_window(int n, double fraction) {
  if (fraction < 0.0 || fraction > 0.5) throw ConfigError("edge taper fraction must lie in [0, 0.5]");
  std::vector<double> w(n, 1.0);
  const double width = fraction * n;
  for (int i = 0; i < n; ++i) {
    const double d = std::min(i + 0.5, n - i - 0.5);
    if (d < width) w[i] = 0.5 - 0.5 * std::cos(std::numbers::pi * d / width);
  }
  RealField out(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) out(r, c) = w[r] * w[c];
  }
  return out;
}

namespace {

class GaussianProblem {
 public:
  GaussianProblem(const DiversityStack& stack, const GaussianOptions& opts)
      : model_(stack.config, stack.diversity_z, opts.estimated_indices),
        data_(gaussian_data_spectra(stack, opts)),
        eps_(opts.object_regularization) {
    stack.validate();
    double energy = 0.0;
    for (const auto& d : data_) energy += d.abs2().sum();
    if (!(energy > 0.0)) throw std::domain_error("gaussian: stack carries no signal");
  }

  struct Eval {
    DiversityModel::Forward fwd;
    ComplexField object;  // closed-form object spectrum
    double value = 0.0;
  };

  const DiversityModel& model() const { return model_; }
  const std::vector<ComplexField>& data() const { return data_; }
  double n2() const { return static_cast<double>(model_.size()) * model_.size(); }

  Eval evaluate(std::span<const double> pupil_phase) const {
    Eval e;
    e.fwd = model_.forward(pupil_phase);
    e.value = gaussian_reduced_value(data_, e.fwd.otf, eps_);
    e.object = gaussian_object_spectrum(data_, e.fwd.otf, eps_);
    return e;
  }

  Eval evaluate(const ZernikeVector& c) const { return evaluate(model_.pupil_phase(c)); }

  std::vector<double> gradient(const Eval& e, std::span<const int> indices) const {
    std::vector<RealField> sens;
    for (std::size_t k = 0; k < data_.size(); ++k) {
      ComplexField a = e.object * (data_[k] - e.object * e.fwd.otf[k]).conjugate();
      fft::forward_inplace(a);
      sens.push_back(a.real() * (2.0 / n2()));
    }
    return model_.coefficient_gradient(e.fwd, sens, indices);
  }

  Eigen::MatrixXd pseudo_hessian(const Eval& e) const {
    const auto& idx = model_.indices();
    const std::size_t k_count = data_.size();
    RealField w = RealField::Constant(model_.size(), model_.size(), eps_);
    for (const auto& s : e.fwd.otf) w += s.abs2();
    const ComplexField f_over_w = e.object / w.cast<std::complex<double>>();

    std::vector<std::vector<ComplexField>> jac(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      std::vector<ComplexField> ds;
      ComplexField t = ComplexField::Zero(model_.size(), model_.size());
      for (std::size_t k = 0; k < k_count; ++k) {
        ds.push_back(fft::forward(model_.psf_derivative(e.fwd, static_cast<int>(k), idx[a])));
        t += e.fwd.otf[k].conjugate() * ds.back();
      }
      for (std::size_t k = 0; k < k_count; ++k) {
        jac[a].push_back(-(e.object * ds[k] - f_over_w * e.fwd.otf[k] * t));
      }
    }
    Eigen::MatrixXd h(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a; b < idx.size(); ++b) {
        double sum = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) sum += (jac[a][k].conjugate() * jac[b][k]).real().sum();
        h(a, b) = h(b, a) = 2.0 * sum;
      }
    }
    return h;
  }

 private:
  DiversityModel model_;
  std::vector<ComplexField> data_;
  double eps_;
};

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double reduced_objective(const ZernikeVector& c, const DiversityStack& stack, const GaussianOptions& opts) {
  return GaussianProblem(stack, opts).evaluate(c).value;
}

RealField closed_form_object(const ZernikeVector& c, const DiversityStack& stack, const GaussianOptions& opts) {
  GaussianProblem problem(stack, opts);
  auto e = problem.evaluate(c);
  if (opts.subtract_mean) {
    std::vector<ComplexField> raw;
    for (const auto& im : stack.images) raw.push_back(fft::forward(im));
    e.object(0, 0) = gaussian_object_spectrum(raw, e.fwd.otf, opts.object_regularization)(0, 0);
  }
  return fft::inverse_real(e.object);
}

std::vector<double> gaussian_gradient(const ZernikeVector& c, const DiversityStack& stack, const GaussianOptions& opts,
                                      std::span<const int> indices) {
  GaussianProblem problem(stack, opts);
  return problem.gradient(problem.evaluate(c), indices);
}

std::vector<double> gaussian_gradient(const ZernikeVector& c, const DiversityStack& stack,
                                      const GaussianOptions& opts) {
  return gaussian_gradient(c, stack, opts, opts.estimated_indices);
}

Eigen::MatrixXd gaussian_pseudo_hessian(const ZernikeVector& c, const DiversityStack& stack,
                                        const GaussianOptions& opts) {
  GaussianProblem problem(stack, opts);
  return problem.pseudo_hessian(problem.evaluate(c));
}

EstimationResult estimate_gaussian(const DiversityStack& stack, const GaussianOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  opts.validate();
  GaussianProblem problem(stack, opts);
  const auto& idx = opts.estimated_indices;
  const std::size_t n_coeffs = idx.size();

  Eigen::VectorXd coeffs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_coeffs), opts.initial_coeff);
  if (opts.initial) {
    for (std::size_t i = 0; i < n_coeffs; ++i) {
      const int j = opts.estimated_indices[i];
      if (opts.initial->contains(j)) coeffs[static_cast<Eigen::Index>(i)] = opts.initial->get(j);
    }
  }
  auto to_vector = [&](const Eigen::VectorXd& v) {
    ZernikeVector z;
    for (std::size_t i = 0; i < n_coeffs; ++i) z.set(idx[i], v(static_cast<Eigen::Index>(i)));
    return z;
  };

  EstimationResult result;
  result.estimator = "gaussian";
  auto current = problem.evaluate(to_vector(coeffs));
  auto grad = problem.gradient(current, idx);
  const double grad0 = norm(grad);
  result.trace.push_back({0, current.value, grad0, to_vector(coeffs)});

  int iter = 0;
  result.reason = "max_iterations";
  while (iter < opts.max_iterations) {
    const double gnorm = norm(grad);
    if (gnorm <= opts.gradient_norm_tol * grad0 || gnorm == 0.0) {
      result.converged = true;
      result.reason = "gradient_norm";
      break;
    }
    const Eigen::Map<const Eigen::VectorXd> g(grad.data(), static_cast<Eigen::Index>(n_coeffs));
    Eigen::MatrixXd h = problem.pseudo_hessian(current);
    // Newton step on L with the Gauss-Newton curvature -H / N^2.
    Eigen::VectorXd step;
    double damping = 0.0;
    const double scale = h.diagonal().cwiseAbs().maxCoeff();
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd hd = h;
      hd.diagonal().array() += damping;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hd);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = ldlt.solve(g * problem.n2());
        if (step.allFinite() && step.dot(g) > 0.0) break;
      }
      step.resize(0);
      damping = damping == 0.0 ? 1e-10 * std::max(scale, 1e-300) : damping * 100.0;
    }
    if (step.size() == 0) step = g / std::max(scale, 1e-300) * problem.n2();

    const double slope = step.dot(g);
    double t = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      Eigen::VectorXd trial = coeffs + t * step;
      auto candidate = problem.evaluate(to_vector(trial));
      if (std::isfinite(candidate.value) && candidate.value >= current.value + opts.armijo * t * slope) {
        coeffs = trial;
        current = std::move(candidate);
        accepted = true;
        break;
      }
      t *= opts.backtrack_factor;
    }
    ++iter;
    if (!accepted) {
      result.reason = "line_search_failed";
      break;
    }
    grad = problem.gradient(current, idx);
    result.trace.push_back({iter, current.value, norm(grad), to_vector(coeffs)});
    if ((t * step).norm() < opts.step_tol) {
      result.converged = true;
      result.reason = "step_size";
      break;
    }
  }

  result.iterations = iter;
  result.coeffs = to_vector(coeffs);
  RealField object = closed_form_object(result.coeffs, stack, opts);
  result.object_estimate = object.max(0.0);
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace phasediv
