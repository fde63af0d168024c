#include "phasediv/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace phasediv::fft {
namespace {

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  // sign: FFTW_FORWARD / FFTW_BACKWARD for c2c, kR2C / kC2R for the real transforms.
  static constexpr int kR2C = 2;
  static constexpr int kC2R = 3;

  fftw_plan get(int rows, int cols, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(rows, cols, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    // FFTW_UNALIGNED: Eigen only guarantees 16-byte alignment, and plans are
    // executed on arbitrary arrays through the new-array execute functions.
    constexpr unsigned kFlags = FFTW_MEASURE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    if (sign == kR2C || sign == kC2R) {
      RealField real(rows, cols);
      ComplexField half(rows, cols / 2 + 1);
      auto* hdata = reinterpret_cast<fftw_complex*>(half.data());
      plan = sign == kR2C ? fftw_plan_dft_r2c_2d(rows, cols, real.data(), hdata, kFlags)
                          : fftw_plan_dft_c2r_2d(rows, cols, hdata, real.data(), kFlags);
    } else {
      ComplexField scratch(rows, cols);
      auto* data = reinterpret_cast<fftw_complex*>(scratch.data());
      plan = fftw_plan_dft_2d(rows, cols, data, data, sign, kFlags);
    }
    if (plan == nullptr) throw std::runtime_error("fftw: plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

void execute(ComplexField& field, int sign) {
  if (field.size() == 0) return;
  fftw_plan plan = cache().get(static_cast<int>(field.rows()), static_cast<int>(field.cols()), sign);
  auto* data = reinterpret_cast<fftw_complex*>(field.data());
  fftw_execute_dft(plan, data, data);
}

}  // namespace

void forward_inplace(ComplexField& field) { execute(field, FFTW_FORWARD); }

void inverse_inplace(ComplexField& field) {
  execute(field, FFTW_BACKWARD);
  field /= static_cast<double>(field.size());
}

ComplexField forward(const ComplexField& field) {
  ComplexField out = field;
  forward_inplace(out);
  return out;
}

ComplexField forward(const RealField& field) {
  ComplexField out = field.cast<std::complex<double>>();
  forward_inplace(out);
  return out;
}

ComplexField forward_half(const RealField& field) {
  const int rows = static_cast<int>(field.rows());
  const int cols = static_cast<int>(field.cols());
  ComplexField half(rows, cols / 2 + 1);
  if (field.size() == 0) return half;
  fftw_plan plan = cache().get(rows, cols, PlanCache::kR2C);
  RealField input = field;  // r2c may not preserve its input for multi-dimensional transforms
  fftw_execute_dft_r2c(plan, input.data(), reinterpret_cast<fftw_complex*>(half.data()));
  return half;
}

RealField inverse_half(const ComplexField& half, int cols) {
  const int rows = static_cast<int>(half.rows());
  if (half.cols() != cols / 2 + 1) throw std::invalid_argument("inverse_half: spectrum width mismatch");
  RealField out(rows, cols);
  if (out.size() == 0) return out;
  fftw_plan plan = cache().get(rows, cols, PlanCache::kC2R);
  ComplexField input = half;  // c2r destroys its input
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(input.data()), out.data());
  out /= static_cast<double>(rows) * cols;
  return out;
}

ComplexField inverse(const ComplexField& field) {
  ComplexField out = field;
  inverse_inplace(out);
  return out;
}

RealField inverse_real(const ComplexField& spectrum) {
  ComplexField out = spectrum;
  inverse_inplace(out);
  return out.real();
}

RealField convolve(const RealField& a, const RealField& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("convolve: shape mismatch");
  }
  ComplexField fa = forward_half(a);
  fa *= forward_half(b);
  return inverse_half(fa, static_cast<int>(a.cols()));
}

}  // namespace phasediv::fft
