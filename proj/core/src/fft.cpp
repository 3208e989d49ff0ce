#include "fft.hpp"

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace asdl {

namespace {
// FFTW plan creation is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  if (n <= 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("RealFft size must be a positive power of two");
  }
  real_buf_ = fftw_alloc_real(static_cast<std::size_t>(n));
  complex_buf_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  std::lock_guard<std::mutex> lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_r2c_1d(n, real_buf_, complex_buf_, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(n, complex_buf_, real_buf_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(forward_plan_);
  fftw_destroy_plan(inverse_plan_);
  fftw_free(real_buf_);
  fftw_free(complex_buf_);
}

void RealFft::forward(const double* in, std::complex<double>* out) {
  std::memcpy(real_buf_, in, sizeof(double) * static_cast<std::size_t>(n_));
  fftw_execute(forward_plan_);
  std::memcpy(out, complex_buf_, sizeof(fftw_complex) * static_cast<std::size_t>(n_ / 2 + 1));
}

void RealFft::inverse(const std::complex<double>* in, double* out) {
  std::memcpy(complex_buf_, in, sizeof(fftw_complex) * static_cast<std::size_t>(n_ / 2 + 1));
  fftw_execute(inverse_plan_);
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] = real_buf_[i] * scale;
}

}  // namespace asdl
