#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <fftw3.h>

namespace asdl {

// Real FFT engine with fixed internal buffers. Plans are created once per
// instance and executed on the same storage every time, which keeps FFTW
// output bitwise reproducible run to run.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }

  // real[n] -> complex[n/2 + 1]
  void forward(const double* in, std::complex<double>* out);

  // complex[n/2 + 1] -> real[n], scaled by 1/n so that a flat unit spectrum
  // inverts to a unit impulse.
  void inverse(const std::complex<double>* in, double* out);

 private:
  int n_;
  double* real_buf_;
  fftw_complex* complex_buf_;
  fftw_plan forward_plan_;
  fftw_plan inverse_plan_;
};

}  // namespace asdl
