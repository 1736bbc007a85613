#pragma once

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace bss::detail {

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex / complex-to-real FFT of a fixed size. Plan creation is
/// serialized (FFTW planning is not thread-safe); execution on the owned
/// buffers is not, so use one instance per thread.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n), real_(n), cplx_(n / 2 + 1) {
    if (n <= 0) throw std::invalid_argument("RealFft: size must be positive");
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n_, real_.data(),
                                reinterpret_cast<fftw_complex*>(cplx_.data()),
                                FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n_, reinterpret_cast<fftw_complex*>(cplx_.data()),
                                real_.data(), FFTW_ESTIMATE);
    if (!fwd_ || !inv_) throw std::runtime_error("RealFft: plan creation failed");
  }

  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// In: real_ (n values). Out: cplx_ (n/2+1 one-sided bins).
  void forward() { fftw_execute(fwd_); }
  /// In: cplx_. Out: real_, scaled by n (FFTW convention); caller divides.
  /// Destroys cplx_.
  void inverse() { fftw_execute(inv_); }

  std::vector<double>& real_buf() { return real_; }
  std::vector<std::complex<double>>& cplx_buf() { return cplx_; }

 private:
  int n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> cplx_;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace bss::detail
