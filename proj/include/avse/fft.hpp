#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>

#include "avse/error.hpp"

namespace avse {

// One-sided real FFT of a fixed length, backed by FFTW. Instances own their
// buffers; use RealFft::for_length() to get a per-thread cached instance.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    require(n >= 2, ErrorKind::InvalidArgument, "fft length must be >= 2");
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_, time_, FFTW_ESTIMATE);
  }

  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t length() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in.size() <= n; the rest is zero-padded. out.size() == bins().
  void forward(std::span<const double> in, std::span<std::complex<double>> out) {
    for (std::size_t i = 0; i < n_; ++i) time_[i] = i < in.size() ? in[i] : 0.0;
    fftw_execute(forward_);
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {freq_[k][0], freq_[k][1]};
  }

  // Unnormalized by FFTW; this divides by n so inverse(forward(x)) == x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    for (std::size_t k = 0; k < bins(); ++k) {
      freq_[k][0] = in[k].real();
      freq_[k][1] = in[k].imag();
    }
    fftw_execute(inverse_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < out.size() && i < n_; ++i) out[i] = time_[i] * scale;
  }

  static RealFft& for_length(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<RealFft>(n);
    return *slot;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace avse
