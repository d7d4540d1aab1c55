#pragma once

// Test-only signal generators and independent oracles.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "avse/rng.hpp"
#include "avse/signal.hpp"

namespace avse::testing {

inline AudioSignal white_noise(std::size_t n, std::uint64_t seed, double std_dev = 0.1, int rate = 50000) {
  Rng rng(seed);
  AudioSignal s{std::vector<double>(n), rate};
  for (double& v : s.samples) v = std_dev * rng.normal();
  return s;
}

// Voiced "syllables": harmonic tones with a drifting pitch and formant-shaped
// harmonic amplitudes under a raised-cosine envelope, separated by silences.
// Starts with `lead_silence` seconds of silence.
inline AudioSignal speech_like(double seconds, std::uint64_t seed, int rate = 50000, double lead_silence = 0.15) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(seconds * rate);
  AudioSignal s{std::vector<double>(n, 0.0), rate};
  std::size_t pos = static_cast<std::size_t>(lead_silence * rate);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.30) * rate);
    const double f0 = rng.uniform(100.0, 220.0);
    const double drift = rng.uniform(-0.3, 0.3);
    const double f1 = rng.uniform(300.0, 900.0), f2 = rng.uniform(900.0, 2500.0), f3 = rng.uniform(2500.0, 3500.0);
    const double amp = rng.uniform(0.1, 0.3);
    double phase = 0.0;
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
      const double f = f0 * (1.0 + drift * u);
      phase += 2.0 * std::numbers::pi * f / rate;
      double v = 0.0;
      for (int h = 1; f * h < 5000.0; ++h) {
        const double fh = f * h;
        auto res = [&](double fc, double bw) { return 1.0 / (1.0 + std::pow((fh - fc) / bw, 2.0)); };
        const double a = res(f1, 120.0) + 0.6 * res(f2, 180.0) + 0.3 * res(f3, 250.0) + 0.02;
        v += a * std::sin(h * phase);
      }
      s.samples[pos + i] = amp * env * v;
    }
    pos += len + static_cast<std::size_t>(rng.uniform(0.05, 0.15) * rate);
  }
  return s;
}

// Direct O(N^2) one-sided DFT of a zero-padded frame.
inline std::vector<std::complex<double>> brute_dft(const std::vector<double>& frame, std::size_t n) {
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < frame.size() && i < n; ++i)
      acc += frame[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

// Adaptive Simpson quadrature.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 50) {
  auto simpson = [&](double lo, double hi, double flo, double fmid, double fhi) {
    return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  };
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, double eps, int d) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(lo, mid, flo, flm, fmid), right = simpson(mid, hi, fmid, frm, fhi);
    if (d <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return rec(lo, mid, flo, flm, fmid, left, eps / 2.0, d - 1) + rec(mid, hi, fmid, frm, fhi, right, eps / 2.0, d - 1);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth);
}

// E1(x) by quadrature: substitute t = x + u / (1 - u) on [0, 1).
inline double e1_quadrature(double x) {
  auto g = [x](double u) {
    if (u >= 1.0) return 0.0;
    const double t = x + u / (1.0 - u);
    return std::exp(-t) / t / ((1.0 - u) * (1.0 - u));
  };
  return adaptive_simpson(g, 0.0, 1.0 - 1e-12, 1e-13);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t lo, std::size_t hi) {
  double m = 0.0;
  for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace avse::testing
