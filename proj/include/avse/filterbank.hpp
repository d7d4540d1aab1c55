#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "avse/error.hpp"
#include "avse/matrix.hpp"

namespace avse {

inline double hz_to_mel(double hz) {
  require(hz >= 0.0, ErrorKind::InvalidArgument, "frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  require(mel >= 0.0, ErrorKind::InvalidArgument, "mel value must be non-negative");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Solves A X = B for square A by Gaussian elimination with partial pivoting.
// Pivots below `singular_tol` in magnitude are reported as singular.
inline Matrix solve_gaussian(Matrix a, Matrix b, double singular_tol = 1e-12) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n && b.rows() == n, ErrorKind::ShapeMismatch, "solve_gaussian: incompatible shapes");
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < singular_tol)
      fail(ErrorKind::Numeric, "singular matrix at column " + std::to_string(col));
    if (pivot != col) {
      a.row(col).swap(a.row(pivot));
      b.row(col).swap(b.row(pivot));
    }
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      a.row(r).tail(n - col) -= f * a.row(col).tail(n - col);
      b.row(r) -= f * b.row(col);
    }
  }
  Matrix x(n, b.cols());
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    RowVector acc = b.row(r);
    for (Eigen::Index c = r + 1; c < n; ++c) acc -= a(r, c) * x.row(c);
    x.row(r) = acc / a(r, r);
  }
  return x;
}

struct MelFilterbank {
  Matrix phi;                      // K x M, column m is the m-th triangle
  std::vector<std::size_t> boundaries;  // M + 2 bin indices
  Matrix alpha;                    // M x K, (phi^T phi)^-1 phi^T
  int sample_rate = 0;
  std::size_t fft_len = 0;

  std::size_t channels() const { return static_cast<std::size_t>(phi.cols()); }
  std::size_t bins() const { return static_cast<std::size_t>(phi.rows()); }
};

// Boundary bin for a frequency: round-half-up of (fft_len / sample_rate) * f.
inline std::size_t boundary_bin(double hz, std::size_t fft_len, int sample_rate) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(fft_len) / sample_rate * hz + 0.5));
}

inline MelFilterbank build_filterbank(std::size_t channels, std::size_t fft_len, int sample_rate, double f_low,
                                      double f_high) {
  require(channels >= 2, ErrorKind::InvalidArgument, "filterbank needs at least 2 channels");
  require(sample_rate > 0 && fft_len >= 2, ErrorKind::InvalidArgument, "invalid sample rate or fft length");
  require(f_low >= 0.0 && f_low < f_high && f_high <= sample_rate / 2.0, ErrorKind::InvalidArgument,
          "band edges must satisfy 0 <= f_low < f_high <= sample_rate / 2");

  MelFilterbank fb;
  fb.sample_rate = sample_rate;
  fb.fft_len = fft_len;
  const std::size_t bins = fft_len / 2 + 1;
  const double mel_lo = hz_to_mel(f_low), mel_hi = hz_to_mel(f_high);
  fb.boundaries.resize(channels + 2);
  for (std::size_t i = 0; i < channels + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(channels + 1);
    fb.boundaries[i] = std::min(boundary_bin(mel_to_hz(mel), fft_len, sample_rate), bins - 1);
  }
  for (std::size_t i = 1; i < fb.boundaries.size(); ++i)
    if (fb.boundaries[i] <= fb.boundaries[i - 1])
      fail(ErrorKind::InvalidArgument, "degenerate filterbank at channel " +
                                           std::to_string(std::min(i, channels)) + ": boundary points " +
                                           std::to_string(i - 1) + " and " + std::to_string(i) +
                                           " both round to bin " + std::to_string(fb.boundaries[i]));

  fb.phi = Matrix::Zero(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(channels));
  for (std::size_t m = 0; m < channels; ++m) {
    const double lo = static_cast<double>(fb.boundaries[m]);
    const double mid = static_cast<double>(fb.boundaries[m + 1]);
    const double hi = static_cast<double>(fb.boundaries[m + 2]);
    for (std::size_t k = fb.boundaries[m]; k <= fb.boundaries[m + 2]; ++k) {
      const double kk = static_cast<double>(k);
      fb.phi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) =
          kk <= mid ? (kk - lo) / (mid - lo) : (hi - kk) / (hi - mid);
    }
  }
  const Matrix gram = fb.phi.transpose() * fb.phi;
  fb.alpha = solve_gaussian(gram, fb.phi.transpose());
  return fb;
}

inline MelFilterbank build_filterbank(std::size_t channels, std::size_t fft_len, int sample_rate) {
  return build_filterbank(channels, fft_len, sample_rate, 0.0, sample_rate / 2.0);
}

enum class FeatureKind : std::uint32_t { LogFbAudio = 0, LinearFbAudio = 1, Visual = 2 };

inline constexpr double kFeatureFloor = 1e-10;

struct FeatureSequence {
  Matrix vectors;  // T x dim
  FeatureKind kind = FeatureKind::LogFbAudio;
  double frame_rate = 100.0;

  std::size_t frames() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }

  void validate() const {
    require(vectors.cols() > 0, ErrorKind::InvalidArgument, "feature dimension must be positive");
    require(vectors.allFinite(), ErrorKind::Numeric, "features contain non-finite values");
  }
};

// Linear filterbank energies: one row per frame, p * phi.
inline Matrix apply_linear_fb(const Matrix& power_frames, const MelFilterbank& fb) {
  require(static_cast<std::size_t>(power_frames.cols()) == fb.bins(), ErrorKind::ShapeMismatch,
          "power spectrum has " + std::to_string(power_frames.cols()) + " bins, filterbank expects " +
              std::to_string(fb.bins()));
  return power_frames * fb.phi;
}

inline FeatureSequence apply_logfb(const Matrix& power_frames, const MelFilterbank& fb, double frame_rate = 100.0) {
  Matrix f = apply_linear_fb(power_frames, fb);
  f = f.unaryExpr([](double v) { return std::log(std::max(v, kFeatureFloor)); });
  return {std::move(f), FeatureKind::LogFbAudio, frame_rate};
}

// Linear-domain view of audio filterbank features (exp for log features).
inline Matrix linear_features(const FeatureSequence& features) {
  require(features.kind != FeatureKind::Visual, ErrorKind::InvalidArgument, "visual features have no power domain");
  if (features.kind == FeatureKind::LogFbAudio) return features.vectors.array().exp().matrix();
  return features.vectors;
}

// Maps filterbank energies back onto spectral bins through the pseudo-inverse,
// p_hat = f * alpha, before flooring negatives at 1e-10.
inline Matrix lift_unfloored(const Matrix& linear, const MelFilterbank& fb) {
  require(static_cast<std::size_t>(linear.cols()) == fb.channels(), ErrorKind::ShapeMismatch,
          "features have " + std::to_string(linear.cols()) + " channels, filterbank has " +
              std::to_string(fb.channels()));
  return linear * fb.alpha;
}

inline Matrix lift(const FeatureSequence& features, const MelFilterbank& fb) {
  const Matrix p = lift_unfloored(linear_features(features), fb);
  return p.cwiseMax(kFeatureFloor);
}

}  // namespace avse
