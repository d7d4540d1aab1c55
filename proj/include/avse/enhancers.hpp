#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "avse/filterbank.hpp"
#include "avse/signal.hpp"

namespace avse {

using WarningSink = std::function<void(std::string_view)>;

// ---------------------------------------------------------------------------
// Filterbank-domain Wiener filter driven by estimated clean features
// ---------------------------------------------------------------------------

struct EvwfConfig {
  double gain_floor = 0.0;
  double gain_ceiling = 1.0;
  double feature_floor = kFeatureFloor;

  void validate() const {
    require(gain_ceiling == 1.0, ErrorKind::InvalidArgument, "gain ceiling is fixed at 1");
    require(gain_floor >= 0.0 && gain_floor < gain_ceiling, ErrorKind::InvalidArgument,
            "gain floor must lie in [0, 1)");
    require(feature_floor > 0.0, ErrorKind::InvalidArgument, "feature floor must be positive");
  }
};

// g = x_hat / y per channel, where y is the noisy filterbank power standing in
// for x_hat + n_hat. Clamped into [gain_floor, 1].
inline Vector evwf_gain(const Vector& clean_fb, const Vector& noisy_fb, const EvwfConfig& cfg) {
  cfg.validate();
  require(clean_fb.size() == noisy_fb.size(), ErrorKind::ShapeMismatch, "evwf_gain: dimension mismatch");
  Vector g(clean_fb.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double x = std::max(clean_fb(k), cfg.feature_floor);
    const double y = std::max(noisy_fb(k), cfg.feature_floor);
    g(k) = std::clamp(x / y, cfg.gain_floor, cfg.gain_ceiling);
  }
  return g;
}

// Channel whose centre bin is closest to each spectral bin.
inline std::vector<Eigen::Index> nearest_channel(const MelFilterbank& fb) {
  std::vector<Eigen::Index> out(fb.bins());
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < fb.channels(); ++m) {
      const auto dist = [&](std::size_t c) {
        const std::size_t centre = fb.boundaries[c + 1];
        return centre > k ? centre - k : k - centre;
      };
      if (dist(m) < dist(best)) best = m;
    }
    out[k] = static_cast<Eigen::Index>(best);
  }
  return out;
}

// Spectral-bin gains: both the clean estimate and the noisy filterbank power
// are lifted to K bins through the pseudo-inverse and their quotient clamped.
// Where the lifted noisy power is not positive (outside every triangle, or
// pseudo-inverse ringing) the quotient is undefined and the filterbank-domain
// gain of the nearest channel is used instead.
inline Matrix evwf_bin_gains(const Matrix& clean_linear, const Matrix& noisy_linear, const MelFilterbank& fb,
                             const EvwfConfig& cfg) {
  cfg.validate();
  require(clean_linear.rows() == noisy_linear.rows() && clean_linear.cols() == noisy_linear.cols(),
          ErrorKind::ShapeMismatch, "evwf: clean and noisy feature shapes differ");
  const Matrix clean = clean_linear.cwiseMax(cfg.feature_floor);
  const Matrix noisy = noisy_linear.cwiseMax(cfg.feature_floor);
  const Matrix num = lift_unfloored(clean, fb).cwiseMax(cfg.feature_floor);
  const Matrix den = lift_unfloored(noisy, fb);
  const std::vector<Eigen::Index> nearest = nearest_channel(fb);
  Matrix gains(num.rows(), num.cols());
  for (Eigen::Index t = 0; t < gains.rows(); ++t) {
    const Vector fb_gain = evwf_gain(clean.row(t).transpose(), noisy.row(t).transpose(), cfg);
    for (Eigen::Index k = 0; k < gains.cols(); ++k)
      gains(t, k) = den(t, k) > cfg.feature_floor
                        ? std::clamp(num(t, k) / den(t, k), cfg.gain_floor, cfg.gain_ceiling)
                        : fb_gain(nearest[static_cast<std::size_t>(k)]);
  }
  return gains;
}

inline AudioSignal evwf_enhance(const AudioSignal& noisy, const FeatureSequence& estimated, const MelFilterbank& fb,
                                const StftConfig& stft_cfg, const EvwfConfig& cfg, const WarningSink& warn = {}) {
  cfg.validate();
  require(fb.fft_len == stft_cfg.fft_len, ErrorKind::InvalidArgument,
          "filterbank built for fft length " + std::to_string(fb.fft_len) + ", stft uses " +
              std::to_string(stft_cfg.fft_len));
  require(fb.sample_rate == noisy.sample_rate, ErrorKind::InvalidArgument,
          "filterbank sample rate does not match the noisy signal");
  require(estimated.dim() == fb.channels(), ErrorKind::ShapeMismatch,
          "estimated features have " + std::to_string(estimated.dim()) + " channels, filterbank has " +
              std::to_string(fb.channels()));

  ComplexSpectra spectra = stft(noisy, stft_cfg);
  const std::size_t t_stft = spectra.frame_count(), t_feat = estimated.frames();
  const std::size_t diff = t_stft > t_feat ? t_stft - t_feat : t_feat - t_stft;
  require(diff <= 1, ErrorKind::ShapeMismatch,
          "feature frames (" + std::to_string(t_feat) + ") and stft frames (" + std::to_string(t_stft) +
              ") differ by more than one");
  const std::size_t frames = std::min(t_stft, t_feat);
  require(frames > 0, ErrorKind::InvalidArgument, "no frames to enhance");
  if (diff == 1 && warn)
    warn("feature/stft frame counts differ by one (" + std::to_string(t_feat) + " vs " + std::to_string(t_stft) +
         "); truncating to " + std::to_string(frames));
  if (t_stft != frames) spectra.frames.conservativeResize(static_cast<Eigen::Index>(frames), Eigen::NoChange);

  const Matrix noisy_fb = apply_linear_fb(power_spectrum(spectra), fb);
  const Matrix clean_fb = linear_features(estimated).topRows(static_cast<Eigen::Index>(frames));
  const Matrix gains = evwf_bin_gains(clean_fb, noisy_fb, fb, cfg);
  return istft(apply_gain(spectra, gains), noisy.size());
}

// ---------------------------------------------------------------------------
// Classical baselines
// ---------------------------------------------------------------------------

inline RowVector noise_estimate_initial(const Matrix& power_frames, std::size_t init_frames) {
  require(init_frames >= 1, ErrorKind::InvalidArgument, "need at least one noise frame");
  require(static_cast<std::size_t>(power_frames.rows()) >= init_frames, ErrorKind::InvalidArgument,
          "too few frames for the initial noise estimate (" + std::to_string(power_frames.rows()) + " < " +
              std::to_string(init_frames) + ")");
  return power_frames.topRows(static_cast<Eigen::Index>(init_frames)).colwise().mean();
}

struct SsConfig {
  std::size_t init_frames = 6;
  double oversub = 1.0;   // beta
  double floor = 0.002;   // lambda

  void validate() const {
    require(init_frames >= 1, ErrorKind::InvalidArgument, "init_frames must be >= 1");
    require(oversub >= 1.0, ErrorKind::InvalidArgument, "over-subtraction factor must be >= 1");
    require(floor > 0.0 && floor < 1.0, ErrorKind::InvalidArgument, "spectral floor must lie in (0, 1)");
  }
};

// Power subtraction: |X|^2 = max(|Y|^2 - beta N, lambda |Y|^2), noisy phase kept.
inline ComplexSpectra spectral_subtract_spectra(const ComplexSpectra& noisy, const RowVector& noise_power,
                                                const SsConfig& cfg) {
  cfg.validate();
  require(static_cast<std::size_t>(noise_power.size()) == noisy.bins(), ErrorKind::ShapeMismatch,
          "noise estimate bin count mismatch");
  const Matrix p = power_spectrum(noisy);
  Matrix mag(p.rows(), p.cols());
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    for (Eigen::Index k = 0; k < p.cols(); ++k)
      mag(t, k) = std::sqrt(std::max(p(t, k) - cfg.oversub * noise_power(k), cfg.floor * p(t, k)));
  return with_magnitude(noisy, mag);
}

inline AudioSignal spectral_subtract(const AudioSignal& noisy, const SsConfig& cfg, const StftConfig& stft_cfg) {
  cfg.validate();
  require(noisy.size() >= cfg.init_frames * stft_cfg.hop + stft_cfg.frame_len, ErrorKind::InvalidArgument,
          "signal too short for spectral subtraction noise estimate");
  const ComplexSpectra spectra = stft(noisy, stft_cfg);
  const RowVector noise = noise_estimate_initial(power_spectrum(spectra), cfg.init_frames);
  return istft(spectral_subtract_spectra(spectra, noise, cfg), noisy.size());
}

// Exponential integral E1(x) = int_x^inf e^-t / t dt: power series for x <= 1,
// Lentz continued fraction above.
inline double expint_e1(double x) {
  require(x > 0.0, ErrorKind::InvalidArgument, "E1 requires x > 0");
  constexpr double kEps = 1e-16;
  if (x <= 1.0) {
    double sum = 0.0, term = 1.0;
    for (int k = 1; k < 200; ++k) {
      term *= -x / k;
      const double add = term / k;
      sum += add;
      if (std::abs(add) < kEps * std::abs(sum)) break;
    }
    return -std::numbers::egamma - std::log(x) - sum;
  }
  constexpr double kTiny = 1e-300;
  double b = x + 1.0, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x);
}

struct LmmseConfig {
  std::size_t init_frames = 6;
  double dd_alpha = 0.98;
  double xi_min = 0.0031622776601683794;  // -25 dB

  void validate() const {
    require(init_frames >= 1, ErrorKind::InvalidArgument, "init_frames must be >= 1");
    require(dd_alpha > 0.0 && dd_alpha < 1.0, ErrorKind::InvalidArgument, "dd_alpha must lie in (0, 1)");
    require(xi_min > 0.0, ErrorKind::InvalidArgument, "xi_min must be positive");
  }
};

inline constexpr double kLmmseNoiseFloor = 1e-20;
inline constexpr double kLmmseMinV = 1e-10;

// G = xi / (1 + xi) * exp(E1(v) / 2), v = xi gamma / (1 + xi).
inline double logmmse_gain(double xi, double gamma) {
  const double ratio = xi / (1.0 + xi);
  const double v = std::max(ratio * gamma, kLmmseMinV);
  return ratio * std::exp(0.5 * expint_e1(v));
}

// Log-spectral amplitude gains with decision-directed a priori SNR. The
// previous-frame term G^2 gamma starts at 1 for the first frame.
inline Matrix logmmse_gains(const Matrix& power_frames, const RowVector& noise_power, const LmmseConfig& cfg) {
  cfg.validate();
  require(noise_power.size() == power_frames.cols(), ErrorKind::ShapeMismatch, "noise estimate bin count mismatch");
  Matrix gains(power_frames.rows(), power_frames.cols());
  RowVector prev = RowVector::Ones(power_frames.cols());
  for (Eigen::Index t = 0; t < power_frames.rows(); ++t) {
    for (Eigen::Index k = 0; k < power_frames.cols(); ++k) {
      const double gamma = power_frames(t, k) / std::max(noise_power(k), kLmmseNoiseFloor);
      const double xi = std::max(cfg.dd_alpha * prev(k) + (1.0 - cfg.dd_alpha) * std::max(gamma - 1.0, 0.0), cfg.xi_min);
      const double g = logmmse_gain(xi, gamma);
      gains(t, k) = g;
      prev(k) = g * g * gamma;
    }
  }
  return gains;
}

inline AudioSignal logmmse(const AudioSignal& noisy, const LmmseConfig& cfg, const StftConfig& stft_cfg) {
  cfg.validate();
  require(noisy.size() >= cfg.init_frames * stft_cfg.hop + stft_cfg.frame_len, ErrorKind::InvalidArgument,
          "signal too short for log-MMSE noise estimate");
  const ComplexSpectra spectra = stft(noisy, stft_cfg);
  const Matrix power = power_spectrum(spectra);
  const RowVector noise = noise_estimate_initial(power, cfg.init_frames);
  return istft(apply_gain(spectra, logmmse_gains(power, noise, cfg)), noisy.size());
}

}  // namespace avse
