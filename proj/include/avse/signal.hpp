#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "avse/error.hpp"
#include "avse/fft.hpp"
#include "avse/matrix.hpp"

namespace avse {

struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = 50000;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate() const {
    require(sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
    for (double s : samples) require(std::isfinite(s), ErrorKind::Numeric, "audio contains non-finite samples");
  }
};

// w[i] = 0.54 - 0.46 cos(2 pi i / (n - 1))
inline std::vector<double> hamming_window(std::size_t n) {
  require(n >= 2, ErrorKind::InvalidArgument, "hamming window length must be >= 2");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / denom);
  // force exact symmetry
  for (std::size_t i = 0; i < n / 2; ++i) w[n - 1 - i] = w[i];
  return w;
}

struct StftConfig {
  std::size_t frame_len = 800;
  std::size_t hop = 500;
  std::size_t fft_len = 2048;
  std::vector<double> window = hamming_window(800);

  std::size_t bins() const { return fft_len / 2 + 1; }

  void validate() const {
    require(hop > 0 && hop <= frame_len && frame_len <= fft_len, ErrorKind::InvalidArgument,
            "stft config requires 0 < hop <= frame_len <= fft_len");
    require(window.size() == frame_len, ErrorKind::InvalidArgument, "window length must equal frame_len");
    for (double w : window) require(w > 0.0 && w <= 1.0, ErrorKind::InvalidArgument, "window values must lie in (0, 1]");
  }

  // 16 ms Hamming frames, 10 ms hop, transform length 2048 (or the next power
  // of two when the frame is longer).
  static StftConfig for_rate(int sample_rate, double frame_ms = 16.0, double hop_ms = 10.0, std::size_t fft_len = 2048) {
    require(sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
    StftConfig c;
    c.frame_len = static_cast<std::size_t>(std::lround(frame_ms * 1e-3 * sample_rate));
    c.hop = static_cast<std::size_t>(std::lround(hop_ms * 1e-3 * sample_rate));
    require(c.frame_len >= 2 && c.hop >= 1, ErrorKind::InvalidArgument, "sample rate too low for the framing");
    c.fft_len = fft_len;
    while (c.fft_len < c.frame_len) c.fft_len *= 2;
    c.window = hamming_window(c.frame_len);
    c.validate();
    return c;
  }

  static StftConfig rectangular(std::size_t frame_len, std::size_t hop, std::size_t fft_len) {
    StftConfig c{frame_len, hop, fft_len, std::vector<double>(frame_len, 1.0)};
    c.validate();
    return c;
  }

  std::size_t frame_count(std::size_t len) const { return len < frame_len ? 0 : (len - frame_len) / hop + 1; }
};

struct ComplexSpectra {
  ComplexMatrix frames;  // T x (fft_len/2 + 1)
  StftConfig config;
  int sample_rate = 50000;

  std::size_t frame_count() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(frames.cols()); }
};

inline ComplexSpectra stft(const AudioSignal& signal, const StftConfig& config) {
  config.validate();
  require(signal.size() >= config.frame_len, ErrorKind::InvalidArgument,
          "signal shorter than one frame (" + std::to_string(signal.size()) + " < " +
              std::to_string(config.frame_len) + " samples)");
  const std::size_t frames = config.frame_count(signal.size());
  ComplexSpectra out{ComplexMatrix(frames, config.bins()), config, signal.sample_rate};
  RealFft& fft = RealFft::for_length(config.fft_len);
  std::vector<double> buf(config.frame_len);
  std::vector<std::complex<double>> spec(config.bins());
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * config.hop;
    for (std::size_t i = 0; i < config.frame_len; ++i) buf[i] = signal.samples[start + i] * config.window[i];
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) out.frames(t, k) = spec[k];
  }
  return out;
}

// Weighted overlap-add: every inverse frame is windowed again and the sum is
// divided by the accumulated squared window (floored at 1e-12). A nonzero
// `length` pads (with zeros) or truncates the result to that many samples.
inline AudioSignal istft(const ComplexSpectra& spectra, std::size_t length = 0) {
  const StftConfig& config = spectra.config;
  config.validate();
  require(spectra.frame_count() > 0, ErrorKind::InvalidArgument, "empty spectra");
  require(spectra.bins() == config.bins(), ErrorKind::ShapeMismatch, "spectra bin count does not match config");
  const std::size_t frames = spectra.frame_count();
  const std::size_t len = (frames - 1) * config.hop + config.frame_len;
  std::vector<double> acc(len, 0.0), norm(len, 0.0);
  RealFft& fft = RealFft::for_length(config.fft_len);
  std::vector<std::complex<double>> spec(config.bins());
  std::vector<double> frame(config.frame_len);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = spectra.frames(t, k);
    fft.inverse(spec, frame);
    const std::size_t start = t * config.hop;
    for (std::size_t i = 0; i < config.frame_len; ++i) {
      acc[start + i] += frame[i] * config.window[i];
      norm[start + i] += config.window[i] * config.window[i];
    }
  }
  AudioSignal out{std::vector<double>(len), spectra.sample_rate};
  for (std::size_t i = 0; i < len; ++i) out.samples[i] = acc[i] / std::max(norm[i], 1e-12);
  if (length > 0) out.samples.resize(length, 0.0);
  return out;
}

inline Matrix power_spectrum(const ComplexSpectra& spectra) { return spectra.frames.cwiseAbs2(); }

inline Matrix magnitude_spectrum(const ComplexSpectra& spectra) { return spectra.frames.cwiseAbs(); }

// Replaces each coefficient's magnitude with the given one, keeping its phase.
inline ComplexSpectra with_magnitude(const ComplexSpectra& spectra, const Matrix& magnitude) {
  require(magnitude.rows() == spectra.frames.rows() && magnitude.cols() == spectra.frames.cols(),
          ErrorKind::ShapeMismatch, "magnitude shape does not match spectra");
  ComplexSpectra out = spectra;
  for (Eigen::Index t = 0; t < out.frames.rows(); ++t)
    for (Eigen::Index k = 0; k < out.frames.cols(); ++k) {
      const std::complex<double> z = spectra.frames(t, k);
      const double a = std::abs(z);
      out.frames(t, k) = a > 0.0 ? z * (magnitude(t, k) / a) : std::complex<double>(magnitude(t, k), 0.0);
    }
  return out;
}

// Scales every coefficient by a real gain (phase untouched).
inline ComplexSpectra apply_gain(const ComplexSpectra& spectra, const Matrix& gain) {
  require(gain.rows() == spectra.frames.rows() && gain.cols() == spectra.frames.cols(), ErrorKind::ShapeMismatch,
          "gain shape does not match spectra");
  ComplexSpectra out = spectra;
  out.frames = spectra.frames.cwiseProduct(gain.cast<std::complex<double>>());
  return out;
}

}  // namespace avse
