#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "avse/signal.hpp"

namespace avse {

struct SegSnrOptions {
  std::size_t frame_len = 800;
  std::size_t hop = 500;
  double clamp_lo = -10.0;
  double clamp_hi = 35.0;
  double energy_threshold = 1e-8;
};

// Mean over frames of 10 log10(sum ref^2 / sum (ref - deg)^2), each frame
// clamped to [clamp_lo, clamp_hi]. Frames whose reference energy is at or
// below the threshold are skipped. Signals are truncated to the shorter one.
inline double segsnr(const AudioSignal& ref, const AudioSignal& deg, const SegSnrOptions& opt = {},
                     std::size_t* frames_used = nullptr) {
  require(ref.sample_rate == deg.sample_rate, ErrorKind::InvalidArgument, "segsnr: sample rates differ");
  require(opt.hop > 0 && opt.frame_len > 0 && opt.clamp_lo < opt.clamp_hi, ErrorKind::InvalidArgument,
          "segsnr: invalid options");
  const std::size_t len = std::min(ref.size(), deg.size());
  const std::size_t frames = len < opt.frame_len ? 0 : (len - opt.frame_len) / opt.hop + 1;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    double sig = 0.0, err = 0.0;
    for (std::size_t i = f * opt.hop; i < f * opt.hop + opt.frame_len; ++i) {
      sig += ref.samples[i] * ref.samples[i];
      const double e = ref.samples[i] - deg.samples[i];
      err += e * e;
    }
    if (sig <= opt.energy_threshold) continue;
    const double db = err > 0.0 ? 10.0 * std::log10(sig / err) : opt.clamp_hi;
    total += std::clamp(db, opt.clamp_lo, opt.clamp_hi);
    ++used;
  }
  require(used > 0, ErrorKind::InvalidArgument, "segsnr: no frame above the energy threshold");
  if (frames_used) *frames_used = used;
  return total / static_cast<double>(used);
}

// Mean over frames of the RMS (over bins) difference of 20 log10(|X| + 1e-10).
inline double lsd(const AudioSignal& ref, const AudioSignal& deg, const StftConfig& cfg) {
  require(ref.sample_rate == deg.sample_rate, ErrorKind::InvalidArgument, "lsd: sample rates differ");
  const std::size_t len = std::min(ref.size(), deg.size());
  require(len > 0, ErrorKind::InvalidArgument, "lsd: empty signal");
  AudioSignal r{std::vector<double>(ref.samples.begin(), ref.samples.begin() + static_cast<std::ptrdiff_t>(len)),
                ref.sample_rate};
  AudioSignal d{std::vector<double>(deg.samples.begin(), deg.samples.begin() + static_cast<std::ptrdiff_t>(len)),
                deg.sample_rate};
  const Matrix mr = magnitude_spectrum(stft(r, cfg));
  const Matrix md = magnitude_spectrum(stft(d, cfg));
  require(mr.rows() > 0, ErrorKind::InvalidArgument, "lsd: signal shorter than one frame");
  constexpr double kEps = 1e-10;
  double total = 0.0;
  for (Eigen::Index t = 0; t < mr.rows(); ++t) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < mr.cols(); ++k) {
      const double diff = 20.0 * std::log10(mr(t, k) + kEps) - 20.0 * std::log10(md(t, k) + kEps);
      acc += diff * diff;
    }
    total += std::sqrt(acc / static_cast<double>(mr.cols()));
  }
  return total / static_cast<double>(mr.rows());
}

// Element-wise mean squared error between two feature matrices.
inline double feature_mse(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols() && a.size() > 0, ErrorKind::ShapeMismatch,
          "feature_mse: shape mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

struct MetricReport {
  double segsnr_db = 0.0;
  double lsd_db = 0.0;
  std::size_t frames_used = 0;
};

inline MetricReport evaluate(const AudioSignal& ref, const AudioSignal& deg, const StftConfig& cfg) {
  MetricReport r;
  SegSnrOptions opt;
  opt.frame_len = cfg.frame_len;
  opt.hop = cfg.hop;
  r.segsnr_db = segsnr(ref, deg, opt, &r.frames_used);
  r.lsd_db = lsd(ref, deg, cfg);
  return r;
}

inline std::string metric_csv_header() { return "utterance_id,method,snr_db,segsnr_db,lsd_db"; }

inline std::string metric_csv_row(const std::string& id, const std::string& method, double snr_db,
                                  const MetricReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.4f,%.6f,%.6f", snr_db, r.segsnr_db, r.lsd_db);
  return id + "," + method + buf;
}

}  // namespace avse
