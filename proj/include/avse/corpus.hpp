#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "avse/feature_io.hpp"
#include "avse/rng.hpp"
#include "avse/signal.hpp"

namespace avse {

// ---------------------------------------------------------------------------
// SNR-controlled mixing
// ---------------------------------------------------------------------------

struct MixSpec {
  AudioSignal clean;
  AudioSignal noise;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct MixResult {
  AudioSignal noisy;
  AudioSignal scaled_noise;
  double scale = 0.0;
  std::size_t offset = 0;
  double achieved_snr_db = 0.0;
};

inline double mean_square(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// s = sqrt(P_clean / (P_noise 10^(snr/10))); the noise segment offset depends
// only on the seed, never on the target SNR.
inline MixResult mix_at_snr(const MixSpec& spec) {
  const AudioSignal& clean = spec.clean;
  const AudioSignal& noise = spec.noise;
  clean.validate();
  noise.validate();
  require(clean.sample_rate == noise.sample_rate, ErrorKind::InvalidArgument, "clean and noise sample rates differ");
  require(noise.size() >= clean.size(), ErrorKind::InvalidArgument,
          "noise (" + std::to_string(noise.size()) + " samples) shorter than clean (" + std::to_string(clean.size()) +
              ")");
  require(std::isfinite(spec.snr_db), ErrorKind::InvalidArgument, "snr must be finite");
  const double p_clean = mean_square(clean.samples);
  require(p_clean > 0.0, ErrorKind::InvalidArgument, "clean signal is silent");

  MixResult out;
  Rng rng(spec.seed);
  out.offset = static_cast<std::size_t>(rng.below(noise.size() - clean.size() + 1));
  const std::span<const double> segment(noise.samples.data() + out.offset, clean.size());
  const double p_noise = mean_square(segment);
  require(p_noise > 0.0, ErrorKind::InvalidArgument, "selected noise segment is silent");

  out.scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));
  out.scaled_noise = {std::vector<double>(clean.size()), clean.sample_rate};
  out.noisy = {std::vector<double>(clean.size()), clean.sample_rate};
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out.scaled_noise.samples[i] = out.scale * segment[i];
    out.noisy.samples[i] = clean.samples[i] + out.scaled_noise.samples[i];
  }
  out.achieved_snr_db = 10.0 * std::log10(p_clean / mean_square(out.scaled_noise.samples));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    require(train > 0.0 && val > 0.0 && test > 0.0, ErrorKind::InvalidArgument, "split fractions must be positive");
    require(std::abs(train + val + test - 1.0) < 1e-9, ErrorKind::InvalidArgument, "split fractions must sum to 1");
  }
};

template <typename Id>
struct Splits {
  std::vector<Id> train, val, test;
};

// Seeded shuffle, then contiguous cuts at round(n train) and round(n (train + val)).
template <typename Id>
Splits<Id> split_dataset(std::vector<Id> ids, const SplitSpec& spec) {
  spec.validate();
  require(!ids.empty(), ErrorKind::InvalidArgument, "cannot split an empty list");
  Rng rng(spec.seed);
  rng.shuffle(ids);
  const double n = static_cast<double>(ids.size());
  const auto cut1 = static_cast<std::ptrdiff_t>(std::llround(n * spec.train));
  const auto cut2 = static_cast<std::ptrdiff_t>(std::llround(n * (spec.train + spec.val)));
  Splits<Id> s;
  s.train.assign(ids.begin(), ids.begin() + cut1);
  s.val.assign(ids.begin() + cut1, ids.begin() + cut2);
  s.test.assign(ids.begin() + cut2, ids.end());
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic audio-visual feature corpus
// ---------------------------------------------------------------------------

// Smooth latent articulatory trajectories drive both the clean audio features
// and the visual features through two fixed linear maps. Noisy audio features
// add white feature-domain noise whose power follows the SNR.
struct SynthCorpusConfig {
  std::size_t utterances = 40;
  std::size_t frames_per_utterance = 200;
  std::size_t audio_dim = 23;
  std::size_t visual_dim = 16;
  std::size_t latent_dim = 6;
  std::vector<double> snr_levels = {-12.0, -6.0, 0.0, 6.0, 12.0};
  std::uint64_t coupling_seed = 1;
  std::uint64_t noise_seed = 2;
  double latent_step = 0.3;       // innovation std of the latent walk
  double latent_leak = 0.97;      // pull back towards zero per frame
  double audio_jitter = 0.05;     // clean-feature observation noise std
  double visual_noise = 1.0;      // visual observation noise std
  double frame_rate = 100.0;

  void validate() const {
    require(utterances >= 1 && frames_per_utterance >= 1 && audio_dim >= 1 && visual_dim >= 1 && latent_dim >= 1,
            ErrorKind::InvalidArgument, "synthetic corpus counts must be >= 1");
    require(!snr_levels.empty(), ErrorKind::InvalidArgument, "need at least one SNR level");
    require(latent_leak > 0.0 && latent_leak <= 1.0, ErrorKind::InvalidArgument, "latent_leak must lie in (0, 1]");
  }
};

struct SynthUtterance {
  std::string id;
  FeatureSequence clean;
  FeatureSequence visual;
  std::map<double, FeatureSequence> noisy;  // keyed by SNR in dB
};

struct SynthCoupling {
  Matrix audio_map;   // latent_dim x audio_dim
  RowVector audio_bias;
  Matrix visual_map;  // latent_dim x visual_dim
};

inline SynthCoupling make_synth_coupling(const SynthCorpusConfig& cfg) {
  Rng rng(cfg.coupling_seed);
  SynthCoupling c;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  c.audio_map = Matrix(cfg.latent_dim, cfg.audio_dim);
  for (Eigen::Index i = 0; i < c.audio_map.size(); ++i) c.audio_map.data()[i] = rng.normal() * scale;
  c.audio_bias = RowVector(cfg.audio_dim);
  for (Eigen::Index i = 0; i < c.audio_bias.size(); ++i) c.audio_bias(i) = rng.normal() * 0.5;
  c.visual_map = Matrix(cfg.latent_dim, cfg.visual_dim);
  for (Eigen::Index i = 0; i < c.visual_map.size(); ++i) c.visual_map.data()[i] = rng.normal() * scale;
  return c;
}

inline std::string utterance_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%04zu", index);
  return buf;
}

inline SynthUtterance synth_utterance(const SynthCorpusConfig& cfg, const SynthCoupling& coupling, std::size_t index) {
  Rng rng(derive_seed(cfg.noise_seed, index));
  const auto frames = static_cast<Eigen::Index>(cfg.frames_per_utterance);
  const auto latent = static_cast<Eigen::Index>(cfg.latent_dim);

  const double stationary_std = cfg.latent_step / std::sqrt(std::max(1.0 - cfg.latent_leak * cfg.latent_leak, 1e-6));
  Matrix walk(frames, latent);
  for (Eigen::Index j = 0; j < latent; ++j) walk(0, j) = rng.normal() * stationary_std;
  for (Eigen::Index t = 1; t < frames; ++t)
    for (Eigen::Index j = 0; j < latent; ++j) walk(t, j) = cfg.latent_leak * walk(t - 1, j) + cfg.latent_step * rng.normal();
  // 3-frame moving average, shrinking at the edges
  Matrix z(frames, latent);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - 1), hi = std::min(frames - 1, t + 1);
    z.row(t) = walk.middleRows(lo, hi - lo + 1).colwise().mean();
  }

  SynthUtterance u;
  u.id = utterance_id(index);
  u.clean = {z * coupling.audio_map, FeatureKind::LogFbAudio, cfg.frame_rate};
  u.clean.vectors.rowwise() += coupling.audio_bias;
  for (Eigen::Index i = 0; i < u.clean.vectors.size(); ++i) u.clean.vectors.data()[i] += cfg.audio_jitter * rng.normal();
  u.visual = {z * coupling.visual_map, FeatureKind::Visual, cfg.frame_rate};
  for (Eigen::Index i = 0; i < u.visual.vectors.size(); ++i) u.visual.vectors.data()[i] += cfg.visual_noise * rng.normal();

  const Matrix centered = u.clean.vectors.rowwise() - u.clean.vectors.colwise().mean();
  const double signal_power = centered.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(centered.size(), 1));
  for (double snr : cfg.snr_levels) {
    const double noise_std = std::sqrt(signal_power / std::pow(10.0, snr / 10.0));
    FeatureSequence noisy = u.clean;
    for (Eigen::Index i = 0; i < noisy.vectors.size(); ++i) noisy.vectors.data()[i] += noise_std * rng.normal();
    u.noisy.emplace(snr, std::move(noisy));
  }
  return u;
}

inline std::vector<SynthUtterance> synth_av_corpus(const SynthCorpusConfig& cfg) {
  cfg.validate();
  const SynthCoupling coupling = make_synth_coupling(cfg);
  std::vector<SynthUtterance> out;
  out.reserve(cfg.utterances);
  for (std::size_t i = 0; i < cfg.utterances; ++i) out.push_back(synth_utterance(cfg, coupling, i));
  return out;
}

// ---------------------------------------------------------------------------
// Corpus manifest: utterance_id,split,snr_db,clean_path,visual_path,noisy_path
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string utterance_id;
  std::string split;
  double snr_db = 0.0;
  std::string clean_path;
  std::string visual_path;
  std::string noisy_path;
};

inline std::string format_snr_tag(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+g", snr);
  return buf;
}

inline std::string manifest_header() { return "utterance_id,split,snr_db,clean_path,visual_path,noisy_path"; }

inline std::string to_csv(const std::vector<ManifestRow>& rows) {
  std::ostringstream os;
  os << manifest_header() << '\n';
  for (const auto& r : rows) {
    char snr[32];
    std::snprintf(snr, sizeof snr, "%g", r.snr_db);
    os << r.utterance_id << ',' << r.split << ',' << snr << ',' << r.clean_path << ',' << r.visual_path << ','
       << r.noisy_path << '\n';
  }
  return os.str();
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || line != manifest_header())
    fail(ErrorKind::Format, path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6) fail(ErrorKind::Format, path.string() + ": line " + std::to_string(lineno) + " needs 6 columns");
    ManifestRow r{cols[0], cols[1], 0.0, cols[3], cols[4], cols[5]};
    try {
      r.snr_db = std::stod(cols[2]);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + ": line " + std::to_string(lineno) + " has a bad snr value");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// Writes every utterance under outdir/<id>/ plus outdir/manifest.csv, with
// rows sorted by utterance id and SNR.
inline std::vector<ManifestRow> write_synth_corpus(const SynthCorpusConfig& cfg, const SplitSpec& split,
                                                   const std::filesystem::path& outdir) {
  const std::vector<SynthUtterance> corpus = synth_av_corpus(cfg);
  std::vector<std::string> ids;
  for (const auto& u : corpus) ids.push_back(u.id);
  const Splits<std::string> parts = split_dataset(ids, split);
  std::map<std::string, std::string> split_of;
  for (const auto& id : parts.train) split_of[id] = "train";
  for (const auto& id : parts.val) split_of[id] = "val";
  for (const auto& id : parts.test) split_of[id] = "test";

  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + outdir.string());
  std::vector<ManifestRow> rows;
  for (const auto& u : corpus) {
    const std::filesystem::path dir = outdir / u.id;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir.string());
    write_avf(u.clean, dir / "clean.avf");
    write_avf(u.visual, dir / "visual.avf");
    for (const auto& [snr, feats] : u.noisy) {
      const std::string name = "noisy_snr" + format_snr_tag(snr) + ".avf";
      write_avf(feats, dir / name);
      rows.push_back({u.id, split_of.at(u.id), snr, u.id + "/clean.avf", u.id + "/visual.avf", u.id + "/" + name});
    }
  }
  write_file_atomic(outdir / "manifest.csv", to_csv(rows));
  return rows;
}

}  // namespace avse
