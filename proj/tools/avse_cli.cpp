// avse: command-line front end for feature extraction, mixing, synthetic
// corpora, regressor training, enhancement, evaluation and spectrograms.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avse/avse.hpp"

namespace fs = std::filesystem;
using namespace avse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Flag combinations rejected before any work starts.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return kExitUsage;
    case ErrorKind::Numeric: return kExitNumeric;
    default: return kExitData;
  }
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void warn(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// features-audio
// ---------------------------------------------------------------------------

struct FeaturesArgs {
  std::string input, output;
  std::size_t channels = 23;
  std::size_t fft_len = 2048;
};

void cmd_features_audio(const FeaturesArgs& a) {
  const AudioSignal signal = read_wav(a.input);
  const AudioFrontEnd fe = make_front_end(signal.sample_rate, a.channels, a.fft_len);
  const FeatureSequence feats = extract_logfb(signal, fe);
  write_avf(feats, a.output);
  std::cout << "wrote " << feats.frames() << " frames of dim " << feats.dim() << " to " << a.output << '\n';
}

// ---------------------------------------------------------------------------
// mix
// ---------------------------------------------------------------------------

struct MixArgs {
  std::string clean, noise, output, manifest;
  double snr = 0.0;
  std::uint64_t seed = 0;
};

std::string mix_manifest_header() { return "clean_path,noise_path,noisy_path,snr_db,achieved_snr_db,scale,offset,seed"; }

void cmd_mix(const MixArgs& a) {
  const MixResult m = mix_at_snr({read_wav(a.clean), read_wav(a.noise), a.snr, a.seed});
  write_wav(m.noisy, a.output);
  const fs::path manifest = a.manifest.empty() ? fs::path(a.output).replace_extension(".mix.csv") : fs::path(a.manifest);
  const std::string row = a.clean + "," + a.noise + "," + a.output + "," + format_double("%g", a.snr) + "," +
                          format_double("%.6f", m.achieved_snr_db) + "," + format_double("%.9g", m.scale) + "," +
                          std::to_string(m.offset) + "," + std::to_string(a.seed);
  write_file_atomic(manifest, mix_manifest_header() + "\n" + row + "\n");
  std::cout << "achieved snr " << format_double("%.3f", m.achieved_snr_db) << " dB, noise scale "
            << format_double("%.6g", m.scale) << '\n';
}

// ---------------------------------------------------------------------------
// synth-corpus
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string outdir;
  SynthCorpusConfig cfg;
  SplitSpec split;
};

void cmd_synth_corpus(const SynthArgs& a) {
  const auto rows = write_synth_corpus(a.cfg, a.split, a.outdir);
  std::cout << "wrote " << a.cfg.utterances << " utterances (" << rows.size() << " manifest rows) to " << a.outdir
            << '\n';
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, output, history;
  std::string mode = "av";
  std::string visual_input = "vector";
  std::string image = "64x64";
  std::vector<double> snrs;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::size_t> audio_cells = {250, 300};
  std::vector<std::size_t> fusion = {300, 150};
};

ModelMode parse_mode(const std::string& s) {
  if (s == "a") return ModelMode::AudioOnly;
  if (s == "v") return ModelMode::VisualOnly;
  if (s == "av") return ModelMode::AudioVisual;
  throw UsageError("--mode must be one of a, v, av");
}

std::pair<std::size_t, std::size_t> parse_image_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t used_h = 0, used_w = 0;
      const auto h = std::stoul(s.substr(0, x), &used_h), w = std::stoul(s.substr(x + 1), &used_w);
      if (used_h == x && used_w == s.size() - x - 1 && h > 0 && w > 0) return {h, w};
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--image expects HxW, got '" + s + "'");
}

// Features referenced by a manifest, each file read once.
class FeatureCache {
 public:
  explicit FeatureCache(fs::path root) : root_(std::move(root)) {}

  const FeatureSequence& get(const std::string& rel) {
    auto it = cache_.find(rel);
    if (it == cache_.end()) it = cache_.emplace(rel, read_avf(root_ / rel)).first;
    return it->second;
  }

 private:
  fs::path root_;
  std::map<std::string, FeatureSequence> cache_;
};

void cmd_train(TrainArgs a) {
  ModelConfig& mc = a.model;
  mc.mode = parse_mode(a.mode);
  if (a.visual_input == "image") {
    mc.visual_input = VisualInput::Image;
    std::tie(mc.image_height, mc.image_width) = parse_image_size(a.image);
  } else if (a.visual_input != "vector") {
    throw UsageError("--visual-input must be vector or image");
  }
  if (a.audio_cells.size() != 2) throw UsageError("--audio-cells expects two values");
  if (a.fusion.size() != 2) throw UsageError("--fusion expects two values");
  mc.audio_lstm1_cells = a.audio_cells[0];
  mc.audio_lstm2_cells = a.audio_cells[1];
  mc.fusion1 = a.fusion[0];
  mc.fusion2 = a.fusion[1];
  mc.seed = a.train.seed;

  const fs::path manifest(a.manifest);
  const auto rows = read_manifest(manifest);
  FeatureCache cache(manifest.parent_path());
  auto selected = [&](const ManifestRow& r) {
    if (a.snrs.empty()) return true;
    for (double s : a.snrs)
      if (std::abs(s - r.snr_db) < 1e-9) return true;
    return false;
  };

  // dims come from the first selected row
  const ManifestRow* first = nullptr;
  for (const auto& r : rows)
    if (selected(r)) {
      first = &r;
      break;
    }
  require(first != nullptr, ErrorKind::InvalidArgument, "no manifest rows match the requested SNRs");
  mc.output_dim = cache.get(first->clean_path).dim();
  mc.audio_dim = cache.get(first->noisy_path).dim();
  if (mc.uses_visual()) {
    const std::size_t vdim = cache.get(first->visual_path).dim();
    if (mc.visual_input == VisualInput::Vector) {
      mc.visual_dim = vdim;
    } else {
      require(vdim == mc.image_height * mc.image_width, ErrorKind::ShapeMismatch,
              "visual features have dim " + std::to_string(vdim) + ", --image implies " +
                  std::to_string(mc.image_height * mc.image_width));
    }
  }
  try {
    mc.validate();
    a.train.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  WindowedData train_set, val_set;
  std::size_t n_train = 0, n_val = 0;
  for (const auto& r : rows) {
    if (!selected(r)) continue;
    WindowedData* dst = r.split == "train" ? &train_set : r.split == "val" ? &val_set : nullptr;
    if (!dst) continue;
    const FeatureSequence& noisy = cache.get(r.noisy_path);
    const FeatureSequence& clean = cache.get(r.clean_path);
    const FeatureSequence* visual = mc.uses_visual() ? &cache.get(r.visual_path) : nullptr;
    append_utterance(*dst, mc, &noisy, visual, &clean);
    ++(dst == &train_set ? n_train : n_val);
  }
  require(n_train > 0, ErrorKind::InvalidArgument, "manifest has no selected train rows");
  require(n_val > 0, ErrorKind::InvalidArgument, "manifest has no selected val rows");

  RegressorModel model = build_model(mc);
  std::cerr << "training " << to_string(mc.mode) << " model (" << model.parameter_count() << " parameters) on "
            << train_set.size() << " windows, validating on " << val_set.size() << '\n';
  const TrainHistory history = train(model, train_set, val_set, a.train);
  save_checkpoint(model, a.output);
  const fs::path hist = a.history.empty() ? fs::path(a.output).replace_extension(".history.csv") : fs::path(a.history);
  write_file_atomic(hist, history.to_csv());
  std::cout << "final val mse " << format_double("%.9g", history.best_val()) << " (epoch " << history.best_epoch
            << ")\n";
}

// ---------------------------------------------------------------------------
// enhance
// ---------------------------------------------------------------------------

struct EnhanceArgs {
  std::string input, output, method = "evwf", model, visual, ref, id;
  bool oracle = false;
  std::optional<double> snr;
  double gain_floor = 0.0;
  SsConfig ss;
  LmmseConfig lmmse;
};

void print_metric_rows(const std::vector<std::string>& rows) {
  std::cout << metric_csv_header() << '\n';
  for (const auto& r : rows) std::cout << r << '\n';
}

void cmd_enhance(const EnhanceArgs& a) {
  if (a.method != "evwf" && a.method != "ss" && a.method != "lmmse")
    throw UsageError("--method must be one of evwf, ss, lmmse");
  if (a.method == "evwf" && a.model.empty() && !a.oracle) throw UsageError("--method evwf needs --model (or --oracle)");
  if (a.oracle && a.ref.empty()) throw UsageError("--oracle needs --ref");
  if (a.oracle && !a.model.empty()) throw UsageError("--oracle and --model are mutually exclusive");
  if (a.method != "evwf" && (a.oracle || !a.model.empty() || !a.visual.empty()))
    throw UsageError("--model, --visual and --oracle apply to --method evwf only");

  const AudioSignal noisy = read_wav(a.input);
  std::optional<AudioSignal> ref;
  if (!a.ref.empty()) ref = read_wav(a.ref);

  AudioSignal enhanced;
  const StftConfig stft_cfg = StftConfig::for_rate(noisy.sample_rate);
  if (a.method == "ss") {
    enhanced = spectral_subtract(noisy, a.ss, stft_cfg);
  } else if (a.method == "lmmse") {
    enhanced = logmmse(noisy, a.lmmse, stft_cfg);
  } else {
    EvwfConfig cfg;
    cfg.gain_floor = a.gain_floor;
    if (a.oracle) {
      const AudioFrontEnd fe = make_front_end(noisy.sample_rate);
      enhanced = evwf_enhance(noisy, extract_logfb(*ref, fe), fe.filterbank, fe.stft, cfg, warn);
    } else {
      const RegressorModel model = load_checkpoint(a.model);
      const ModelConfig& mc = model.config;
      if (mc.uses_visual() && a.visual.empty())
        throw UsageError(std::string("model mode ") + to_string(mc.mode) + " needs --visual");
      if (!mc.uses_visual() && !a.visual.empty()) warn("audio-only model ignores --visual");
      const AudioFrontEnd fe = make_front_end(noisy.sample_rate, mc.output_dim);
      std::optional<FeatureSequence> audio, visual;
      if (mc.uses_audio()) audio = extract_logfb(noisy, make_front_end(noisy.sample_rate, mc.audio_dim));
      if (mc.uses_visual()) {
        visual = read_avf(a.visual);
        require(visual->kind == FeatureKind::Visual, ErrorKind::Format, a.visual + ": not a visual feature file");
      }
      const FeatureSequence estimate =
          predict_sequence(model, audio ? &*audio : nullptr, visual ? &*visual : nullptr, fe.frame_rate(noisy.sample_rate));
      for (Eigen::Index i = 0; i < estimate.vectors.size(); ++i)
        require(std::isfinite(estimate.vectors.data()[i]), ErrorKind::Numeric, "model produced non-finite features");
      enhanced = evwf_enhance(noisy, estimate, fe.filterbank, fe.stft, cfg, warn);
    }
  }
  write_wav(enhanced, a.output);

  if (ref) {
    const std::string id = a.id.empty() ? fs::path(a.input).stem().string() : a.id;
    const double snr = a.snr.value_or(std::numeric_limits<double>::quiet_NaN());
    const std::string method = a.oracle ? "evwf_oracle" : a.method;
    print_metric_rows({metric_csv_row(id, "noisy", snr, evaluate(*ref, noisy, stft_cfg)),
                       metric_csv_row(id, method, snr, evaluate(*ref, enhanced, stft_cfg))});
  }
}

// ---------------------------------------------------------------------------
// eval, spectrogram
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ref, deg, id, method = "deg";
  std::optional<double> snr;
};

void cmd_eval(const EvalArgs& a) {
  const AudioSignal ref = read_wav(a.ref), deg = read_wav(a.deg);
  const MetricReport r = evaluate(ref, deg, StftConfig::for_rate(ref.sample_rate));
  const std::string id = a.id.empty() ? fs::path(a.deg).stem().string() : a.id;
  print_metric_rows({metric_csv_row(id, a.method, a.snr.value_or(std::numeric_limits<double>::quiet_NaN()), r)});
}

struct SpectrogramArgs {
  std::string input, output, format = "pgm";
};

void cmd_spectrogram(const SpectrogramArgs& a) {
  if (a.format != "pgm" && a.format != "csv") throw UsageError("--format must be pgm or csv");
  const AudioSignal s = read_wav(a.input);
  const ComplexSpectra spectra = stft(s, StftConfig::for_rate(s.sample_rate));
  emit_spectrogram(spectra, a.output, a.format == "pgm" ? SpectrogramFormat::Pgm : SpectrogramFormat::Csv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech enhancement toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features-audio", "Extract log filterbank features from a WAV file");
  features->add_option("input", fa.input, "Input WAV")->required();
  features->add_option("output", fa.output, "Output AVF1 file")->required();
  features->add_option("--channels", fa.channels, "Filterbank channels")->capture_default_str()->check(CLI::Range(2, 512));
  features->add_option("--fft", fa.fft_len, "Transform length")->capture_default_str()->check(CLI::Range(64, 1 << 16));

  MixArgs ma;
  auto* mix = app.add_subcommand("mix", "Mix clean speech with noise at a target SNR");
  mix->add_option("clean", ma.clean, "Clean WAV")->required();
  mix->add_option("noise", ma.noise, "Noise WAV")->required();
  mix->add_option("output", ma.output, "Output noisy WAV")->required();
  mix->add_option("--snr", ma.snr, "Target SNR in dB")->required();
  mix->add_option("--seed", ma.seed, "Seed for the noise segment offset")->capture_default_str();
  mix->add_option("--manifest", ma.manifest, "Mix record CSV (default: <output>.mix.csv)");

  SynthArgs sa;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth-corpus", "Generate the synthetic audio-visual feature corpus");
  synth->add_option("outdir", sa.outdir, "Output directory")->required();
  synth->add_option("--utterances", sa.cfg.utterances)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--frames", sa.cfg.frames_per_utterance)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--audio-dim", sa.cfg.audio_dim)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--visual-dim", sa.cfg.visual_dim)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--latent-dim", sa.cfg.latent_dim)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--snr", sa.cfg.snr_levels, "SNR levels in dB")->delimiter(',')->capture_default_str();
  synth->add_option("--visual-noise", sa.cfg.visual_noise)->capture_default_str()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "Seed for coupling maps, trajectories and the split")->capture_default_str();

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train the feature regressor from a corpus manifest");
  trainc->add_option("manifest", ta.manifest, "Corpus manifest CSV")->required();
  trainc->add_option("--out", ta.output, "Output checkpoint")->required();
  trainc->add_option("--history", ta.history, "History CSV (default: <out>.history.csv)");
  trainc->add_option("--mode", ta.mode, "a, v or av")->capture_default_str();
  trainc->add_option("--window", ta.model.window, "Context frames (current plus prior)")->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--snr", ta.snrs, "Only use rows at these SNRs")->delimiter(',');
  trainc->add_option("--epochs", ta.train.epochs)->capture_default_str();
  trainc->add_option("--lr", ta.train.learning_rate)->capture_default_str()->check(CLI::NonNegativeNumber);
  trainc->add_option("--batch", ta.train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--seed", ta.train.seed)->capture_default_str();
  trainc->add_option("--dropout", ta.model.dropout_rate)->capture_default_str()->check(CLI::Range(0.0, 0.999));
  trainc->add_option("--audio-cells", ta.audio_cells, "Cells of the two audio LSTMs")->delimiter(',')->capture_default_str();
  trainc->add_option("--visual-cells", ta.model.visual_lstm_cells)->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--visual-embed", ta.model.visual_embed)->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--fusion", ta.fusion, "Units of the two fusion layers")->delimiter(',')->capture_default_str();
  trainc->add_option("--visual-input", ta.visual_input, "vector or image")->capture_default_str();
  trainc->add_option("--image", ta.image, "Image size HxW for image input")->capture_default_str();
  trainc->add_option("--conv-filters", ta.model.conv_filters)->delimiter(',')->capture_default_str();

  EnhanceArgs ea;
  auto* enhance = app.add_subcommand("enhance", "Enhance a noisy WAV file");
  enhance->add_option("input", ea.input, "Noisy WAV")->required();
  enhance->add_option("output", ea.output, "Enhanced WAV")->required();
  enhance->add_option("--method", ea.method, "evwf, ss or lmmse")->capture_default_str();
  enhance->add_option("--model", ea.model, "Regressor checkpoint (evwf)");
  enhance->add_option("--visual", ea.visual, "Visual feature AVF1 file (evwf with v or av models)");
  enhance->add_flag("--oracle", ea.oracle, "Use clean features from --ref instead of a model (debugging)");
  enhance->add_option("--ref", ea.ref, "Clean reference WAV; prints metrics");
  enhance->add_option("--id", ea.id, "Utterance id for the metric rows");
  enhance->add_option("--snr", ea.snr, "SNR label for the metric rows");
  enhance->add_option("--gain-floor", ea.gain_floor, "EVWF gain floor")->capture_default_str()->check(CLI::Range(0.0, 0.999));
  enhance->add_option("--init-frames", ea.ss.init_frames, "Noise-estimate frames (ss, lmmse)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber)
      ->each([&](const std::string&) { ea.lmmse.init_frames = ea.ss.init_frames; });

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Segmental SNR and log-spectral distance of a degraded file");
  eval->add_option("--ref", va.ref, "Reference WAV")->required();
  eval->add_option("--deg", va.deg, "Degraded WAV")->required();
  eval->add_option("--id", va.id, "Utterance id (default: degraded file stem)");
  eval->add_option("--method", va.method, "Method label")->capture_default_str();
  eval->add_option("--snr", va.snr, "SNR label");

  SpectrogramArgs pa;
  auto* spec = app.add_subcommand("spectrogram", "Write a magnitude spectrogram as PGM or CSV");
  spec->add_option("input", pa.input, "Input WAV")->required();
  spec->add_option("output", pa.output, "Output file")->required();
  spec->add_option("--format", pa.format, "pgm or csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*features) cmd_features_audio(fa);
    else if (*mix) cmd_mix(ma);
    else if (*synth) {
      sa.cfg.coupling_seed = derive_seed(synth_seed, 0);
      sa.cfg.noise_seed = derive_seed(synth_seed, 1);
      sa.split.seed = derive_seed(synth_seed, 2);
      cmd_synth_corpus(sa);
    } else if (*trainc) cmd_train(ta);
    else if (*enhance) cmd_enhance(ea);
    else if (*eval) cmd_eval(va);
    else if (*spec) cmd_spectrogram(pa);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
  return kExitOk;
}
