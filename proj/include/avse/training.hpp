#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "avse/filterbank.hpp"
#include "avse/model.hpp"

namespace avse {

// Window for frame t holds frames t-W+1 .. t, oldest first; frames before the
// start repeat frame 0. One window per input frame.
inline std::vector<Matrix> make_context_windows(const FeatureSequence& features, std::size_t window) {
  require(window >= 1, ErrorKind::InvalidArgument, "context window must be >= 1");
  require(features.frames() > 0, ErrorKind::InvalidArgument, "cannot window an empty sequence");
  const auto frames = static_cast<std::ptrdiff_t>(features.frames());
  const auto w = static_cast<std::ptrdiff_t>(window);
  std::vector<Matrix> out;
  out.reserve(features.frames());
  for (std::ptrdiff_t t = 0; t < frames; ++t) {
    Matrix win(w, features.vectors.cols());
    for (std::ptrdiff_t j = 0; j < w; ++j) win.row(j) = features.vectors.row(std::max<std::ptrdiff_t>(0, t - w + 1 + j));
    out.push_back(std::move(win));
  }
  return out;
}

// Samples stored time-major so mini-batches can be gathered row-wise.
struct WindowedData {
  std::vector<Matrix> audio;   // window entries, each N x audio_dim
  std::vector<Matrix> visual;  // window entries, each N x visual size
  Matrix targets;              // N x output_dim

  Eigen::Index size() const { return targets.rows(); }

  Batch gather(const std::vector<Eigen::Index>& rows, Matrix* batch_targets) const {
    Batch b;
    auto take = [&](const std::vector<Matrix>& src, std::vector<Matrix>& dst) {
      dst.resize(src.size());
      for (std::size_t t = 0; t < src.size(); ++t) dst[t] = src[t](rows, Eigen::all);
    };
    take(audio, b.audio);
    take(visual, b.visual);
    if (batch_targets) *batch_targets = targets(rows, Eigen::all);
    return b;
  }

  Batch all(Matrix* batch_targets) const {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(size()));
    std::iota(rows.begin(), rows.end(), 0);
    return gather(rows, batch_targets);
  }
};

namespace detail {

inline void append_rows(Matrix& dst, const Matrix& rows) {
  if (dst.size() == 0) {
    dst = rows;
    return;
  }
  require(dst.cols() == rows.cols(), ErrorKind::ShapeMismatch, "appending rows of a different width");
  const Eigen::Index old = dst.rows();
  dst.conservativeResize(old + rows.rows(), Eigen::NoChange);
  dst.bottomRows(rows.rows()) = rows;
}

inline std::vector<Matrix> time_major_windows(const FeatureSequence& seq, std::size_t window, std::size_t frames) {
  std::vector<Matrix> out(window, Matrix(static_cast<Eigen::Index>(frames), seq.vectors.cols()));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < window; ++j) {
      const std::ptrdiff_t src = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(window) + 1);
      out[j].row(static_cast<Eigen::Index>(t)) = seq.vectors.row(src);
    }
  return out;
}

}  // namespace detail

// Adds one utterance's windows. Sequences are truncated to the shortest.
inline void append_utterance(WindowedData& data, const ModelConfig& config, const FeatureSequence* audio,
                             const FeatureSequence* visual, const FeatureSequence* targets) {
  std::size_t frames = std::numeric_limits<std::size_t>::max();
  if (config.uses_audio()) {
    require(audio != nullptr, ErrorKind::InvalidArgument, "mode needs audio features");
    require(audio->dim() == config.audio_dim, ErrorKind::ShapeMismatch, "audio feature dim mismatch");
    frames = std::min(frames, audio->frames());
  }
  if (config.uses_visual()) {
    require(visual != nullptr, ErrorKind::InvalidArgument, "mode needs visual features");
    require(visual->dim() == config.visual_frame_size(), ErrorKind::ShapeMismatch, "visual feature dim mismatch");
    frames = std::min(frames, visual->frames());
  }
  if (targets) {
    require(targets->dim() == config.output_dim, ErrorKind::ShapeMismatch, "target dim mismatch");
    frames = std::min(frames, targets->frames());
  }
  require(frames != std::numeric_limits<std::size_t>::max() && frames > 0, ErrorKind::InvalidArgument,
          "utterance has no frames");
  auto extend = [&](std::vector<Matrix>& dst, const FeatureSequence& seq) {
    std::vector<Matrix> w = detail::time_major_windows(seq, config.window, frames);
    if (dst.empty()) dst.resize(config.window);
    for (std::size_t j = 0; j < config.window; ++j) detail::append_rows(dst[j], w[j]);
  };
  if (config.uses_audio()) extend(data.audio, *audio);
  if (config.uses_visual()) extend(data.visual, *visual);
  if (targets) detail::append_rows(data.targets, targets->vectors.topRows(static_cast<Eigen::Index>(frames)));
  else detail::append_rows(data.targets, Matrix::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(config.output_dim)));
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double rmsprop_rho = 0.9;
  double rmsprop_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate >= 0.0, ErrorKind::InvalidArgument, "learning rate must be non-negative");
    require(rmsprop_rho > 0.0 && rmsprop_rho < 1.0, ErrorKind::InvalidArgument, "rho must lie in (0, 1)");
    require(rmsprop_eps > 0.0, ErrorKind::InvalidArgument, "eps must be positive");
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  }
};

// cache <- rho cache + (1 - rho) g^2;  param <- param - lr g / (sqrt(cache) + eps)
inline void rmsprop_step(RegressorModel& model, const TensorMap& grads, const TrainConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto p = model.params.find(name);
    auto c = model.rmsprop_cache.find(name);
    require(p != model.params.end() && c != model.rmsprop_cache.end(), ErrorKind::ShapeMismatch,
            "gradient for unknown parameter " + name);
    require(p->second.shape == g.shape && c->second.shape == g.shape, ErrorKind::ShapeMismatch,
            "gradient shape mismatch for " + name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& cache = c->second.data[i];
      cache = cfg.rmsprop_rho * cache + (1.0 - cfg.rmsprop_rho) * g.data[i] * g.data[i];
      p->second.data[i] -= cfg.learning_rate * g.data[i] / (std::sqrt(cache) + cfg.rmsprop_eps);
    }
  }
}

// Inference-mode MSE loss over a whole set, evaluated in fixed-size chunks
// and combined in a fixed order.
inline double evaluate_loss(const RegressorModel& model, const WindowedData& data, std::size_t chunk = 512) {
  require(data.size() > 0, ErrorKind::InvalidArgument, "cannot evaluate on an empty set");
  double total = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += static_cast<Eigen::Index>(chunk)) {
    const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk), data.size() - start);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    Matrix targets;
    const Batch b = data.gather(rows, &targets);
    total += mse_loss(forward(model, b), targets) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;  // epoch 0 is the untrained model
  std::size_t best_epoch = 0;

  double best_val() const { return epochs.at(best_epoch).val_mse; }

  std::string to_csv() const {
    std::string out = "epoch,train_mse,val_mse\n";
    char buf[96];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.train_mse, e.val_mse);
      out += buf;
    }
    return out;
  }
};

// Seeded shuffled mini-batches with RMSProp. Returns the per-epoch history and
// leaves the model holding the parameters of the lowest validation loss.
inline TrainHistory train(RegressorModel& model, const WindowedData& train_set, const WindowedData& val_set,
                          const TrainConfig& cfg) {
  cfg.validate();
  require(train_set.size() > 0 && val_set.size() > 0, ErrorKind::InvalidArgument, "train and validation splits must be nonempty");
  Rng shuffle_rng(derive_seed(cfg.seed, 0));
  Rng dropout_rng(derive_seed(cfg.seed, 1));

  TrainHistory history;
  auto record = [&](std::size_t epoch) {
    EpochRecord r{epoch, evaluate_loss(model, train_set), evaluate_loss(model, val_set)};
    if (!std::isfinite(r.train_mse) || !std::isfinite(r.val_mse))
      fail(ErrorKind::Numeric, "non-finite loss after epoch " + std::to_string(epoch));
    history.epochs.push_back(r);
    return r.val_mse;
  };
  double best = record(0);
  TensorMap best_params = model.params;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      Matrix targets;
      const Batch batch = train_set.gather(rows, &targets);
      LossAndGradients lg = loss_and_gradients(model, batch, targets, &dropout_rng);
      if (!std::isfinite(lg.loss))
        fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                     std::to_string(start));
      rmsprop_step(model, lg.grads, cfg);
    }
    const double val = record(epoch);
    if (val < best) {
      best = val;
      best_params = model.params;
      history.best_epoch = epoch;
    }
  }
  model.params = std::move(best_params);
  return history;
}

// Runs the model over every frame of an utterance; the output is log-FB audio.
inline FeatureSequence predict_sequence(const RegressorModel& model, const FeatureSequence* audio,
                                        const FeatureSequence* visual, double frame_rate) {
  WindowedData data;
  append_utterance(data, model.config, audio, visual, nullptr);
  Matrix unused;
  Matrix pred(data.size(), static_cast<Eigen::Index>(model.config.output_dim));
  const Eigen::Index chunk = 512;
  for (Eigen::Index start = 0; start < data.size(); start += chunk) {
    const Eigen::Index n = std::min(chunk, data.size() - start);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    pred.middleRows(start, n) = forward(model, data.gather(rows, &unused));
  }
  return {std::move(pred), FeatureKind::LogFbAudio, frame_rate};
}

}  // namespace avse
