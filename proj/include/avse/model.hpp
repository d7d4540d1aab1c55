#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avse/layers.hpp"
#include "avse/rng.hpp"
#include "avse/tensor.hpp"

namespace avse {

enum class ModelMode : std::uint32_t { AudioOnly = 0, VisualOnly = 1, AudioVisual = 2 };
enum class VisualInput : std::uint32_t { Vector = 0, Image = 1 };

inline const char* to_string(ModelMode m) {
  switch (m) {
    case ModelMode::AudioOnly: return "a_only";
    case ModelMode::VisualOnly: return "v_only";
    case ModelMode::AudioVisual: return "av";
  }
  return "?";
}

struct ModelConfig {
  ModelMode mode = ModelMode::AudioVisual;
  std::size_t window = 6;  // current frame plus window - 1 prior frames
  std::size_t audio_dim = 23;
  VisualInput visual_input = VisualInput::Vector;
  std::size_t visual_dim = 50;  // vector input
  std::size_t image_height = 64, image_width = 64;
  std::vector<std::size_t> conv_filters = {16, 32, 64, 128};
  std::size_t conv_kernel_h = 3, conv_kernel_w = 5;
  std::size_t pool_h = 2, pool_w = 2;
  std::size_t visual_embed = 64;  // dense embedding for vector visual input
  std::size_t visual_lstm_cells = 100;
  std::size_t audio_lstm1_cells = 250;
  std::size_t audio_lstm2_cells = 300;
  std::size_t fusion1 = 300, fusion2 = 150;
  std::size_t output_dim = 23;
  double dropout_rate = 0.20;
  std::uint64_t seed = 0;

  bool uses_audio() const { return mode != ModelMode::VisualOnly; }
  bool uses_visual() const { return mode != ModelMode::AudioOnly; }

  std::size_t visual_frame_size() const {
    return visual_input == VisualInput::Vector ? visual_dim : image_height * image_width;
  }

  void validate() const {
    require(window >= 1, ErrorKind::InvalidArgument, "context window must be >= 1");
    require(output_dim >= 1, ErrorKind::InvalidArgument, "output_dim must be >= 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::InvalidArgument, "dropout rate must lie in [0, 1)");
    if (uses_audio())
      require(audio_dim >= 1 && audio_lstm1_cells >= 1 && audio_lstm2_cells >= 1, ErrorKind::InvalidArgument,
              "audio branch sizes must be >= 1");
    if (uses_visual()) {
      require(visual_lstm_cells >= 1, ErrorKind::InvalidArgument, "visual LSTM size must be >= 1");
      if (visual_input == VisualInput::Vector) {
        require(visual_dim >= 1 && visual_embed >= 1, ErrorKind::InvalidArgument, "visual vector sizes must be >= 1");
      } else {
        require(image_height >= 1 && image_width >= 1 && !conv_filters.empty(), ErrorKind::InvalidArgument,
                "image input needs a size and at least one conv stage");
        for (auto f : conv_filters) require(f >= 1, ErrorKind::InvalidArgument, "conv filter counts must be >= 1");
        require(conv_kernel_h % 2 == 1 && conv_kernel_w % 2 == 1, ErrorKind::InvalidArgument,
                "same padding needs odd kernel sizes");
        require(pool_h == 2 && pool_w == 2, ErrorKind::InvalidArgument, "only 2x2 pooling is supported");
      }
    }
    if (mode == ModelMode::AudioVisual)
      require(fusion1 >= 1 && fusion2 >= 1, ErrorKind::InvalidArgument, "fusion sizes must be >= 1");
  }

  // Spatial shape that leaves the conv/pool stack.
  ImageShape conv_output_shape() const {
    ImageShape s{image_height, image_width, 1};
    for (auto f : conv_filters) s = pooled_shape({s.height, s.width, f});
    return s;
  }
};

struct RegressorModel {
  ModelConfig config;
  TensorMap params;
  TensorMap rmsprop_cache;

  const Tensor& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorKind::ShapeMismatch, "model has no parameter '" + name + "'");
    return it->second;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
  }
};

namespace detail {

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 0, fan_out = 0;  // zero for biases
  bool lstm_bias = false;
};

inline void add_dense(std::vector<ParamSpec>& out, const std::string& name, std::size_t in, std::size_t units) {
  out.push_back({name + ".w", {in, units}, in, units});
  out.push_back({name + ".b", {units}, 0, 0});
}

inline void add_lstm(std::vector<ParamSpec>& out, const std::string& name, std::size_t in, std::size_t cells) {
  out.push_back({name + ".wx", {in, 4 * cells}, in, 4 * cells});
  out.push_back({name + ".wh", {cells, 4 * cells}, cells, 4 * cells});
  out.push_back({name + ".b", {4 * cells}, 0, 0, true});
}

inline std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  std::size_t head_in = 0;
  if (c.uses_audio()) {
    add_lstm(specs, "audio_lstm1", c.audio_dim, c.audio_lstm1_cells);
    add_lstm(specs, "audio_lstm2", c.audio_lstm1_cells, c.audio_lstm2_cells);
    head_in += c.audio_lstm2_cells;
  }
  if (c.uses_visual()) {
    std::size_t lstm_in = 0;
    if (c.visual_input == VisualInput::Vector) {
      add_dense(specs, "visual_embed", c.visual_dim, c.visual_embed);
      lstm_in = c.visual_embed;
    } else {
      std::size_t cin = 1;
      const std::size_t taps = c.conv_kernel_h * c.conv_kernel_w;
      for (std::size_t s = 0; s < c.conv_filters.size(); ++s) {
        const std::string name = "visual_conv" + std::to_string(s + 1);
        const std::size_t cout = c.conv_filters[s];
        specs.push_back({name + ".kernel", {c.conv_kernel_h, c.conv_kernel_w, cin, cout}, taps * cin, taps * cout});
        specs.push_back({name + ".b", {cout}, 0, 0});
        cin = cout;
      }
      lstm_in = c.conv_output_shape().size();
    }
    add_lstm(specs, "visual_lstm", lstm_in, c.visual_lstm_cells);
    head_in += c.visual_lstm_cells;
  }
  if (c.mode == ModelMode::AudioVisual) {
    add_dense(specs, "fusion1", head_in, c.fusion1);
    add_dense(specs, "fusion2", c.fusion1, c.fusion2);
    head_in = c.fusion2;
  }
  add_dense(specs, "output", head_in, c.output_dim);
  return specs;
}

}  // namespace detail

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases and
// LSTM forget-gate biases of 1. Parameters are drawn in name order from a
// generator seeded with config.seed.
inline RegressorModel build_model(const ModelConfig& config) {
  config.validate();
  RegressorModel model;
  model.config = config;
  std::map<std::string, detail::ParamSpec> ordered;
  for (auto& s : detail::parameter_specs(config)) {
    require(!ordered.count(s.name), ErrorKind::InvalidArgument, "duplicate parameter " + s.name);
    ordered.emplace(s.name, s);
  }
  Rng rng(config.seed);
  for (const auto& [name, spec] : ordered) {
    Tensor t(spec.shape);
    if (spec.fan_in > 0) {
      const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      for (double& v : t.data) v = rng.uniform(-limit, limit);
    } else if (spec.lstm_bias) {
      const std::size_t cells = spec.shape[0] / 4;
      for (std::size_t i = cells; i < 2 * cells; ++i) t.data[i] = 1.0;
    }
    model.rmsprop_cache.emplace(name, Tensor(spec.shape));
    model.params.emplace(name, std::move(t));
  }
  return model;
}

// Time-major batch: audio[t] is B x audio_dim, visual[t] is B x frame size,
// for t = 0 (oldest) .. window - 1 (current frame).
struct Batch {
  std::vector<Matrix> audio;
  std::vector<Matrix> visual;

  Eigen::Index size() const {
    if (!audio.empty()) return audio.front().rows();
    if (!visual.empty()) return visual.front().rows();
    return 0;
  }
};

struct ForwardTrace {
  LstmCache audio1, audio2;
  std::vector<Matrix> audio1_masks;
  Matrix audio2_mask;
  std::vector<DenseCache> embed;                   // per step, vector input
  std::vector<std::vector<ConvCache>> conv;        // per step, per stage
  std::vector<std::vector<PoolCache>> pool;        // per step, per stage
  LstmCache visual;
  Matrix visual_mask;
  DenseCache fusion1, fusion2, output;
  Matrix prediction;
};

namespace detail {

inline LstmParamsView lstm_view(const RegressorModel& m, const std::string& name) {
  return {m.param(name + ".wx").matrix(), m.param(name + ".wh").matrix(), m.param(name + ".b").row()};
}

inline void check_batch(const ModelConfig& c, const Batch& batch) {
  const Eigen::Index b = batch.size();
  require(b > 0, ErrorKind::ShapeMismatch, "empty batch");
  auto check = [&](const std::vector<Matrix>& seq, std::size_t dim, const char* what) {
    require(seq.size() == c.window, ErrorKind::ShapeMismatch,
            std::string(what) + " window length " + std::to_string(seq.size()) + " != configured " +
                std::to_string(c.window));
    for (const auto& m : seq)
      require(m.rows() == b && static_cast<std::size_t>(m.cols()) == dim, ErrorKind::ShapeMismatch,
              std::string(what) + " frame shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                  ", expected " + std::to_string(b) + "x" + std::to_string(dim));
  };
  if (c.uses_audio()) check(batch.audio, c.audio_dim, "audio");
  if (c.uses_visual()) check(batch.visual, c.visual_frame_size(), "visual");
}

}  // namespace detail

// Predictions (B x output_dim). Training mode draws dropout masks from `rng`.
inline Matrix forward(const RegressorModel& model, const Batch& batch, bool training = false, Rng* rng = nullptr,
                      ForwardTrace* trace = nullptr) {
  const ModelConfig& c = model.config;
  detail::check_batch(c, batch);
  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  const double rate = c.dropout_rate;
  const std::size_t steps = c.window;

  std::vector<Matrix> head_parts;
  if (c.uses_audio()) {
    std::vector<Matrix> h1 = lstm_forward(batch.audio, detail::lstm_view(model, "audio_lstm1"), &tr.audio1);
    tr.audio1_masks.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) h1[t] = dropout_forward(h1[t], rate, training, rng, &tr.audio1_masks[t]);
    const std::vector<Matrix> h2 = lstm_forward(h1, detail::lstm_view(model, "audio_lstm2"), &tr.audio2);
    head_parts.push_back(dropout_forward(h2.back(), rate, training, rng, &tr.audio2_mask));
  }
  if (c.uses_visual()) {
    std::vector<Matrix> frames(steps);
    if (c.visual_input == VisualInput::Vector) {
      tr.embed.resize(steps);
      for (std::size_t t = 0; t < steps; ++t)
        frames[t] = dense_forward(batch.visual[t], model.param("visual_embed.w").matrix(),
                                  model.param("visual_embed.b").row(), Activation::Tanh, &tr.embed[t]);
    } else {
      tr.conv.assign(steps, std::vector<ConvCache>(c.conv_filters.size()));
      tr.pool.assign(steps, std::vector<PoolCache>(c.conv_filters.size()));
      for (std::size_t t = 0; t < steps; ++t) {
        Matrix x = batch.visual[t];
        ImageShape shape{c.image_height, c.image_width, 1};
        for (std::size_t s = 0; s < c.conv_filters.size(); ++s) {
          const std::string name = "visual_conv" + std::to_string(s + 1);
          x = conv2d_forward(x, shape, c.conv_kernel_h, c.conv_kernel_w, model.param(name + ".kernel").matrix(),
                             model.param(name + ".b").row(), &tr.conv[t][s]);
          shape.channels = c.conv_filters[s];
          x = maxpool2d(x, shape, &tr.pool[t][s]);
          shape = pooled_shape(shape);
        }
        frames[t] = std::move(x);
      }
    }
    const std::vector<Matrix> hv = lstm_forward(frames, detail::lstm_view(model, "visual_lstm"), &tr.visual);
    head_parts.push_back(dropout_forward(hv.back(), rate, training, rng, &tr.visual_mask));
  }

  Matrix head_in;
  if (head_parts.size() == 1) {
    head_in = std::move(head_parts.front());
  } else {
    head_in.resize(head_parts[0].rows(), head_parts[0].cols() + head_parts[1].cols());
    head_in << head_parts[0], head_parts[1];
  }
  if (c.mode == ModelMode::AudioVisual) {
    head_in = dense_forward(head_in, model.param("fusion1.w").matrix(), model.param("fusion1.b").row(),
                            Activation::Tanh, &tr.fusion1);
    head_in = dense_forward(head_in, model.param("fusion2.w").matrix(), model.param("fusion2.b").row(),
                            Activation::Tanh, &tr.fusion2);
  }
  tr.prediction = dense_forward(head_in, model.param("output.w").matrix(), model.param("output.b").row(),
                                Activation::Linear, &tr.output);
  return tr.prediction;
}

// Sum over elements of 0.5 (estimated - clean)^2, averaged over the batch.
inline double mse_loss(const Matrix& estimated, const Matrix& clean) {
  require(estimated.rows() == clean.rows() && estimated.cols() == clean.cols() && estimated.rows() > 0,
          ErrorKind::ShapeMismatch, "mse_loss: shape mismatch");
  return 0.5 * (estimated - clean).squaredNorm() / static_cast<double>(estimated.rows());
}

struct LossAndGradients {
  double loss = 0.0;
  Matrix prediction;
  TensorMap grads;
};

// Reverse-mode gradients of mse_loss for every parameter. With a generator the
// forward pass runs in training mode and the same dropout masks are reused on
// the way back.
inline LossAndGradients loss_and_gradients(const RegressorModel& model, const Batch& batch, const Matrix& targets,
                                           Rng* dropout_rng = nullptr) {
  const ModelConfig& c = model.config;
  ForwardTrace tr;
  LossAndGradients out;
  out.prediction = forward(model, batch, dropout_rng != nullptr, dropout_rng, &tr);
  out.loss = mse_loss(out.prediction, targets);
  for (const auto& [name, p] : model.params) out.grads.emplace(name, Tensor(p.shape));
  auto put = [&](const std::string& name, const Matrix& value) { out.grads.at(name).matrix() += value; };
  auto put_lstm = [&](const std::string& name, const LstmGrads& g) {
    put(name + ".wx", g.dwx);
    put(name + ".wh", g.dwh);
    out.grads.at(name + ".b").row() += g.db;
  };
  auto put_dense = [&](const std::string& name, const DenseGrads& g) {
    put(name + ".w", g.dw);
    out.grads.at(name + ".b").row() += g.db;
  };

  const Matrix dpred = (out.prediction - targets) / static_cast<double>(targets.rows());
  DenseGrads g_out = dense_backward(dpred, tr.output, model.param("output.w").matrix(), Activation::Linear);
  put_dense("output", g_out);
  Matrix dhead = std::move(g_out.dx);
  if (c.mode == ModelMode::AudioVisual) {
    DenseGrads g2 = dense_backward(dhead, tr.fusion2, model.param("fusion2.w").matrix(), Activation::Tanh);
    put_dense("fusion2", g2);
    DenseGrads g1 = dense_backward(g2.dx, tr.fusion1, model.param("fusion1.w").matrix(), Activation::Tanh);
    put_dense("fusion1", g1);
    dhead = std::move(g1.dx);
  }

  const std::size_t steps = c.window;
  Eigen::Index offset = 0;
  if (c.uses_audio()) {
    const auto width = static_cast<Eigen::Index>(c.audio_lstm2_cells);
    std::vector<Matrix> dh2(steps);
    dh2.back() = dhead.middleCols(offset, width).cwiseProduct(tr.audio2_mask);
    offset += width;
    LstmGrads g2 = lstm_backward(dh2, tr.audio2, detail::lstm_view(model, "audio_lstm2"));
    put_lstm("audio_lstm2", g2);
    std::vector<Matrix> dh1(steps);
    for (std::size_t t = 0; t < steps; ++t) dh1[t] = g2.dxs[t].cwiseProduct(tr.audio1_masks[t]);
    put_lstm("audio_lstm1", lstm_backward(dh1, tr.audio1, detail::lstm_view(model, "audio_lstm1")));
  }
  if (c.uses_visual()) {
    const auto width = static_cast<Eigen::Index>(c.visual_lstm_cells);
    std::vector<Matrix> dhv(steps);
    dhv.back() = dhead.middleCols(offset, width).cwiseProduct(tr.visual_mask);
    LstmGrads gv = lstm_backward(dhv, tr.visual, detail::lstm_view(model, "visual_lstm"));
    put_lstm("visual_lstm", gv);
    for (std::size_t t = 0; t < steps; ++t) {
      if (c.visual_input == VisualInput::Vector) {
        put_dense("visual_embed", dense_backward(gv.dxs[t], tr.embed[t], model.param("visual_embed.w").matrix(),
                                                 Activation::Tanh));
        continue;
      }
      std::vector<ImageShape> conv_in(c.conv_filters.size());
      ImageShape shape{c.image_height, c.image_width, 1};
      for (std::size_t s = 0; s < c.conv_filters.size(); ++s) {
        conv_in[s] = shape;
        shape = pooled_shape({shape.height, shape.width, c.conv_filters[s]});
      }
      Matrix d = gv.dxs[t];
      for (std::size_t s = c.conv_filters.size(); s-- > 0;) {
        const std::string name = "visual_conv" + std::to_string(s + 1);
        const ImageShape conv_out{conv_in[s].height, conv_in[s].width, c.conv_filters[s]};
        d = maxpool2d_backward(d, tr.pool[t][s], conv_out);
        ConvGrads gc = conv2d_backward(d, tr.conv[t][s], conv_in[s], c.conv_kernel_h, c.conv_kernel_w,
                                       model.param(name + ".kernel").matrix());
        put(name + ".kernel", gc.dkernel);
        out.grads.at(name + ".b").row() += gc.dbias;
        d = std::move(gc.dx);
      }
    }
  }
  return out;
}

inline TensorMap backward(const RegressorModel& model, const Batch& batch, const Matrix& targets,
                          Rng* dropout_rng = nullptr) {
  return loss_and_gradients(model, batch, targets, dropout_rng).grads;
}

}  // namespace avse
