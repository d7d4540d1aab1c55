#pragma once

#include <filesystem>
#include <string>

#include "avse/binary_io.hpp"
#include "avse/model.hpp"

namespace avse {

// EVWM1 layout (little-endian):
//   "EVWM1"
//   config: u32 mode, u32 window, u32 audio_dim, u32 visual_input, u32 visual_dim,
//           u32 image_h, u32 image_w, u32 n_conv, n_conv x u32 filters,
//           u32 kernel_h, u32 kernel_w, u32 pool_h, u32 pool_w, u32 visual_embed,
//           u32 visual_lstm, u32 audio_lstm1, u32 audio_lstm2, u32 fusion1,
//           u32 fusion2, u32 output_dim, f64 dropout, u64 seed
//   u32 parameter count, then per parameter:
//           u32 name length, name bytes, u32 ndim, ndim x u32 dims, f32 values
inline std::vector<char> encode_checkpoint(const RegressorModel& model) {
  const ModelConfig& c = model.config;
  ByteWriter w;
  w.bytes("EVWM1");
  auto u = [&](std::size_t v) { w.u32(static_cast<std::uint32_t>(v)); };
  u(static_cast<std::size_t>(c.mode));
  u(c.window);
  u(c.audio_dim);
  u(static_cast<std::size_t>(c.visual_input));
  u(c.visual_dim);
  u(c.image_height);
  u(c.image_width);
  u(c.conv_filters.size());
  for (auto f : c.conv_filters) u(f);
  u(c.conv_kernel_h);
  u(c.conv_kernel_w);
  u(c.pool_h);
  u(c.pool_w);
  u(c.visual_embed);
  u(c.visual_lstm_cells);
  u(c.audio_lstm1_cells);
  u(c.audio_lstm2_cells);
  u(c.fusion1);
  u(c.fusion2);
  u(c.output_dim);
  w.f64(c.dropout_rate);
  w.u64(c.seed);
  u(model.params.size());
  for (const auto& [name, t] : model.params) {
    u(name.size());
    w.bytes(name);
    u(t.shape.size());
    for (auto d : t.shape) u(d);
    for (double v : t.data) w.f32(static_cast<float>(v));
  }
  return w.data();
}

inline RegressorModel decode_checkpoint(const std::vector<char>& bytes, const std::string& context = "EVWM1") {
  ByteReader in(bytes, context);
  if (bytes.size() < 5 || in.bytes(5) != "EVWM1") fail(ErrorKind::Format, context + ": bad magic (expected EVWM1)");
  ModelConfig c;
  const std::uint32_t mode = in.u32();
  if (mode > 2) fail(ErrorKind::Format, context + ": model mode out of range");
  c.mode = static_cast<ModelMode>(mode);
  c.window = in.u32();
  c.audio_dim = in.u32();
  const std::uint32_t vin = in.u32();
  if (vin > 1) fail(ErrorKind::Format, context + ": visual input kind out of range");
  c.visual_input = static_cast<VisualInput>(vin);
  c.visual_dim = in.u32();
  c.image_height = in.u32();
  c.image_width = in.u32();
  const std::uint32_t n_conv = in.u32();
  if (n_conv > 64) fail(ErrorKind::Format, context + ": implausible conv stage count");
  c.conv_filters.resize(n_conv);
  for (auto& f : c.conv_filters) f = in.u32();
  c.conv_kernel_h = in.u32();
  c.conv_kernel_w = in.u32();
  c.pool_h = in.u32();
  c.pool_w = in.u32();
  c.visual_embed = in.u32();
  c.visual_lstm_cells = in.u32();
  c.audio_lstm1_cells = in.u32();
  c.audio_lstm2_cells = in.u32();
  c.fusion1 = in.u32();
  c.fusion2 = in.u32();
  c.output_dim = in.u32();
  c.dropout_rate = in.f64();
  c.seed = in.u64();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, context + ": invalid model config: " + e.what());
  }

  RegressorModel model = build_model(c);
  const std::uint32_t count = in.u32();
  if (count != model.params.size())
    fail(ErrorKind::Format, context + ": " + std::to_string(count) + " parameters stored, config implies " +
                                std::to_string(model.params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.bytes(in.u32());
    auto it = model.params.find(name);
    if (it == model.params.end()) fail(ErrorKind::Format, context + ": unexpected parameter '" + name + "'");
    const std::uint32_t ndim = in.u32();
    if (ndim > 8) fail(ErrorKind::Format, context + ": parameter '" + name + "' has implausible rank " + std::to_string(ndim));
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = in.u32();
    if (shape != it->second.shape)
      fail(ErrorKind::Format, context + ": parameter '" + name + "' stored with shape " + shape_string(shape) +
                                  ", config implies " + shape_string(it->second.shape));
    in.need(it->second.size() * 4);
    for (double& v : it->second.data) v = in.f32();
  }
  if (in.remaining() != 0)
    fail(ErrorKind::Format, context + ": " + std::to_string(in.remaining()) + " trailing bytes after parameters");
  return model;
}

inline void save_checkpoint(const RegressorModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

inline RegressorModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace avse
