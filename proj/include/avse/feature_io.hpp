#pragma once

#include <filesystem>
#include <string>

#include "avse/binary_io.hpp"
#include "avse/filterbank.hpp"

namespace avse {

// AVF1 layout (little-endian):
//   "AVF1" | u32 kind | u32 T | u32 M | f64 frame_rate | T*M f32, row-major
inline constexpr std::size_t kAvfHeaderBytes = 4 + 4 + 4 + 4 + 8;

inline std::vector<char> encode_avf(const FeatureSequence& seq) {
  ByteWriter w;
  w.bytes("AVF1");
  w.u32(static_cast<std::uint32_t>(seq.kind));
  w.u32(static_cast<std::uint32_t>(seq.frames()));
  w.u32(static_cast<std::uint32_t>(seq.dim()));
  w.f64(seq.frame_rate);
  for (Eigen::Index t = 0; t < seq.vectors.rows(); ++t)
    for (Eigen::Index m = 0; m < seq.vectors.cols(); ++m) w.f32(static_cast<float>(seq.vectors(t, m)));
  return w.data();
}

inline FeatureSequence decode_avf(const std::vector<char>& bytes, const std::string& context = "AVF1") {
  ByteReader in(bytes, context);
  if (bytes.size() < 4 || in.bytes(4) != "AVF1") fail(ErrorKind::Format, context + ": bad magic (expected AVF1)");
  const std::uint32_t kind = in.u32();
  if (kind > 2) fail(ErrorKind::Format, context + ": feature kind " + std::to_string(kind) + " out of range");
  const std::uint32_t frames = in.u32();
  const std::uint32_t dim = in.u32();
  const double rate = in.f64();
  const std::size_t expected = static_cast<std::size_t>(frames) * dim * 4;
  if (in.remaining() != expected)
    fail(in.remaining() < expected ? ErrorKind::Truncated : ErrorKind::Format,
         context + ": payload expected " + std::to_string(expected) + " bytes, actual " +
             std::to_string(in.remaining()));
  FeatureSequence seq{Matrix(frames, dim), static_cast<FeatureKind>(kind), rate};
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t m = 0; m < dim; ++m) seq.vectors(t, m) = in.f32();
  return seq;
}

inline void write_avf(const FeatureSequence& seq, const std::filesystem::path& path) {
  write_file_atomic(path, encode_avf(seq));
}

inline FeatureSequence read_avf(const std::filesystem::path& path) {
  return decode_avf(read_file_bytes(path), path.string());
}

}  // namespace avse
