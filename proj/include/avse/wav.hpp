#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "avse/binary_io.hpp"
#include "avse/signal.hpp"

namespace avse {

namespace detail {
constexpr std::uint16_t kWavePcm = 1;
constexpr std::uint16_t kWaveFloat = 3;
constexpr std::uint16_t kWaveExtensible = 0xFFFE;
}  // namespace detail

// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float.
// PCM samples are divided by 32768.
inline AudioSignal read_wav(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  const std::string ctx = path.string();
  if (bytes.size() < 12 || std::string(bytes.data(), 4) != "RIFF" || std::string(bytes.data() + 8, 4) != "WAVE")
    fail(ErrorKind::MalformedHeader, ctx + ": not a RIFF/WAVE file");

  ByteReader in(bytes, ctx);
  in.skip(12);
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (in.remaining() >= 8) {
    const std::string id = in.bytes(4);
    const std::uint32_t size = in.u32();
    if (id == "fmt ") {
      if (size < 16 || in.remaining() < size) fail(ErrorKind::MalformedHeader, ctx + ": short fmt chunk");
      const std::size_t start = in.position();
      format = in.u16();
      channels = in.u16();
      rate = in.u32();
      in.skip(6);  // byte rate, block align
      bits = in.u16();
      if (format == detail::kWaveExtensible) {
        if (size < 40) fail(ErrorKind::MalformedHeader, ctx + ": short extensible fmt chunk");
        in.skip(8);  // cbSize, valid bits, channel mask
        format = in.u16();
      }
      in.skip(size - (in.position() - start));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail(ErrorKind::MalformedHeader, ctx + ": data chunk before fmt chunk");
      if (channels != 1)
        fail(ErrorKind::Multichannel, ctx + ": " + std::to_string(channels) + " channels (mono required)");
      if (rate == 0) fail(ErrorKind::MalformedHeader, ctx + ": zero sample rate");
      AudioSignal out;
      out.sample_rate = static_cast<int>(rate);
      if (format == detail::kWavePcm && bits == 16) {
        const std::size_t n = std::min<std::size_t>(size, in.remaining()) / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = in.i16() / 32768.0;
      } else if (format == detail::kWaveFloat && bits == 32) {
        const std::size_t n = std::min<std::size_t>(size, in.remaining()) / 4;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = in.f32();
      } else {
        fail(ErrorKind::UnsupportedCodec,
             ctx + ": format tag " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
      }
      out.validate();
      return out;
    } else {
      in.skip(std::min<std::size_t>(size + (size & 1u), in.remaining()));
    }
  }
  fail(ErrorKind::MalformedHeader, ctx + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline std::int16_t quantize_pcm16(double x) {
  const double hi = 1.0 - 0x1.0p-15;
  const double clipped = std::clamp(x, -1.0, hi);
  return static_cast<std::int16_t>(std::lround(clipped * 32768.0));
}

// 16-bit PCM output, samples clipped to [-1, 1 - 2^-15].
inline void write_wav(const AudioSignal& signal, const std::filesystem::path& path) {
  signal.validate();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  ByteWriter w;
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(detail::kWavePcm);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(signal.sample_rate));
  w.u32(static_cast<std::uint32_t>(signal.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (double s : signal.samples) w.i16(quantize_pcm16(s));
  write_file_atomic(path, w.data());
}

}  // namespace avse
