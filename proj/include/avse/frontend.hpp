#pragma once

#include "avse/filterbank.hpp"
#include "avse/signal.hpp"

namespace avse {

// STFT framing plus mel filterbank for one sample rate.
struct AudioFrontEnd {
  StftConfig stft;
  MelFilterbank filterbank;

  double frame_rate(int sample_rate) const { return static_cast<double>(sample_rate) / static_cast<double>(stft.hop); }
};

inline AudioFrontEnd make_front_end(int sample_rate, std::size_t channels = 23, std::size_t fft_len = 2048) {
  AudioFrontEnd fe;
  fe.stft = StftConfig::for_rate(sample_rate, 16.0, 10.0, fft_len);
  fe.filterbank = build_filterbank(channels, fe.stft.fft_len, sample_rate);
  return fe;
}

inline FeatureSequence extract_logfb(const AudioSignal& signal, const AudioFrontEnd& fe) {
  return apply_logfb(power_spectrum(stft(signal, fe.stft)), fe.filterbank, fe.frame_rate(signal.sample_rate));
}

}  // namespace avse
