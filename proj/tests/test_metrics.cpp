#include <catch2/catch_amalgamated.hpp>

#include "avse/corpus.hpp"
#include "avse/metrics.hpp"
#include "support/fixtures.hpp"

using namespace avse;
using Catch::Approx;

namespace {

// Frame-by-frame segmental SNR written out directly.
double brute_segsnr(const std::vector<double>& ref, const std::vector<double>& deg) {
  double sum = 0.0;
  int used = 0;
  for (std::size_t start = 0; start + 800 <= std::min(ref.size(), deg.size()); start += 500) {
    double s = 0.0, e = 0.0;
    for (std::size_t i = start; i < start + 800; ++i) {
      s += ref[i] * ref[i];
      e += (ref[i] - deg[i]) * (ref[i] - deg[i]);
    }
    if (s <= 1e-8) continue;
    sum += std::min(35.0, std::max(-10.0, 10.0 * std::log10(s / e)));
    ++used;
  }
  return sum / used;
}

AudioSignal scaled(const AudioSignal& x, double k) {
  AudioSignal y = x;
  for (double& v : y.samples) v *= k;
  return y;
}

}  // namespace

TEST_CASE("segmental SNR", "[metrics][segsnr]") {
  const AudioSignal ref = testing::speech_like(1.0, 3);

  std::size_t used = 0;
  CHECK(segsnr(ref, ref, {}, &used) == 35.0);
  CHECK(used > 0);
  CHECK(used < 99);  // leading silence and pauses are skipped

  const AudioSignal inverted = scaled(ref, -1.0);
  CHECK(segsnr(ref, inverted) == Approx(10.0 * std::log10(0.25)).epsilon(1e-12));
  CHECK(10.0 * std::log10(0.25) == Approx(-6.02).margin(0.001));

  SECTION("stationary reference at 0 dB") {
    const AudioSignal stationary = testing::white_noise(50000, 7);
    const MixResult m = mix_at_snr({stationary, testing::white_noise(60000, 8), 0.0, 2});
    const double value = segsnr(stationary, m.noisy);
    CHECK(value == Approx(brute_segsnr(stationary.samples, m.noisy.samples)).epsilon(1e-12));
    CHECK(std::abs(value) < 1.0);
  }
  SECTION("speech reference against the brute-force evaluation") {
    const MixResult m = mix_at_snr({ref, testing::white_noise(60000, 9), 5.0, 3});
    CHECK(segsnr(ref, m.noisy) == Approx(brute_segsnr(ref.samples, m.noisy.samples)).epsilon(1e-12));
  }
  SECTION("joint scaling leaves the value unchanged") {
    // the energy threshold is absolute, so the property holds while the set of
    // counted frames stays the same
    const AudioSignal stationary = testing::white_noise(50000, 11);
    const MixResult w = mix_at_snr({stationary, testing::white_noise(60000, 12), -3.0, 4});
    const double wbase = segsnr(stationary, w.noisy);
    for (double k : {0.5, 3.0, 100.0})
      CHECK(segsnr(scaled(stationary, k), scaled(w.noisy, k)) == Approx(wbase).epsilon(1e-9));

    const MixResult m = mix_at_snr({ref, testing::white_noise(60000, 10), -3.0, 4});
    std::size_t base_frames = 0;
    const double base = segsnr(ref, m.noisy, {}, &base_frames);
    for (double k : {0.5, 3.0, 100.0}) {
      std::size_t frames = 0;
      const double v = segsnr(scaled(ref, k), scaled(m.noisy, k), {}, &frames);
      if (frames == base_frames) CHECK(v == Approx(base).epsilon(1e-9));
    }
  }
  SECTION("clamping") {
    const AudioSignal zero{std::vector<double>(ref.size(), 0.0), ref.sample_rate};
    CHECK(segsnr(ref, scaled(ref, -1e6)) == -10.0);
    CHECK(segsnr(ref, zero) == Approx(0.0).margin(1e-12));
  }
  SECTION("errors and truncation") {
    const AudioSignal zero{std::vector<double>(ref.size(), 0.0), ref.sample_rate};
    CHECK_THROWS_AS(segsnr(zero, ref), Error);
    AudioSignal other = ref;
    other.sample_rate = 16000;
    CHECK_THROWS_AS(segsnr(ref, other), Error);
    AudioSignal longer = ref;
    longer.samples.resize(ref.size() + 1234, 0.5);
    CHECK(segsnr(ref, longer) == 35.0);
  }
}

TEST_CASE("log-spectral distance", "[metrics][lsd]") {
  const StftConfig cfg;
  const AudioSignal a = testing::white_noise(20000, 1);
  const AudioSignal b = testing::speech_like(0.4, 2, 50000, 0.0);

  CHECK(lsd(a, a, cfg) == 0.0);
  CHECK(lsd(a, scaled(a, 2.0), cfg) == Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
  CHECK(20.0 * std::log10(2.0) == Approx(6.02).margin(0.001));
  CHECK(lsd(a, b, cfg) == lsd(b, a, cfg));
  CHECK(lsd(a, b, cfg) > 0.0);
  CHECK(std::isfinite(lsd(a, AudioSignal{std::vector<double>(20000, 0.0), 50000}, cfg)));
  CHECK_THROWS_AS(lsd(a, AudioSignal{{}, 50000}, cfg), Error);
  CHECK_THROWS_AS(lsd(a, AudioSignal{std::vector<double>(100, 0.1), 50000}, cfg), Error);
}

TEST_CASE("metric reports", "[metrics]") {
  const AudioSignal ref = testing::speech_like(1.0, 5);
  const MixResult m = mix_at_snr({ref, testing::white_noise(60000, 6), 0.0, 1});
  const MetricReport r = evaluate(ref, m.noisy, StftConfig{});
  CHECK(r.segsnr_db == segsnr(ref, m.noisy));
  CHECK(r.lsd_db == lsd(ref, m.noisy, StftConfig{}));
  CHECK(r.frames_used > 0);
  CHECK(metric_csv_header() == "utterance_id,method,snr_db,segsnr_db,lsd_db");
  MetricReport fixed{1.5, 2.25, 10};
  CHECK(metric_csv_row("utt0001", "evwf", -6.0, fixed) == "utt0001,evwf,-6.0000,1.500000,2.250000");

  Matrix x(2, 2), y = Matrix::Zero(2, 2);
  x << 1, 2, 3, 4;
  CHECK(feature_mse(x, y) == 30.0 / 4.0);
  CHECK_THROWS_AS(feature_mse(x, Matrix::Zero(1, 2)), Error);
}
