#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <numeric>
#include <set>

#include "avse/corpus.hpp"
#include "support/fixtures.hpp"
#include "support/stats.hpp"

using namespace avse;
using Catch::Approx;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("avse_test_corpus_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Noise scaled to the clean power exactly.
AudioSignal matched_noise(const AudioSignal& clean, std::size_t n, std::uint64_t seed) {
  AudioSignal noise = testing::white_noise(n, seed);
  const double k = std::sqrt(mean_square(clean.samples) / mean_square(noise.samples));
  for (double& v : noise.samples) v *= k;
  return noise;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("SNR mixing", "[corpus][mix]") {
  const AudioSignal clean = testing::speech_like(0.5, 1);
  SECTION("equal powers") {
    // noise the same length as clean, so the offset is 0 and powers match exactly
    const AudioSignal noise = matched_noise(clean, clean.size(), 2);
    const MixResult zero = mix_at_snr({clean, noise, 0.0, 5});
    CHECK(zero.offset == 0);
    CHECK(zero.scale == Approx(1.0).epsilon(1e-12));
    const MixResult minus6 = mix_at_snr({clean, noise, -20.0 * std::log10(2.0), 5});
    CHECK(minus6.scale == Approx(2.0).epsilon(1e-12));
    CHECK(-20.0 * std::log10(2.0) == Approx(-6.0206).margin(1e-4));
    for (std::size_t i = 0; i < clean.size(); i += 97)
      CHECK(minus6.noisy.samples[i] == Approx(clean.samples[i] + 2.0 * noise.samples[i]).margin(1e-15));
  }
  SECTION("vanishing noise") {
    const MixResult m = mix_at_snr({clean, testing::white_noise(clean.size() + 100, 3), 300.0, 1});
    CHECK(testing::max_abs_diff(m.noisy.samples, clean.samples, 0, clean.size()) < 1e-9);
  }
  SECTION("achieved SNR and offset independence") {
    const AudioSignal noise = testing::white_noise(clean.size() * 3, 4);
    for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
      std::size_t offset = 0;
      for (double snr : {-12.0, -9.0, -3.5, 0.0, 6.0, 12.0, 40.0}) {
        const MixResult m = mix_at_snr({clean, noise, snr, seed});
        CHECK(std::abs(m.achieved_snr_db - snr) < 1e-9);
        const double measured =
            10.0 * std::log10(mean_square(clean.samples) / mean_square(m.scaled_noise.samples));
        CHECK(std::abs(measured - snr) < 1e-9);
        if (snr == -12.0) offset = m.offset;
        CHECK(m.offset == offset);
        CHECK(m.scaled_noise.samples[10] == Approx(m.scale * noise.samples[m.offset + 10]).epsilon(1e-15));
      }
    }
    CHECK(mix_at_snr({clean, noise, 0.0, 0}).offset != mix_at_snr({clean, noise, 0.0, 1}).offset);
    const MixResult a = mix_at_snr({clean, noise, 3.0, 9}), b = mix_at_snr({clean, noise, 3.0, 9});
    CHECK(a.noisy.samples == b.noisy.samples);
  }
  SECTION("errors") {
    const AudioSignal silent{std::vector<double>(clean.size(), 0.0), clean.sample_rate};
    const AudioSignal noise = testing::white_noise(clean.size(), 5);
    CHECK(kind_of([&] { mix_at_snr({silent, noise, 0.0, 0}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { mix_at_snr({clean, silent, 0.0, 0}); }) == ErrorKind::InvalidArgument);
    const AudioSignal short_noise = testing::white_noise(clean.size() - 1, 5);
    CHECK(kind_of([&] { mix_at_snr({clean, short_noise, 0.0, 0}); }) == ErrorKind::InvalidArgument);
    const AudioSignal other_rate = testing::white_noise(clean.size(), 5, 0.1, 16000);
    CHECK(kind_of([&] { mix_at_snr({clean, other_rate, 0.0, 0}); }) == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("dataset splits", "[corpus][split]") {
  std::vector<int> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  const Splits<int> s = split_dataset(ids, SplitSpec{0.7, 0.1, 0.2, 3});
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);
  const Splits<int> again = split_dataset(ids, SplitSpec{0.7, 0.1, 0.2, 3});
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);

  for (std::size_t n : {1u, 2u, 3u, 7u, 10u, 33u, 101u}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      for (SplitSpec spec : {SplitSpec{0.7, 0.1, 0.2, seed}, SplitSpec{0.5, 0.25, 0.25, seed}, SplitSpec{0.2, 0.3, 0.5, seed}}) {
        std::vector<int> items(n);
        std::iota(items.begin(), items.end(), 100);
        const Splits<int> p = split_dataset(items, spec);
        std::multiset<int> all(p.train.begin(), p.train.end());
        all.insert(p.val.begin(), p.val.end());
        all.insert(p.test.begin(), p.test.end());
        CHECK(all == std::multiset<int>(items.begin(), items.end()));
        CHECK(p.train.size() == static_cast<std::size_t>(std::llround(n * spec.train)));
      }
    }
  }
  CHECK_THROWS_AS(split_dataset(std::vector<int>{}, SplitSpec{}), Error);
  CHECK_THROWS_AS(split_dataset(ids, SplitSpec{0.7, 0.2, 0.2, 0}), Error);
  CHECK_THROWS_AS(split_dataset(ids, SplitSpec{0.8, 0.0, 0.2, 0}), Error);
}

TEST_CASE("AVF1 feature files", "[corpus][avf]") {
  const auto dir = temp_dir("avf");
  Rng rng(1);
  Matrix v(7, 23);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.normal());
  const FeatureSequence seq{v, FeatureKind::LogFbAudio, 100.0};

  SECTION("bitwise round trip") {
    write_avf(seq, dir / "a.avf");
    const FeatureSequence back = read_avf(dir / "a.avf");
    CHECK(back.kind == seq.kind);
    CHECK(back.frame_rate == seq.frame_rate);
    CHECK(back.vectors == seq.vectors);
    CHECK(encode_avf(back) == encode_avf(seq));
    CHECK(std::filesystem::file_size(dir / "a.avf") == kAvfHeaderBytes + 7 * 23 * 4);
  }
  SECTION("visual kind with an arbitrary dimension") {
    const FeatureSequence vis{Matrix::Constant(3, 50, 0.25), FeatureKind::Visual, 29.97};
    const FeatureSequence back = decode_avf(encode_avf(vis));
    CHECK(back.kind == FeatureKind::Visual);
    CHECK(back.dim() == 50);
    CHECK(back.frame_rate == 29.97);
  }
  SECTION("empty sequence") {
    const FeatureSequence empty{Matrix(0, 23), FeatureKind::LinearFbAudio, 100.0};
    const std::vector<char> bytes = encode_avf(empty);
    CHECK(bytes.size() == kAvfHeaderBytes);
    const FeatureSequence back = decode_avf(bytes);
    CHECK(back.frames() == 0);
    CHECK(back.dim() == 23);
  }
  SECTION("structural errors") {
    const std::vector<char> bytes = encode_avf(seq);
    try {
      decode_avf(std::vector<char>(bytes.begin(), bytes.end() - 4));
      FAIL("expected truncation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Truncated);
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(7 * 23 * 4)) != std::string::npos);
      CHECK(msg.find(std::to_string(7 * 23 * 4 - 4)) != std::string::npos);
    }
    CHECK(kind_of([&] { decode_avf(std::vector<char>(bytes.begin(), bytes.begin() + 10)); }) == ErrorKind::Truncated);
    std::vector<char> bad = bytes;
    bad[3] = '2';
    CHECK(kind_of([&] { decode_avf(bad); }) == ErrorKind::Format);
    bad = bytes;
    bad[4] = 3;
    CHECK(kind_of([&] { decode_avf(bad); }) == ErrorKind::Format);
    bad = bytes;
    bad.push_back(0);
    CHECK(kind_of([&] { decode_avf(bad); }) == ErrorKind::Format);
    CHECK(kind_of([&] { read_avf(dir / "missing.avf"); }) == ErrorKind::NotFound);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpus", "[corpus][synth]") {
  SynthCorpusConfig cfg;
  cfg.utterances = 5;
  cfg.snr_levels = {-6.0, 0.0, 300.0};
  const auto corpus = synth_av_corpus(cfg);
  REQUIRE(corpus.size() == 5);
  CHECK(corpus[3].id == "utt0003");
  for (const auto& u : corpus) {
    CHECK(u.clean.frames() == 200);
    CHECK(u.clean.dim() == 23);
    CHECK(u.clean.kind == FeatureKind::LogFbAudio);
    CHECK(u.visual.dim() == 16);
    CHECK(u.visual.kind == FeatureKind::Visual);
    CHECK(u.noisy.size() == 3);
    CHECK((u.noisy.at(300.0).vectors - u.clean.vectors).cwiseAbs().maxCoeff() < 1e-6);
    // lower SNR, more contamination
    CHECK((u.noisy.at(-6.0).vectors - u.clean.vectors).squaredNorm() >
          (u.noisy.at(0.0).vectors - u.clean.vectors).squaredNorm());
  }

  SECTION("deterministic") {
    const auto again = synth_av_corpus(cfg);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      CHECK(encode_avf(again[i].clean) == encode_avf(corpus[i].clean));
      CHECK(encode_avf(again[i].visual) == encode_avf(corpus[i].visual));
      CHECK(encode_avf(again[i].noisy.at(-6.0)) == encode_avf(corpus[i].noisy.at(-6.0)));
    }
  }
  SECTION("visual features carry clean-speech information") {
    Matrix vis(1000, 16), aud(1000, 23);
    for (Eigen::Index u = 0; u < 5; ++u) {
      vis.middleRows(u * 200, 200) = corpus[static_cast<std::size_t>(u)].visual.vectors;
      aud.middleRows(u * 200, 200) = corpus[static_cast<std::size_t>(u)].clean.vectors;
    }
    const double rho = testing::first_canonical_correlation(vis, aud);
    INFO("first canonical correlation " << rho);
    CHECK(rho > 0.5);
  }
  SECTION("written corpus and manifest") {
    const auto dir = temp_dir("synth");
    const auto rows = write_synth_corpus(cfg, SplitSpec{0.6, 0.2, 0.2, 1}, dir);
    CHECK(rows.size() == 15);
    const auto read = read_manifest(dir / "manifest.csv");
    REQUIRE(read.size() == rows.size());
    std::map<std::string, int> per_split;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(read[i].utterance_id == rows[i].utterance_id);
      CHECK(read[i].split == rows[i].split);
      CHECK(read[i].snr_db == rows[i].snr_db);
      CHECK(read[i].noisy_path == rows[i].noisy_path);
      if (read[i].snr_db == 0.0) ++per_split[read[i].split];
    }
    CHECK(per_split["train"] == 3);
    CHECK(per_split["val"] == 1);
    CHECK(per_split["test"] == 1);
    CHECK(rows[1].noisy_path == "utt0000/noisy_snr+0.avf");
    CHECK(rows[0].noisy_path == "utt0000/noisy_snr-6.avf");
    CHECK(read_avf(dir / rows[4].noisy_path).vectors.cast<float>().cast<double>() ==
          corpus[1].noisy.at(0.0).vectors.cast<float>().cast<double>());

    const auto dir2 = temp_dir("synth2");
    write_synth_corpus(cfg, SplitSpec{0.6, 0.2, 0.2, 1}, dir2);
    for (const auto& r : rows) CHECK(read_file_bytes(dir / r.noisy_path) == read_file_bytes(dir2 / r.noisy_path));
    CHECK(read_file_bytes(dir / "manifest.csv") == read_file_bytes(dir2 / "manifest.csv"));
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
  }
  SECTION("manifest errors") {
    const auto dir = temp_dir("manifest");
    write_file_atomic(dir / "bad.csv", std::string("id,split\n"));
    CHECK(kind_of([&] { read_manifest(dir / "bad.csv"); }) == ErrorKind::Format);
    write_file_atomic(dir / "short.csv", manifest_header() + "\nutt0000,train,0,a,b\n");
    CHECK(kind_of([&] { read_manifest(dir / "short.csv"); }) == ErrorKind::Format);
    write_file_atomic(dir / "snr.csv", manifest_header() + "\nutt0000,train,loud,a,b,c\n");
    CHECK(kind_of([&] { read_manifest(dir / "snr.csv"); }) == ErrorKind::Format);
    std::filesystem::remove_all(dir);
  }
}
