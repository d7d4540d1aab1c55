#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "avse/checkpoint.hpp"
#include "avse/training.hpp"
#include "support/gradcheck.hpp"

using namespace avse;
using Catch::Approx;
using testing::random_matrix;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("avse_test_training_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

FeatureSequence sequence(const Matrix& m, FeatureKind kind = FeatureKind::LogFbAudio) { return {m, kind, 100.0}; }

ModelConfig small_audio_config(std::size_t in, std::size_t out, std::size_t window = 1) {
  ModelConfig c;
  c.mode = ModelMode::AudioOnly;
  c.window = window;
  c.audio_dim = in;
  c.output_dim = out;
  c.audio_lstm1_cells = 12;
  c.audio_lstm2_cells = 12;
  c.dropout_rate = 0.0;
  c.seed = 4;
  return c;
}

// targets are a fixed linear map of the current input frame
WindowedData linear_toy(const ModelConfig& c, const Matrix& map, std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix x = random_matrix(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(c.audio_dim), rng, 0.5);
  WindowedData data;
  const FeatureSequence in = sequence(x), target = sequence(x * map);
  append_utterance(data, c, &in, nullptr, &target);
  return data;
}

}  // namespace

TEST_CASE("context windows", "[training][windows]") {
  Matrix f(3, 2);
  f << 0, 1, 10, 11, 20, 21;
  const FeatureSequence seq = sequence(f);

  const auto w1 = make_context_windows(seq, 1);
  REQUIRE(w1.size() == 3);
  for (Eigen::Index t = 0; t < 3; ++t) CHECK(w1[static_cast<std::size_t>(t)] == f.row(t));

  const auto w6 = make_context_windows(seq, 6);
  REQUIRE(w6.size() == 3);
  Matrix expected(6, 2);
  expected << 0, 1, 0, 1, 0, 1, 0, 1, 10, 11, 20, 21;
  CHECK(w6[2] == expected);
  CHECK(w6[0] == f.row(0).replicate(6, 1));

  CHECK_THROWS_AS(make_context_windows(seq, 0), Error);
  CHECK_THROWS_AS(make_context_windows(sequence(Matrix(0, 2)), 2), Error);

  SECTION("time-major samples agree with the window view") {
    ModelConfig c = small_audio_config(2, 2, 4);
    WindowedData data;
    append_utterance(data, c, &seq, nullptr, &seq);
    const auto w4 = make_context_windows(seq, 4);
    REQUIRE(data.audio.size() == 4);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(data.audio[j].row(static_cast<Eigen::Index>(t)) == w4[t].row(static_cast<Eigen::Index>(j)));
    CHECK(data.targets == f);
  }
  SECTION("sequences are truncated to the shortest") {
    ModelConfig c = small_audio_config(2, 1, 2);
    c.mode = ModelMode::AudioVisual;
    c.visual_dim = 2;
    const FeatureSequence vis = sequence(f.topRows(2), FeatureKind::Visual);
    const FeatureSequence target = sequence(Matrix::Ones(3, 1));
    WindowedData data;
    append_utterance(data, c, &seq, &vis, &target);
    CHECK(data.size() == 2);
    CHECK_THROWS_AS(append_utterance(data, c, &seq, nullptr, &target), Error);
  }
}

TEST_CASE("rmsprop update", "[training][rmsprop]") {
  ModelConfig c = small_audio_config(2, 1);
  RegressorModel m = build_model(c);
  const RegressorModel before = m;
  TensorMap grads;
  for (const auto& [name, t] : m.params) grads.emplace(name, Tensor(t.shape, 1.0));
  TrainConfig cfg;
  rmsprop_step(m, grads, cfg);
  for (const auto& [name, t] : m.params) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(m.rmsprop_cache.at(name).data[i] == Approx(0.1).epsilon(1e-15));
      CHECK(before.param(name).data[i] - t.data[i] == Approx(1e-3 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-9));
    }
  }
  CHECK(1e-3 / (std::sqrt(0.1) + 1e-8) == Approx(3.162e-3).epsilon(1e-3));

  SECTION("zero gradient leaves parameters unchanged") {
    RegressorModel z = before;
    TensorMap zero;
    for (const auto& [name, t] : z.params) zero.emplace(name, Tensor(t.shape));
    rmsprop_step(z, zero, cfg);
    for (const auto& [name, t] : z.params) CHECK(t.data == before.param(name).data);
  }
  SECTION("constant gradient: cache tends to g^2 and the step to lr") {
    RegressorModel k = before;
    TensorMap g;
    for (const auto& [name, t] : k.params) g.emplace(name, Tensor(t.shape, 0.5));
    std::vector<double> prev = k.param("output.b").data;
    for (int i = 0; i < 400; ++i) {
      prev = k.param("output.b").data;
      rmsprop_step(k, g, cfg);
    }
    CHECK(k.rmsprop_cache.at("output.b").data[0] == Approx(0.25).epsilon(1e-12));
    CHECK(prev[0] - k.param("output.b").data[0] == Approx(1e-3).epsilon(1e-6));
  }
  SECTION("shape errors") {
    TensorMap bad;
    bad.emplace("output.b", Tensor({3}));
    CHECK_THROWS_AS(rmsprop_step(m, bad, cfg), Error);
    TensorMap unknown;
    unknown.emplace("nope", Tensor({1}));
    CHECK_THROWS_AS(rmsprop_step(m, unknown, cfg), Error);
  }
}

TEST_CASE("training loop", "[training]") {
  const ModelConfig c = small_audio_config(3, 2);
  Matrix map(3, 2);
  map << 0.5, -0.3, 0.2, 0.4, -0.6, 0.1;
  const WindowedData train_set = linear_toy(c, map, 600, 1);
  const WindowedData val_set = linear_toy(c, map, 200, 2);

  SECTION("zero learning rate keeps parameters and history constant") {
    RegressorModel m = build_model(c);
    const RegressorModel before = m;
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    const TrainHistory h = train(m, train_set, val_set, cfg);
    REQUIRE(h.epochs.size() == 4);
    for (const auto& e : h.epochs) {
      CHECK(e.train_mse == h.epochs[0].train_mse);
      CHECK(e.val_mse == h.epochs[0].val_mse);
    }
    CHECK(h.best_epoch == 0);
    for (const auto& [name, t] : m.params) CHECK(t.data == before.param(name).data);
  }
  SECTION("learns a linear map") {
    RegressorModel m = build_model(c);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.epochs = 30;
    cfg.seed = 3;
    const TrainHistory h = train(m, train_set, val_set, cfg);
    CHECK(h.epochs[10].train_mse < h.epochs[0].train_mse);
    INFO("best validation loss " << h.best_val() << " at epoch " << h.best_epoch);
    CHECK(h.best_val() < 1e-3);
    CHECK(evaluate_loss(m, val_set) == h.best_val());
    CHECK(h.to_csv().rfind("epoch,train_mse,val_mse\n0,", 0) == 0);

    RegressorModel again = build_model(c);
    const TrainHistory h2 = train(again, train_set, val_set, cfg);
    REQUIRE(h2.epochs.size() == h.epochs.size());
    for (std::size_t i = 0; i < h.epochs.size(); ++i) {
      CHECK(h2.epochs[i].train_mse == h.epochs[i].train_mse);
      CHECK(h2.epochs[i].val_mse == h.epochs[i].val_mse);
    }
    CHECK(h2.to_csv() == h.to_csv());
  }
  SECTION("dropout training is reproducible") {
    ModelConfig dc = c;
    dc.dropout_rate = 0.2;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    RegressorModel a = build_model(dc), b = build_model(dc);
    CHECK(train(a, train_set, val_set, cfg).to_csv() == train(b, train_set, val_set, cfg).to_csv());
  }
  SECTION("errors") {
    RegressorModel m = build_model(c);
    CHECK_THROWS_AS(train(m, WindowedData{}, val_set, TrainConfig{}), Error);
    CHECK_THROWS_AS(train(m, train_set, WindowedData{}, TrainConfig{}), Error);
    TrainConfig bad;
    bad.rmsprop_rho = 1.0;
    CHECK_THROWS_AS(train(m, train_set, val_set, bad), Error);

    WindowedData poisoned = train_set;
    poisoned.targets(5, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
      train(m, poisoned, val_set, TrainConfig{});
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
    }
  }
}

TEST_CASE("sequence prediction", "[training]") {
  ModelConfig c = small_audio_config(3, 2, 4);
  const RegressorModel m = build_model(c);
  Rng rng(6);
  const FeatureSequence audio = sequence(random_matrix(25, 3, rng));
  const FeatureSequence pred = predict_sequence(m, &audio, nullptr, 100.0);
  CHECK(pred.frames() == 25);
  CHECK(pred.dim() == 2);
  CHECK(pred.kind == FeatureKind::LogFbAudio);
  const auto windows = make_context_windows(audio, 4);
  Batch b;
  for (std::size_t j = 0; j < 4; ++j) b.audio.push_back(windows[17].row(static_cast<Eigen::Index>(j)));
  CHECK((forward(m, b).row(0) - pred.vectors.row(17)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("checkpoints", "[training][checkpoint]") {
  const auto dir = temp_dir("ckpt");
  ModelConfig c;
  c.mode = ModelMode::AudioVisual;
  c.window = 3;
  c.audio_dim = 4;
  c.output_dim = 4;
  c.audio_lstm1_cells = 6;
  c.audio_lstm2_cells = 5;
  c.visual_input = VisualInput::Image;
  c.image_height = 8;
  c.image_width = 6;
  c.conv_filters = {2, 3};
  c.visual_lstm_cells = 4;
  c.fusion1 = 7;
  c.fusion2 = 5;
  c.seed = 12;
  const RegressorModel m = build_model(c);
  const auto path = dir / "model.evwm";
  save_checkpoint(m, path);
  const RegressorModel loaded = load_checkpoint(path);

  CHECK(loaded.config.conv_filters == c.conv_filters);
  CHECK(loaded.config.mode == c.mode);
  CHECK(loaded.config.dropout_rate == c.dropout_rate);
  CHECK(loaded.params.size() == m.params.size());
  Rng rng(1);
  Batch b;
  for (int t = 0; t < 3; ++t) {
    b.audio.push_back(random_matrix(5, 4, rng));
    b.visual.push_back(random_matrix(5, 48, rng));
  }
  CHECK((forward(m, b) - forward(loaded, b)).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(encode_checkpoint(loaded) == encode_checkpoint(m));

  const std::vector<char> bytes = encode_checkpoint(m);
  auto kind_of = [](const std::vector<char>& data) {
    try {
      decode_checkpoint(data);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  SECTION("corrupted magic") {
    std::vector<char> bad = bytes;
    bad[0] = 'X';
    CHECK(kind_of(bad) == ErrorKind::Format);
    CHECK(kind_of({'E', 'V'}) == ErrorKind::Format);
  }
  SECTION("truncated payload") {
    CHECK(kind_of(std::vector<char>(bytes.begin(), bytes.end() - 3)) == ErrorKind::Truncated);
    CHECK(kind_of(std::vector<char>(bytes.begin(), bytes.begin() + 20)) == ErrorKind::Truncated);
  }
  SECTION("trailing bytes") {
    std::vector<char> extra = bytes;
    extra.push_back(0);
    CHECK(kind_of(extra) == ErrorKind::Format);
  }
  SECTION("shape record disagreeing with the config") {
    // fusion1 width lives at a fixed offset: magic(5) + 9 u32 + 2 filters + 10 u32 before it
    std::vector<char> bad = bytes;
    const std::size_t fusion1_offset = 5 + 4 * (8 + 2 + 4 + 1 + 1 + 2);
    std::uint32_t v = 0;
    std::memcpy(&v, bad.data() + fusion1_offset, 4);
    REQUIRE(v == 7);
    v = 8;
    std::memcpy(bad.data() + fusion1_offset, &v, 4);
    CHECK(kind_of(bad) == ErrorKind::Format);
  }
  SECTION("missing file") {
    try {
      load_checkpoint(dir / "absent.evwm");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotFound);
    }
  }
  std::filesystem::remove_all(dir);
}
