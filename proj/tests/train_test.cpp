#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "asdl/errors.hpp"
#include "asdl/hash.hpp"
#include "asdl/rng.hpp"
#include "asdl/train.hpp"

using namespace asdl;
namespace fs = std::filesystem;

namespace {

std::vector<FrameOutput> constant_pred(int n, double x, double conf) {
  std::vector<FrameOutput> out(static_cast<std::size_t>(n));
  for (auto& f : out) {
    f.x_pred = x;
    f.confidence = conf;
  }
  return out;
}

BatchTarget all_silent_target(int n, int n_cameras) {
  BatchTarget t;
  t.x_target.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  t.active_mask.assign(static_cast<std::size_t>(n), false);
  t.camera_onehot.assign(static_cast<std::size_t>(n_cameras), 0.0);
  t.camera_onehot[0] = 1.0;
  return t;
}

// In-memory training set for the micro model: consistent mapping from a
// synthetic feature pattern to per-camera targets.
std::vector<TrainingSegment> synthetic_segments(const ModelConfig& cfg, int count,
                                                std::uint64_t seed) {
  std::vector<TrainingSegment> segments;
  const int frames = cfg.output_frames();
  for (int s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    TrainingSegment seg;
    seg.scene_id = "mem_" + std::to_string(s);
    seg.segment_index = 0;
    seg.features = Tensor({cfg.input_channels, cfg.input_time_bins, cfg.input_freq_bins});
    for (double& v : seg.features.data) v = rng.normal();
    seg.visual = Tensor({cfg.n_cameras, frames, cfg.visual_columns});
    for (double& v : seg.visual.data) v = 0.1 * rng.normal();
    seg.active.assign(static_cast<std::size_t>(frames), 0);
    seg.x_target.assign(static_cast<std::size_t>(cfg.n_cameras),
                        std::vector<double>(static_cast<std::size_t>(frames), 0.0));
    const double base = rng.uniform(0.2, 0.8);
    for (int f = 0; f < frames; ++f) {
      const bool active = (f % 3) != 0;
      seg.active[static_cast<std::size_t>(f)] = active ? 1 : 0;
      for (int cam = 0; cam < cfg.n_cameras; ++cam) {
        seg.x_target[static_cast<std::size_t>(cam)][static_cast<std::size_t>(f)] =
            active ? base : std::numeric_limits<double>::quiet_NaN();
      }
      if (active) {
        // The bump column encodes the target.
        const std::int64_t col = std::llround(base * (cfg.visual_columns - 1));
        for (int cam = 0; cam < cfg.n_cameras; ++cam) {
          seg.visual.at3(cam, f, col) += 1.0;
        }
      }
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("loss closed forms hold exactly") {
  // All-silent segment with constant confidence 0.5: 60 * 0.25 = 15.0.
  const auto pred = constant_pred(60, 0.3, 0.5);
  const BatchTarget silent = all_silent_target(60, 11);
  CHECK(segment_loss(pred, silent) == 15.0);

  // Perfect predictions: exact zero.
  BatchTarget target;
  target.x_target = {0.25, 0.5, 0.75, std::numeric_limits<double>::quiet_NaN()};
  target.active_mask = {true, true, true, false};
  target.camera_onehot.assign(11, 0.0);
  target.camera_onehot[0] = 1.0;
  std::vector<FrameOutput> perfect(4);
  perfect[0] = {0.25, 1.0};
  perfect[1] = {0.5, 1.0};
  perfect[2] = {0.75, 1.0};
  perfect[3] = {0.9, 0.0};  // silent frame: position is free
  CHECK(segment_loss(perfect, target) == 0.0);
}

TEST_CASE("loss matches a scalar per-frame brute-force sum") {
  Rng rng(42);
  const int n = 60;
  BatchTarget target;
  target.camera_onehot.assign(11, 0.0);
  target.camera_onehot[4] = 1.0;
  std::vector<FrameOutput> pred(static_cast<std::size_t>(n));
  double expected = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool active = rng.uniform() < 0.5;
    const double x_hat = rng.uniform();
    target.active_mask.push_back(active);
    target.x_target.push_back(active ? x_hat : std::numeric_limits<double>::quiet_NaN());
    pred[static_cast<std::size_t>(i)].x_pred = rng.uniform();
    pred[static_cast<std::size_t>(i)].confidence = rng.uniform();
    const double c_hat = active ? 1.0 : 0.0;
    if (active) {
      const double dx = pred[static_cast<std::size_t>(i)].x_pred - x_hat;
      expected += dx * dx;
    }
    const double dc = pred[static_cast<std::size_t>(i)].confidence - c_hat;
    expected += dc * dc;
  }
  CHECK(std::abs(segment_loss(pred, target) - expected) <= 1e-12);
}

TEST_CASE("loss rejects NaN predictions and length mismatches") {
  BatchTarget target = all_silent_target(3, 11);
  auto pred = constant_pred(3, 0.5, 0.5);
  pred[1].confidence = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(segment_loss(pred, target), DataError);
  CHECK_THROWS_AS(segment_loss(constant_pred(4, 0.5, 0.5), target), DataError);
}

TEST_CASE("loss gradients vanish at a perfect fit and on masked positions") {
  BatchTarget target;
  target.x_target = {0.3, std::numeric_limits<double>::quiet_NaN(), 0.7};
  target.active_mask = {true, false, true};
  target.camera_onehot.assign(11, 0.0);
  target.camera_onehot[0] = 1.0;

  std::vector<FrameOutput> pred(3);
  pred[0] = {0.3, 1.0};
  pred[1] = {0.123, 0.0};
  pred[2] = {0.7, 1.0};
  const auto zero_grad = segment_loss_grad(pred, target);
  for (const auto& g : zero_grad) {
    CHECK(std::abs(g.x_pred) < 1e-8);
    CHECK(std::abs(g.confidence) < 1e-8);
  }

  // Silent frames never receive a regression gradient.
  pred[1] = {0.9, 0.4};
  const auto grad = segment_loss_grad(pred, target);
  CHECK(grad[1].x_pred == 0.0);
  CHECK(grad[1].confidence != 0.0);

  // Central differences confirm the analytic prediction-space gradient.
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double h = 1e-6;
    auto up = pred, down = pred;
    up[i].x_pred += h;
    down[i].x_pred -= h;
    const double fd_x = (segment_loss(up, target) - segment_loss(down, target)) / (2 * h);
    CHECK(std::abs(fd_x - grad[i].x_pred) < 1e-6);
    up = pred;
    down = pred;
    up[i].confidence += h;
    down[i].confidence -= h;
    const double fd_c = (segment_loss(up, target) - segment_loss(down, target)) / (2 * h);
    CHECK(std::abs(fd_c - grad[i].confidence) < 1e-6);
  }
}

TEST_CASE("learning rate schedule is flat then decays by 10 percent") {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr_initial = 1e-4;
  cfg.lr_flat_epochs = 30;
  CHECK(lr_schedule(cfg, 0) == 1e-4);
  CHECK(lr_schedule(cfg, 29) == 1e-4);
  CHECK(lr_schedule(cfg, 30) == doctest::Approx(9e-5).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 31) == doctest::Approx(8.1e-5).epsilon(1e-12));
  CHECK_THROWS_AS(lr_schedule(cfg, -1), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(cfg, 50), std::invalid_argument);

  double prev = lr_schedule(cfg, 0);
  for (int e = 1; e < 50; ++e) {
    const double lr = lr_schedule(cfg, e);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("fold splitting partitions the sequences deterministically") {
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.push_back("seq_" + std::to_string(i));
  const auto folds = split_folds(ids, 5, 123);
  REQUIRE(folds.size() == 5);
  std::vector<std::string> all;
  for (const auto& fold : folds) {
    CHECK(fold.size() == 10);
    all.insert(all.end(), fold.begin(), fold.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::string> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  CHECK(all == sorted_ids);

  const auto again = split_folds(ids, 5, 123);
  for (std::size_t i = 0; i < folds.size(); ++i) CHECK(folds[i] == again[i]);

  std::vector<std::string> ten(ids.begin(), ids.begin() + 10);
  const auto small = split_folds(ten, 5, 9);
  for (const auto& fold : small) CHECK(fold.size() == 2);

  std::vector<std::string> eleven(ids.begin(), ids.begin() + 11);
  CHECK_THROWS_AS(split_folds(eleven, 5, 9), ConfigError);
}

TEST_CASE("micro-model gradient check beats the 1e-4 bound") {
  const ModelConfig cfg = micro_model_config(31);
  const GradCheckSample sample = make_grad_check_sample(cfg, 32);
  const double worst = gradient_check(cfg, sample, 60, 33);
  CHECK(worst < 1e-4);
}

TEST_CASE("x-head weights of an all-silent sample do not move the loss") {
  const ModelConfig cfg = micro_model_config(34);
  Model model(cfg);
  GradCheckSample sample = make_grad_check_sample(cfg, 35);
  const int frames = cfg.output_frames();
  sample.target.active_mask.assign(static_cast<std::size_t>(frames), false);
  sample.target.x_target.assign(static_cast<std::size_t>(frames),
                                std::numeric_limits<double>::quiet_NaN());

  auto loss_of = [&]() {
    const auto pred =
        model.forward(sample.features, sample.visual, sample.camera_onehot, /*training=*/false);
    return segment_loss(pred, sample.target);
  };
  const double before = loss_of();

  // Perturb the x row of the final head layer; the confidence row is
  // untouched, so the loss must not change at all.
  auto* fc3 = model.params().find("head.fc3.weight");
  REQUIRE(fc3 != nullptr);
  const std::int64_t in_dim = fc3->value.dim(1);
  for (std::int64_t k = 0; k < in_dim; ++k) fc3->value.data[static_cast<std::size_t>(k)] += 0.5;
  auto* fc3_bias = model.params().find("head.fc3.bias");
  fc3_bias->value.data[0] += 1.0;

  const double after = loss_of();
  CHECK(std::abs(after - before) < 1e-12);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  ParamStore store;
  const int h = store.add("w", {4});
  store.entry(h).value.data = {4.0, -3.0, 2.0, -1.0};
  AdamOptimizer adam(store);
  for (int step = 0; step < 2000; ++step) {
    for (std::size_t i = 0; i < 4; ++i) {
      store.entry(h).grad.data[i] = 2.0 * store.entry(h).value.data[i];
    }
    adam.step(0.01, 1.0);
    store.zero_grads();
  }
  for (double v : store.entry(h).value.data) CHECK(std::abs(v) < 1e-3);
}

TEST_CASE("two-epoch training on the synthetic set reduces the loss") {
  const ModelConfig mcfg = micro_model_config(36);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 8;
  tcfg.lr_initial = 3e-3;
  tcfg.lr_flat_epochs = 2;
  tcfg.seed = 5;

  const auto train_set = synthetic_segments(mcfg, 8, 6);
  Model model(mcfg);
  const auto history = train_model(model, tcfg, train_set, {});
  REQUIRE(history.size() == 2);
  CHECK(history[1].train_loss <= history[0].train_loss);
  CHECK(history[0].lr == 3e-3);
}

TEST_CASE("training is bitwise reproducible for a fixed seed") {
  const ModelConfig mcfg = micro_model_config(37);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 4;
  tcfg.lr_initial = 1e-3;
  tcfg.lr_flat_epochs = 3;
  tcfg.seed = 11;

  const auto train_set = synthetic_segments(mcfg, 6, 13);
  const fs::path a = fs::temp_directory_path() / "asdl_train_a.bin";
  const fs::path b = fs::temp_directory_path() / "asdl_train_b.bin";
  {
    Model model(mcfg);
    train_model(model, tcfg, train_set, {});
    save_checkpoint(a, model, Dtype::f32);
  }
  {
    Model model(mcfg);
    train_model(model, tcfg, train_set, {});
    save_checkpoint(b, model, Dtype::f32);
  }
  CHECK(hash_file(a) == hash_file(b));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const ModelConfig mcfg = micro_model_config(38);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.seed = 1;
  auto train_set = synthetic_segments(mcfg, 2, 14);
  train_set[0].features.data[100] = std::numeric_limits<double>::quiet_NaN();
  Model model(mcfg);
  CHECK_THROWS_AS(train_model(model, tcfg, train_set, {}), DataError);
}

TEST_CASE("history CSV has one row per epoch") {
  std::vector<EpochStats> history(3);
  for (int i = 0; i < 3; ++i) {
    history[static_cast<std::size_t>(i)] = {i, 1e-4, 1.0 / (i + 1), 2.0 / (i + 1)};
  }
  const fs::path path = fs::temp_directory_path() / "asdl_history.csv";
  write_history_csv(path, history);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "epoch,lr,train_loss,val_loss");
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 3);
  fs::remove(path);
}

TEST_CASE("train config round-trips and validates") {
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.batch_size = 3;
  cfg.lr_initial = 2e-3;
  cfg.lr_flat_epochs = 4;
  cfg.seed = 99;
  KeyValueFile file;
  train_config_to_section(cfg, file.add_section("train"));
  const TrainConfig back = train_config_from_section(file.section("train"));
  CHECK(back.epochs == 7);
  CHECK(back.lr_initial == 2e-3);
  CHECK(back.seed == 99);

  TrainConfig bad;
  bad.lr_flat_epochs = 100;
  bad.epochs = 50;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
}

TEST_SUITE_END();
