#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "asdl/errors.hpp"
#include "asdl/model.hpp"
#include "asdl/rng.hpp"
#include "asdl/train.hpp"

#include "oracles.hpp"

using namespace asdl;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

std::vector<double> onehot(int n, int k) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  v[static_cast<std::size_t>(k)] = 1.0;
  return v;
}

double cosine(const Tensor& a, const Tensor& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    dot += a.data[i] * b.data[i];
    na += a.data[i] * a.data[i];
    nb += b.data[i] * b.data[i];
  }
  return dot / std::sqrt(na * nb);
}

// Trainable parameter count of the full-scale configuration, frozen from the
// first build as a regression guard.
constexpr std::int64_t kFullScaleParameterCount = 75051458;

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("model config validation catches inconsistent settings") {
  ModelConfig bad = micro_model_config();
  bad.embed_dim = 12;  // not base * 2^(blocks-1)
  CHECK_THROWS_AS(validate_model_config(bad), ConfigError);

  bad = micro_model_config();
  bad.attention_heads = 3;
  CHECK_THROWS_AS(validate_model_config(bad), ConfigError);

  bad = micro_model_config();
  bad.depthwise_kernel = 4;
  CHECK_THROWS_AS(validate_model_config(bad), ConfigError);

  bad = micro_model_config();
  bad.input_time_bins = 30;  // not divisible by 2^blocks
  CHECK_THROWS_AS(validate_model_config(bad), ConfigError);

  CHECK_NOTHROW(validate_model_config(ModelConfig{}));
  CHECK_NOTHROW(validate_model_config(toy_model_config()));
}

TEST_CASE("model config round-trips through its key-value section") {
  ModelConfig cfg = toy_model_config(42);
  cfg.visual_backbone = VisualBackboneKind::external_embedding;
  cfg.external_dim = 77;
  KeyValueFile file;
  model_config_to_section(cfg, file.add_section("model"));
  const ModelConfig back = model_config_from_section(file.section("model"));
  CHECK(back.conv_blocks == cfg.conv_blocks);
  CHECK(back.base_channels == cfg.base_channels);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.visual_backbone == cfg.visual_backbone);
  CHECK(back.external_dim == 77);
  CHECK(back.seed == 42);

  KeyValueFile bad = KeyValueFile::parse("[model]\nnot_a_key = 1\n");
  CHECK_THROWS_AS(model_config_from_section(bad.section("model")), ConfigError);
}

TEST_CASE("micro audio encoder yields the shape-oracle dimensions") {
  const ModelConfig cfg = micro_model_config(1);
  Model model(cfg);
  const Tensor features = random_tensor({16, 32, 16}, 2);
  const Tensor emb = model.audio_encoder_forward(features, false);
  const auto [t, f] = oracle::conv_stack_shape(32, 16, cfg.conv_blocks);
  CHECK(emb.dim(0) == t);
  CHECK(emb.dim(1) == cfg.embed_dim);
  CHECK(t == 8);
  CHECK(emb.all_finite());
}

TEST_CASE("zero input with fresh normalization stays zero in inference mode") {
  const ModelConfig cfg = micro_model_config(3);
  Model model(cfg);
  const Tensor features({16, 32, 16});
  const Tensor emb = model.audio_encoder_forward(features, /*training=*/false);
  for (double v : emb.data) CHECK(v == 0.0);
}

TEST_CASE("full-scale encoder maps 16x960x64 to 60x512") {
  ModelConfig cfg;  // full scale
  cfg.seed = 4;
  Model model(cfg);
  const Tensor features = random_tensor({16, 960, 64}, 5, 0.5);
  const Tensor emb = model.audio_encoder_forward(features, false);
  CHECK(emb.dim(0) == 60);
  CHECK(emb.dim(1) == 512);
  CHECK(emb.all_finite());
}

TEST_CASE("visual encoder accepts external 2048-d embeddings at full scale") {
  ModelConfig cfg;
  cfg.visual_backbone = VisualBackboneKind::external_embedding;
  cfg.seed = 6;
  Model model(cfg);
  const Tensor frames = random_tensor({60, 2048}, 7, 0.1);
  const Tensor emb = model.visual_encoder_forward(frames, false);
  CHECK(emb.dim(0) == 60);
  CHECK(emb.dim(1) == 512);
  CHECK(emb.all_finite());

  const Tensor wrong = random_tensor({60, 1024}, 8);
  CHECK_THROWS_AS(model.visual_encoder_forward(wrong, false), DataError);
  const Tensor wrong_frames = random_tensor({59, 2048}, 9);
  CHECK_THROWS_AS(model.visual_encoder_forward(wrong_frames, false), DataError);
}

TEST_CASE("toy backbone treats frames independently") {
  const ModelConfig cfg = micro_model_config(10);
  Model model(cfg);
  // Identical rows must produce identical backbone features.
  Tensor visual({cfg.output_frames(), cfg.visual_columns});
  Rng rng(11);
  std::vector<double> row(static_cast<std::size_t>(cfg.visual_columns));
  for (double& v : row) v = rng.normal();
  for (std::int64_t f = 0; f < visual.dim(0); ++f) {
    for (std::int64_t c = 0; c < visual.dim(1); ++c) {
      visual.at2(f, c) = row[static_cast<std::size_t>(c)];
    }
  }
  const Tensor feat = model.visual_backbone_forward(visual);
  for (std::int64_t f = 1; f < feat.dim(0); ++f) {
    for (std::int64_t d = 0; d < feat.dim(1); ++d) {
      CHECK(feat.at2(f, d) == feat.at2(0, d));
    }
  }
}

TEST_CASE("column bumps at different positions produce distinct embeddings") {
  const ModelConfig cfg = micro_model_config(12);
  Model model(cfg);
  auto bump_profile = [&](double center_norm) {
    Tensor visual({cfg.output_frames(), cfg.visual_columns});
    for (std::int64_t f = 0; f < visual.dim(0); ++f) {
      for (std::int64_t c = 0; c < visual.dim(1); ++c) {
        const double center = center_norm * (cfg.visual_columns - 1);
        const double d = (static_cast<double>(c) - center) / 1.5;
        visual.at2(f, c) = std::exp(-0.5 * d * d);
      }
    }
    return visual;
  };
  const Tensor left = model.visual_encoder_forward(bump_profile(0.25), false);
  const Tensor right = model.visual_encoder_forward(bump_profile(0.75), false);
  CHECK(cosine(left, right) < 0.99);
}

TEST_CASE("fusion head emits one bounded pair per frame") {
  const ModelConfig cfg = micro_model_config(13);
  Model model(cfg);
  const int T = cfg.output_frames();
  const Tensor audio_emb = random_tensor({T, cfg.embed_dim}, 14);
  const Tensor visual_emb = random_tensor({T, cfg.embed_dim}, 15);
  const auto out = model.fusion_head_forward(audio_emb, visual_emb, onehot(cfg.n_cameras, 3),
                                             /*training=*/false);
  REQUIRE(static_cast<int>(out.size()) == T);
  for (const auto& frame : out) {
    CHECK(frame.x_pred >= 0.0);
    CHECK(frame.x_pred <= 1.0);
    CHECK(frame.confidence >= 0.0);
    CHECK(frame.confidence <= 1.0);
  }
}

TEST_CASE("fusion head validates the camera one-hot") {
  const ModelConfig cfg = micro_model_config(16);
  Model model(cfg);
  const int T = cfg.output_frames();
  const Tensor audio_emb = random_tensor({T, cfg.embed_dim}, 17);
  const Tensor visual_emb = random_tensor({T, cfg.embed_dim}, 18);

  std::vector<double> two_hot = onehot(cfg.n_cameras, 1);
  two_hot[5] = 1.0;
  CHECK_THROWS_AS(model.fusion_head_forward(audio_emb, visual_emb, two_hot, false), DataError);
  std::vector<double> none(static_cast<std::size_t>(cfg.n_cameras), 0.0);
  CHECK_THROWS_AS(model.fusion_head_forward(audio_emb, visual_emb, none, false), DataError);
  std::vector<double> fractional = onehot(cfg.n_cameras, 1);
  fractional[2] = 0.5;
  CHECK_THROWS_AS(model.fusion_head_forward(audio_emb, visual_emb, fractional, false), DataError);
}

TEST_CASE("full forward equals the manual stage composition bitwise") {
  const ModelConfig cfg = micro_model_config(19);
  Model model(cfg);
  const Tensor features = random_tensor({16, 32, 16}, 20);
  const Tensor visual = random_tensor({8, 16}, 21);
  const auto composed = [&] {
    const Tensor a = model.audio_encoder_forward(features, false);
    const Tensor v = model.visual_encoder_forward(visual, false);
    return model.fusion_head_forward(a, v, onehot(cfg.n_cameras, 2), false);
  }();
  const auto direct = model.forward(features, visual, onehot(cfg.n_cameras, 2), false);
  REQUIRE(direct.size() == composed.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    CHECK(direct[i].x_pred == composed[i].x_pred);
    CHECK(direct[i].confidence == composed[i].confidence);
  }
}

TEST_CASE("inference is deterministic") {
  const ModelConfig cfg = micro_model_config(22);
  Model model(cfg);
  const Tensor features = random_tensor({16, 32, 16}, 23);
  const Tensor visual = random_tensor({8, 16}, 24);
  const auto a = model.forward(features, visual, onehot(cfg.n_cameras, 0), false);
  const auto b = model.forward(features, visual, onehot(cfg.n_cameras, 0), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x_pred == b[i].x_pred);
    CHECK(a[i].confidence == b[i].confidence);
  }
}

TEST_CASE("seeded initialization is reproducible and the count is stable") {
  const ModelConfig cfg = micro_model_config(25);
  Model a(cfg);
  Model b(cfg);
  REQUIRE(a.params().entries().size() == b.params().entries().size());
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    const auto& eb = b.params().entries()[i];
    CHECK(ea.name == eb.name);
    CHECK(ea.value.data == eb.value.data);
  }
  CHECK(count_parameters(a) == count_parameters(b));
}

TEST_CASE("full-scale trainable parameter count matches the frozen constant") {
  ModelConfig cfg;  // full scale
  Model model(cfg);
  CHECK(count_parameters(model) == kFullScaleParameterCount);
}

TEST_CASE("checkpoints round-trip parameters exactly in f64") {
  const ModelConfig cfg = micro_model_config(26);
  Model model(cfg);
  const fs::path path = fs::temp_directory_path() / "asdl_ckpt_test.bin";
  save_checkpoint(path, model, Dtype::f64);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded->config().embed_dim == cfg.embed_dim);
  REQUIRE(loaded->params().entries().size() == model.params().entries().size());
  for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
    CHECK(loaded->params().entries()[i].value.data == model.params().entries()[i].value.data);
  }

  // Same inputs, same outputs after reload.
  const Tensor features = random_tensor({16, 32, 16}, 27);
  const Tensor visual = random_tensor({8, 16}, 28);
  const auto a = model.forward(features, visual, onehot(cfg.n_cameras, 1), false);
  const auto b = loaded->forward(features, visual, onehot(cfg.n_cameras, 1), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x_pred == b[i].x_pred);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint loader rejects truncated files") {
  const ModelConfig cfg = micro_model_config(29);
  Model model(cfg);
  const fs::path path = fs::temp_directory_path() / "asdl_ckpt_trunc.bin";
  save_checkpoint(path, model, Dtype::f32);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  fs::remove(path);
}

TEST_SUITE_END();
