#include "asdl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "asdl/errors.hpp"

namespace asdl {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'S', 'D', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

void check_onehot(const std::vector<double>& onehot, int n_cameras) {
  if (static_cast<int>(onehot.size()) != n_cameras) {
    throw DataError("camera one-hot must have " + std::to_string(n_cameras) + " entries");
  }
  int ones = 0;
  for (double v : onehot) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw DataError("camera one-hot entries must be exactly 0 or 1");
    }
  }
  if (ones != 1) throw DataError("camera one-hot must have exactly one entry set");
}

}  // namespace

std::string to_string(VisualBackboneKind kind) {
  return kind == VisualBackboneKind::toy_conv ? "toy_conv" : "external_embedding";
}

VisualBackboneKind visual_backbone_from_string(const std::string& name) {
  if (name == "toy_conv") return VisualBackboneKind::toy_conv;
  if (name == "external_embedding") return VisualBackboneKind::external_embedding;
  throw ConfigError("unknown visual backbone '" + name + "'");
}

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.conv_blocks < 1) throw ConfigError("conv_blocks must be at least 1");
  if (cfg.base_channels < 1) throw ConfigError("base_channels must be positive");
  if (cfg.conformer_layers < 1) throw ConfigError("conformer_layers must be at least 1");
  if (cfg.depthwise_kernel % 2 == 0 || cfg.depthwise_kernel < 1) {
    throw ConfigError("depthwise_kernel must be odd and positive");
  }
  if (cfg.embed_dim % cfg.attention_heads != 0) {
    throw ConfigError("embed_dim must be divisible by attention_heads");
  }
  if (cfg.embed_dim % 2 != 0) throw ConfigError("embed_dim must be even");
  if (cfg.embed_dim != cfg.last_conv_channels()) {
    throw ConfigError("embed_dim must equal base_channels * 2^(conv_blocks-1) so the audio "
                      "embedding width matches");
  }
  const int factor = 1 << cfg.conv_blocks;
  if (cfg.input_time_bins % factor != 0 || cfg.input_freq_bins % factor != 0) {
    throw ConfigError("input time/frequency bins must be divisible by 2^conv_blocks");
  }
  if (cfg.output_frames() < 1) throw ConfigError("configuration leaves no output frames");
  if (cfg.n_cameras < 1) throw ConfigError("n_cameras must be positive");
  if (cfg.visual_backbone == VisualBackboneKind::toy_conv && cfg.visual_columns % 4 != 0) {
    throw ConfigError("visual_columns must be divisible by 4 for the toy backbone");
  }
  if (cfg.visual_backbone == VisualBackboneKind::external_embedding && cfg.external_dim < 1) {
    throw ConfigError("external_dim must be positive");
  }
  if (cfg.max_relative_offset < 1) throw ConfigError("max_relative_offset must be positive");
}

ModelConfig toy_model_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.conv_blocks = 4;
  cfg.base_channels = 4;
  cfg.conformer_layers = 1;
  cfg.attention_heads = 2;
  cfg.depthwise_kernel = 7;
  cfg.ffn_hidden = 64;
  cfg.embed_dim = 32;
  cfg.seed = seed;
  return cfg;
}

void model_config_to_section(const ModelConfig& cfg, KeyValueSection& section) {
  section.set_int("conv_blocks", cfg.conv_blocks);
  section.set_int("base_channels", cfg.base_channels);
  section.set_int("conformer_layers", cfg.conformer_layers);
  section.set_int("attention_heads", cfg.attention_heads);
  section.set_int("depthwise_kernel", cfg.depthwise_kernel);
  section.set_int("ffn_hidden", cfg.ffn_hidden);
  section.set_int("embed_dim", cfg.embed_dim);
  section.set_int("n_cameras", cfg.n_cameras);
  section.set("visual_backbone", to_string(cfg.visual_backbone));
  section.set_uint64("seed", cfg.seed);
  section.set_int("input_channels", cfg.input_channels);
  section.set_int("input_time_bins", cfg.input_time_bins);
  section.set_int("input_freq_bins", cfg.input_freq_bins);
  section.set_int("visual_columns", cfg.visual_columns);
  section.set_int("external_dim", cfg.external_dim);
  section.set_int("max_relative_offset", cfg.max_relative_offset);
}

ModelConfig model_config_from_section(const KeyValueSection& section) {
  section.reject_unknown_keys({"conv_blocks", "base_channels", "conformer_layers",
                               "attention_heads", "depthwise_kernel", "ffn_hidden", "embed_dim",
                               "n_cameras", "visual_backbone", "seed", "input_channels",
                               "input_time_bins", "input_freq_bins", "visual_columns",
                               "external_dim", "max_relative_offset"});
  ModelConfig defaults;
  ModelConfig cfg;
  cfg.conv_blocks = static_cast<int>(section.get_int("conv_blocks", defaults.conv_blocks));
  cfg.base_channels = static_cast<int>(section.get_int("base_channels", defaults.base_channels));
  cfg.conformer_layers =
      static_cast<int>(section.get_int("conformer_layers", defaults.conformer_layers));
  cfg.attention_heads =
      static_cast<int>(section.get_int("attention_heads", defaults.attention_heads));
  cfg.depthwise_kernel =
      static_cast<int>(section.get_int("depthwise_kernel", defaults.depthwise_kernel));
  cfg.ffn_hidden = static_cast<int>(section.get_int("ffn_hidden", defaults.ffn_hidden));
  cfg.embed_dim = static_cast<int>(section.get_int("embed_dim", defaults.embed_dim));
  cfg.n_cameras = static_cast<int>(section.get_int("n_cameras", defaults.n_cameras));
  cfg.visual_backbone = visual_backbone_from_string(
      section.get_string("visual_backbone", to_string(defaults.visual_backbone)));
  cfg.seed = section.get_uint64("seed", defaults.seed);
  cfg.input_channels = static_cast<int>(section.get_int("input_channels", defaults.input_channels));
  cfg.input_time_bins =
      static_cast<int>(section.get_int("input_time_bins", defaults.input_time_bins));
  cfg.input_freq_bins =
      static_cast<int>(section.get_int("input_freq_bins", defaults.input_freq_bins));
  cfg.visual_columns = static_cast<int>(section.get_int("visual_columns", defaults.visual_columns));
  cfg.external_dim = static_cast<int>(section.get_int("external_dim", defaults.external_dim));
  cfg.max_relative_offset =
      static_cast<int>(section.get_int("max_relative_offset", defaults.max_relative_offset));
  validate_model_config(cfg);
  return cfg;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  validate_model_config(cfg_);
  Rng rng(derive_seed(cfg_.seed, "model_init"));

  int in_c = cfg_.input_channels;
  for (int b = 0; b < cfg_.conv_blocks; ++b) {
    const int out_c = cfg_.base_channels << b;
    const std::string prefix = "audio.block" + std::to_string(b);
    audio_blocks_.push_back(ConvBlock{
        Conv2d(params_, prefix + ".conv_a", in_c, out_c, 3, 3, 1, 1, rng),
        Conv2d(params_, prefix + ".conv_b", out_c, out_c, 3, 3, 1, 1, rng),
        AvgPool2d(2, 2),
        BatchNorm2d(params_, prefix + ".bn", out_c),
        ReLU(),
    });
    in_c = out_c;
  }

  int backbone_dim;
  if (cfg_.visual_backbone == VisualBackboneKind::toy_conv) {
    vb_conv1_ = std::make_unique<Conv2d>(params_, "visual.backbone.conv1", 1, 8, 1, 5, 0, 2, rng);
    vb_conv2_ = std::make_unique<Conv2d>(params_, "visual.backbone.conv2", 8, 16, 1, 5, 0, 2, rng);
    backbone_dim = 16 * (cfg_.visual_columns / 4);
  } else {
    backbone_dim = cfg_.external_dim;
  }
  visual_proj_ = std::make_unique<Linear>(params_, "visual.proj", backbone_dim, cfg_.embed_dim, rng);

  ConformerConfig vis_cfg;
  vis_cfg.dim = cfg_.embed_dim;
  vis_cfg.heads = cfg_.attention_heads;
  vis_cfg.ffn_hidden = cfg_.ffn_hidden;
  vis_cfg.depthwise_kernel = cfg_.depthwise_kernel;
  vis_cfg.layers = cfg_.conformer_layers;
  vis_cfg.max_relative_offset = cfg_.max_relative_offset;
  visual_conformer_ = std::make_unique<Conformer>(params_, "visual.conformer", vis_cfg, rng);

  ConformerConfig fusion_cfg = vis_cfg;
  fusion_cfg.dim = 2 * cfg_.embed_dim;
  fusion_conformer_ = std::make_unique<Conformer>(params_, "fusion.conformer", fusion_cfg, rng);

  const int e = cfg_.embed_dim;
  head_fc1_ = std::make_unique<Linear>(params_, "head.fc1", 2 * e, e, rng);
  head_fc2_ = std::make_unique<Linear>(params_, "head.fc2", e, e / 2, rng);
  head_fc3_ = std::make_unique<Linear>(params_, "head.fc3", e / 2 + cfg_.n_cameras, 2, rng);
}

Tensor Model::audio_encoder_forward(const Tensor& features, bool training) {
  if (features.ndim() != 3 || features.dim(0) != cfg_.input_channels ||
      features.dim(1) != cfg_.input_time_bins || features.dim(2) != cfg_.input_freq_bins) {
    throw DataError("audio features do not match the configured input shape");
  }
  Tensor h = features;
  for (auto& block : audio_blocks_) {
    h = block.conv_a.forward(h);
    h = block.conv_b.forward(h);
    h = block.pool.forward(h);
    h = block.bn.forward(h, training);
    h = block.relu.forward(h);
  }
  audio_pre_pool_shape_ = h.shape;

  // Frequency average pooling, then transpose to time-major.
  const std::int64_t C = h.dim(0);
  const std::int64_t T = h.dim(1);
  const std::int64_t F = h.dim(2);
  Tensor emb({T, C});
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t t = 0; t < T; ++t) {
      double acc = 0.0;
      const double* row = h.ptr() + (c * T + t) * F;
      for (std::int64_t f = 0; f < F; ++f) acc += row[f];
      emb.at2(t, c) = acc / static_cast<double>(F);
    }
  }
  return emb;
}

Tensor Model::toy_backbone_forward(const Tensor& visual) {
  const std::int64_t T = visual.dim(0);
  const std::int64_t L = visual.dim(1);
  // Frames become rows of a single-channel map; 1xK kernels keep them
  // independent, so the backbone is position-independent across frames.
  Tensor x({1, T, L});
  x.data = visual.data;
  Tensor h = vb_conv1_->forward(x);
  h = vb_relu1_.forward(h);
  h = vb_pool1_.forward(h);
  h = vb_conv2_->forward(h);
  h = vb_relu2_.forward(h);
  h = vb_pool2_.forward(h);

  const std::int64_t C = h.dim(0);
  const std::int64_t W = h.dim(2);
  Tensor feat({T, C * W});
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t w = 0; w < W; ++w) {
        feat.at2(t, c * W + w) = h.at3(c, t, w);
      }
    }
  }
  return feat;
}

Tensor Model::toy_backbone_backward(const Tensor& dfeat) {
  const std::int64_t T = dfeat.dim(0);
  const std::int64_t C = 16;
  const std::int64_t W = cfg_.visual_columns / 4;
  Tensor dh({C, T, W});
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t w = 0; w < W; ++w) {
        dh.at3(c, t, w) = dfeat.at2(t, c * W + w);
      }
    }
  }
  Tensor g = vb_pool2_.backward(dh);
  g = vb_relu2_.backward(g);
  g = vb_conv2_->backward(g);
  g = vb_pool1_.backward(g);
  g = vb_relu1_.backward(g);
  return vb_conv1_->backward(g, /*compute_dx=*/false);
}

Tensor Model::visual_backbone_forward(const Tensor& visual) {
  return cfg_.visual_backbone == VisualBackboneKind::toy_conv ? toy_backbone_forward(visual)
                                                              : visual;
}

Tensor Model::visual_encoder_forward(const Tensor& visual, bool training) {
  const int expected_dim = cfg_.visual_backbone == VisualBackboneKind::toy_conv
                               ? cfg_.visual_columns
                               : cfg_.external_dim;
  if (visual.ndim() != 2 || visual.dim(0) != cfg_.output_frames() ||
      visual.dim(1) != expected_dim) {
    throw DataError("visual input must be " + std::to_string(cfg_.output_frames()) + " x " +
                    std::to_string(expected_dim));
  }
  Tensor feat = cfg_.visual_backbone == VisualBackboneKind::toy_conv
                    ? toy_backbone_forward(visual)
                    : visual;
  Tensor proj = visual_proj_->forward(feat);
  return visual_conformer_->forward(proj, training);
}

std::vector<FrameOutput> Model::fusion_head_forward(const Tensor& audio_emb,
                                                    const Tensor& visual_emb,
                                                    const std::vector<double>& camera_onehot,
                                                    bool training) {
  check_onehot(camera_onehot, cfg_.n_cameras);
  camera_onehot_ = camera_onehot;
  const std::int64_t T = audio_emb.dim(0);
  const int e = cfg_.embed_dim;
  if (visual_emb.dim(0) != T || audio_emb.dim(1) != e || visual_emb.dim(1) != e) {
    throw DataError("audio and visual embeddings must both be frames x embed_dim");
  }

  Tensor joint({T, 2 * e});
  for (std::int64_t t = 0; t < T; ++t) {
    std::memcpy(joint.ptr() + t * 2 * e, audio_emb.ptr() + t * e, sizeof(double) * e);
    std::memcpy(joint.ptr() + t * 2 * e + e, visual_emb.ptr() + t * e, sizeof(double) * e);
  }

  Tensor h = fusion_conformer_->forward(joint, training);
  h = head_fc1_->forward(h);
  h = head_relu1_.forward(h);
  h = head_fc2_->forward(h);
  h = head_relu2_.forward(h);

  const std::int64_t mid = h.dim(1);
  Tensor with_cam({T, mid + cfg_.n_cameras});
  for (std::int64_t t = 0; t < T; ++t) {
    std::memcpy(with_cam.ptr() + t * (mid + cfg_.n_cameras), h.ptr() + t * mid,
                sizeof(double) * static_cast<std::size_t>(mid));
    for (int c = 0; c < cfg_.n_cameras; ++c) {
      with_cam.at2(t, mid + c) = camera_onehot[static_cast<std::size_t>(c)];
    }
  }

  Tensor logits = head_fc3_->forward(with_cam);
  Tensor squashed = head_sigmoid_.forward(logits);

  std::vector<FrameOutput> outputs(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    outputs[static_cast<std::size_t>(t)].x_pred = squashed.at2(t, 0);
    outputs[static_cast<std::size_t>(t)].confidence = squashed.at2(t, 1);
  }
  return outputs;
}

std::vector<FrameOutput> Model::forward(const Tensor& features, const Tensor& visual,
                                        const std::vector<double>& camera_onehot, bool training) {
  const Tensor audio_emb = audio_encoder_forward(features, training);
  const Tensor visual_emb = visual_encoder_forward(visual, training);
  return fusion_head_forward(audio_emb, visual_emb, camera_onehot, training);
}

void Model::backward(const std::vector<FrameOutput>& output_grads) {
  const std::int64_t T = cfg_.output_frames();
  if (static_cast<std::int64_t>(output_grads.size()) != T) {
    throw DataError("output gradient count does not match the frame count");
  }
  Tensor dout({T, 2});
  for (std::int64_t t = 0; t < T; ++t) {
    dout.at2(t, 0) = output_grads[static_cast<std::size_t>(t)].x_pred;
    dout.at2(t, 1) = output_grads[static_cast<std::size_t>(t)].confidence;
  }

  Tensor g = head_sigmoid_.backward(dout);
  g = head_fc3_->backward(g);

  // Drop the camera one-hot columns.
  const std::int64_t mid = cfg_.embed_dim / 2;
  Tensor g_mid({T, mid});
  for (std::int64_t t = 0; t < T; ++t) {
    std::memcpy(g_mid.ptr() + t * mid, g.ptr() + t * (mid + cfg_.n_cameras),
                sizeof(double) * static_cast<std::size_t>(mid));
  }

  g = head_relu2_.backward(g_mid);
  g = head_fc2_->backward(g);
  g = head_relu1_.backward(g);
  g = head_fc1_->backward(g);
  g = fusion_conformer_->backward(g);

  const int e = cfg_.embed_dim;
  Tensor d_audio({T, e});
  Tensor d_visual({T, e});
  for (std::int64_t t = 0; t < T; ++t) {
    std::memcpy(d_audio.ptr() + t * e, g.ptr() + t * 2 * e, sizeof(double) * e);
    std::memcpy(d_visual.ptr() + t * e, g.ptr() + t * 2 * e + e, sizeof(double) * e);
  }

  // Visual path.
  Tensor gv = visual_conformer_->backward(d_visual);
  gv = visual_proj_->backward(gv, cfg_.visual_backbone == VisualBackboneKind::toy_conv);
  if (cfg_.visual_backbone == VisualBackboneKind::toy_conv) {
    toy_backbone_backward(gv);
  }

  // Audio path: undo the frequency pooling + transpose, then the blocks.
  const std::int64_t C = audio_pre_pool_shape_[0];
  const std::int64_t Ta = audio_pre_pool_shape_[1];
  const std::int64_t F = audio_pre_pool_shape_[2];
  Tensor ga({C, Ta, F});
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t t = 0; t < Ta; ++t) {
      const double v = d_audio.at2(t, c) / static_cast<double>(F);
      double* row = ga.ptr() + (c * Ta + t) * F;
      for (std::int64_t f = 0; f < F; ++f) row[f] = v;
    }
  }
  for (std::size_t b = audio_blocks_.size(); b-- > 0;) {
    auto& block = audio_blocks_[b];
    ga = block.relu.backward(ga);
    ga = block.bn.backward(ga);
    ga = block.pool.backward(ga);
    ga = block.conv_b.backward(ga);
    ga = block.conv_a.backward(ga, /*compute_dx=*/b > 0);
  }
}

std::int64_t count_parameters(const Model& model) {
  return model.params().parameter_count(/*trainable_only=*/true);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, Dtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_raw(out, kCheckpointVersion);

  KeyValueFile kv;
  model_config_to_section(model.config(), kv.add_section("model"));
  const std::string config_text = kv.serialize();
  write_raw(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  const auto& entries = model.params().entries();
  write_raw(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    write_raw(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_raw(out, static_cast<std::uint8_t>(dtype));
    write_raw(out, static_cast<std::uint8_t>(e.value.ndim()));
    for (std::int64_t d : e.value.shape) write_raw(out, static_cast<std::uint64_t>(d));
    if (dtype == Dtype::f64) {
      out.write(reinterpret_cast<const char*>(e.value.data.data()),
                static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
    } else {
      std::vector<float> narrow(e.value.data.size());
      for (std::size_t i = 0; i < narrow.size(); ++i) {
        narrow[i] = static_cast<float>(e.value.data[i]);
      }
      out.write(reinterpret_cast<const char*>(narrow.data()),
                static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    }
  }
  if (!out) throw DataError("short write on checkpoint: " + path.string());
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  const auto version = read_raw<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto config_len = read_raw<std::uint32_t>(in, "config length");
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), config_len);
  if (!in) throw DataError("checkpoint truncated while reading config");
  const KeyValueFile kv = KeyValueFile::parse(config_text, path.string() + "#config");
  const ModelConfig cfg = model_config_from_section(kv.section("model"));

  auto model = std::make_unique<Model>(cfg);
  const auto n_arrays = read_raw<std::uint32_t>(in, "array count");
  std::size_t loaded = 0;
  for (std::uint32_t a = 0; a < n_arrays; ++a) {
    const auto name_len = read_raw<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("checkpoint truncated while reading a name");
    const auto dtype = read_raw<std::uint8_t>(in, "dtype");
    const auto rank = read_raw<std::uint8_t>(in, "rank");
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(read_raw<std::uint64_t>(in, "dimension"));

    ParamStore::Entry* entry = model->params().find(name);
    if (!entry) throw DataError("checkpoint array '" + name + "' is not in the model schema");
    if (entry->value.shape != shape) {
      throw DataError("checkpoint array '" + name + "' has a mismatched shape");
    }
    const std::size_t n = entry->value.data.size();
    if (dtype == static_cast<std::uint8_t>(Dtype::f64)) {
      in.read(reinterpret_cast<char*>(entry->value.data.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    } else if (dtype == static_cast<std::uint8_t>(Dtype::f32)) {
      std::vector<float> narrow(n);
      in.read(reinterpret_cast<char*>(narrow.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      for (std::size_t i = 0; i < n; ++i) {
        entry->value.data[i] = static_cast<double>(narrow[i]);
      }
    } else {
      throw DataError("unknown checkpoint dtype code " + std::to_string(dtype));
    }
    if (!in) throw DataError("checkpoint truncated while reading '" + name + "'");
    if (!entry->value.all_finite()) {
      throw DataError("checkpoint array '" + name + "' contains non-finite values");
    }
    ++loaded;
  }
  if (loaded != model->params().entries().size()) {
    throw DataError("checkpoint does not cover every model parameter");
  }
  return model;
}

}  // namespace asdl
