#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "asdl/keyvalue.hpp"
#include "asdl/nn.hpp"
#include "asdl/tensor.hpp"

namespace asdl {

enum class VisualBackboneKind { toy_conv, external_embedding };

std::string to_string(VisualBackboneKind kind);
VisualBackboneKind visual_backbone_from_string(const std::string& name);

// Network hyper-parameters. The defaults are the full-scale configuration:
// a 4-block CNN audio encoder growing to 512 channels, 4-layer Conformers
// with 8 heads, depthwise kernel 51 and 1024-wide feed-forward hidden
// layers, and an 11-view camera one-hot.
struct ModelConfig {
  int conv_blocks = 4;
  int base_channels = 64;  // doubles per block, ending at embed_dim
  int conformer_layers = 4;
  int attention_heads = 8;
  int depthwise_kernel = 51;
  int ffn_hidden = 1024;
  int embed_dim = 512;
  int n_cameras = 11;
  VisualBackboneKind visual_backbone = VisualBackboneKind::toy_conv;
  std::uint64_t seed = 0;

  // Input contract.
  int input_channels = 16;
  int input_time_bins = 960;
  int input_freq_bins = 64;
  int visual_columns = 64;  // toy_conv observation width
  int external_dim = 2048;  // external embedding width
  int max_relative_offset = 64;

  int output_frames() const { return input_time_bins >> conv_blocks; }
  int last_conv_channels() const { return base_channels << (conv_blocks - 1); }
};

void validate_model_config(const ModelConfig& cfg);

// Compact toy configuration that keeps the 960-bin / 60-frame input contract
// but shrinks every width; used by the overfit and pipeline tests.
ModelConfig toy_model_config(std::uint64_t seed = 0);

void model_config_to_section(const ModelConfig& cfg, KeyValueSection& section);
ModelConfig model_config_from_section(const KeyValueSection& section);

struct FrameOutput {
  double x_pred = 0.0;      // [0, 1] after the sigmoid
  double confidence = 0.0;  // [0, 1] after the sigmoid
};

// Forward (and reverse) computation of the fusion network. One instance
// serves one thread at a time; load the checkpoint into separate instances
// for parallel inference.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // features: [input_channels, input_time_bins, input_freq_bins]
  // visual:   [output_frames, visual_columns or external_dim]
  // camera_onehot: n_cameras entries, exactly one 1.0
  std::vector<FrameOutput> forward(const Tensor& features, const Tensor& visual,
                                   const std::vector<double>& camera_onehot, bool training);

  // dL/d(x_pred, confidence) per frame; call immediately after forward.
  // Accumulates parameter gradients in the store.
  void backward(const std::vector<FrameOutput>& output_grads);

  // Individual stages with the same state handling as forward().
  Tensor audio_encoder_forward(const Tensor& features, bool training);
  Tensor visual_encoder_forward(const Tensor& visual, bool training);

  // Per-frame backbone features before projection and Conformer: the toy
  // column-profile CNN, or the external embeddings passed through.
  Tensor visual_backbone_forward(const Tensor& visual);
  std::vector<FrameOutput> fusion_head_forward(const Tensor& audio_emb, const Tensor& visual_emb,
                                               const std::vector<double>& camera_onehot,
                                               bool training);

 private:
  struct ConvBlock {
    Conv2d conv_a;
    Conv2d conv_b;
    AvgPool2d pool;
    BatchNorm2d bn;
    ReLU relu;
  };

  Tensor toy_backbone_forward(const Tensor& visual);
  Tensor toy_backbone_backward(const Tensor& dfeat);

  ModelConfig cfg_;
  ParamStore params_;

  std::vector<ConvBlock> audio_blocks_;
  std::vector<std::int64_t> audio_pre_pool_shape_;  // shape entering freq pooling

  std::unique_ptr<Conv2d> vb_conv1_, vb_conv2_;
  ReLU vb_relu1_, vb_relu2_;
  AvgPool2d vb_pool1_{1, 2}, vb_pool2_{1, 2};
  std::unique_ptr<Linear> visual_proj_;
  std::unique_ptr<Conformer> visual_conformer_;

  std::unique_ptr<Conformer> fusion_conformer_;
  std::unique_ptr<Linear> head_fc1_, head_fc2_, head_fc3_;
  ReLU head_relu1_, head_relu2_;
  Sigmoid head_sigmoid_;

  std::vector<double> camera_onehot_;
};

std::int64_t count_parameters(const Model& model);

// Checkpoint layout (little endian):
//   magic "ASDLCKPT", u32 version, u32 config_len, config text (key-value),
//   u32 array_count, then per array: u32 name_len, name bytes, u8 dtype,
//   u8 rank, u64 * rank dims, raw values.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     Dtype dtype = Dtype::f32);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace asdl
