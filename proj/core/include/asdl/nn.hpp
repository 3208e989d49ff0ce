#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "asdl/rng.hpp"
#include "asdl/tensor.hpp"

namespace asdl {

// Named parameter and buffer storage. Entries keep registration order so
// initialization, checkpoints and Adam moments line up deterministically.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  int add(const std::string& name, std::vector<std::int64_t> shape, bool trainable = true);

  Entry& entry(int handle) { return entries_[static_cast<std::size_t>(handle)]; }
  const Entry& entry(int handle) const { return entries_[static_cast<std::size_t>(handle)]; }
  Entry* find(const std::string& name);
  const Entry* find(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  std::int64_t parameter_count(bool trainable_only = true) const;

  // Rounds every value to the nearest float32; training-mode storage.
  void round_to_f32();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// He-style uniform fan-in initialization.
void init_uniform_fan_in(ParamStore& store, int handle, std::int64_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Layers. Each layer owns handles into a ParamStore, caches what it needs
// during forward and accumulates parameter gradients during backward.
// One instance serves one thread; clone the model for parallel inference.
// ---------------------------------------------------------------------------

// 2-D convolution over [C, H, W] maps with zero padding.
class Conv2d {
 public:
  Conv2d(ParamStore& store, const std::string& prefix, int in_c, int out_c, int kh, int kw,
         int pad_h, int pad_w, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool compute_dx = true);

 private:
  ParamStore* store_;
  int in_c_, out_c_, kh_, kw_, pad_h_, pad_w_;
  int weight_, bias_;
  Tensor input_;
};

// Average pooling with independent vertical/horizontal strides (window ==
// stride).
class AvgPool2d {
 public:
  AvgPool2d(int stride_h, int stride_w) : sh_(stride_h), sw_(stride_w) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  int sh_, sw_;
  std::vector<std::int64_t> input_shape_;
};

// Batch normalization over the spatial axes of a [C, H, W] map. Statistics
// come from the presented sample in training mode and from the running
// averages in inference mode.
class BatchNorm2d {
 public:
  BatchNorm2d(ParamStore& store, const std::string& prefix, int channels);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  ParamStore* store_;
  int channels_;
  int gamma_, beta_, running_mean_, running_var_;
  bool training_ = false;
  Tensor x_hat_;
  std::vector<double> inv_std_;
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
};

// Batch normalization over the time axis of a [T, C] sequence.
class BatchNorm1dSeq {
 public:
  BatchNorm1dSeq(ParamStore& store, const std::string& prefix, int channels);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  ParamStore* store_;
  int channels_;
  int gamma_, beta_, running_mean_, running_var_;
  bool training_ = false;
  Tensor x_hat_;
  std::vector<double> inv_std_;
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<bool> mask_;
};

// x * sigmoid(x)
class Swish {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor input_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor output_;
};

// Gated linear unit over the feature axis: [T, 2D] -> [T, D].
class Glu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor input_;
};

// Affine map on the rows of a [T, in] sequence.
class Linear {
 public:
  Linear(ParamStore& store, const std::string& prefix, int in_dim, int out_dim, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool compute_dx = true);

 private:
  ParamStore* store_;
  int in_dim_, out_dim_;
  int weight_, bias_;
  Tensor input_;
};

// Row-wise layer normalization of a [T, D] sequence.
class LayerNorm {
 public:
  LayerNorm(ParamStore& store, const std::string& prefix, int dim);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  ParamStore* store_;
  int dim_;
  int gamma_, beta_;
  Tensor x_hat_;
  std::vector<double> inv_std_;
  static constexpr double kEps = 1e-5;
};

// Per-channel convolution along the time axis of a [T, C] sequence.
class DepthwiseConv1d {
 public:
  DepthwiseConv1d(ParamStore& store, const std::string& prefix, int channels, int kernel,
                  Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  ParamStore* store_;
  int channels_, kernel_;
  int weight_, bias_;
  Tensor input_;
};

// Multi-head self-attention with a learned, distance-clamped relative
// position bias added to the attention logits.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(ParamStore& store, const std::string& prefix, int dim, int heads,
                         int max_relative_offset, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  ParamStore* store_;
  int dim_, heads_, head_dim_, max_rel_;
  Linear wq_, wk_, wv_, wo_;
  int rel_bias_;
  Tensor q_, k_, v_;       // [T, dim]
  std::vector<Tensor> attn_;  // per head [T, T]
  Tensor concat_;          // [T, dim] pre-output-projection
};

struct ConformerConfig {
  int dim = 512;
  int heads = 8;
  int ffn_hidden = 1024;
  int depthwise_kernel = 51;
  int layers = 4;
  int max_relative_offset = 64;
};

// Macaron feed-forward module: LayerNorm -> Linear -> Swish -> Linear.
class FeedForwardModule {
 public:
  FeedForwardModule(ParamStore& store, const std::string& prefix, int dim, int hidden, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  LayerNorm ln_;
  Linear in_, out_;
  Swish swish_;
};

// Convolution module: LayerNorm -> pointwise (2x) -> GLU -> depthwise ->
// BatchNorm -> Swish -> pointwise.
class ConvolutionModule {
 public:
  ConvolutionModule(ParamStore& store, const std::string& prefix, int dim, int kernel, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  LayerNorm ln_;
  Linear pw_in_;
  Glu glu_;
  DepthwiseConv1d dw_;
  BatchNorm1dSeq bn_;
  Swish swish_;
  Linear pw_out_;
};

// One Conformer block: half-step FFN, self-attention, convolution module,
// half-step FFN, closing LayerNorm. Shape preserving on [T, dim].
class ConformerBlock {
 public:
  ConformerBlock(ParamStore& store, const std::string& prefix, const ConformerConfig& cfg,
                 Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  FeedForwardModule ff1_, ff2_;
  MultiHeadSelfAttention attn_;
  ConvolutionModule conv_;
  LayerNorm final_ln_;
};

class Conformer {
 public:
  Conformer(ParamStore& store, const std::string& prefix, const ConformerConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  std::vector<ConformerBlock> blocks_;
};

}  // namespace asdl
