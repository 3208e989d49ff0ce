#include "asdl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace asdl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int ParamStore::add(const std::string& name, std::vector<std::int64_t> shape, bool trainable) {
  if (index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Entry e;
  e.name = name;
  e.value = Tensor(shape);
  e.grad = Tensor(std::move(shape));
  e.trainable = trainable;
  entries_.push_back(std::move(e));
  const int handle = static_cast<int>(entries_.size()) - 1;
  index_.emplace(name, handle);
  return handle;
}

ParamStore::Entry* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[static_cast<std::size_t>(it->second)];
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[static_cast<std::size_t>(it->second)];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::int64_t ParamStore::parameter_count(bool trainable_only) const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (!trainable_only || e.trainable) n += e.value.size();
  }
  return n;
}

void ParamStore::round_to_f32() {
  for (auto& e : entries_) {
    for (double& v : e.value.data) v = static_cast<double>(static_cast<float>(v));
  }
}

void init_uniform_fan_in(ParamStore& store, int handle, std::int64_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
  for (double& v : store.entry(handle).value.data) v = rng.uniform(-limit, limit);
}

// ----------------------------------------------------------------------- //
// Conv2d

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, int in_c, int out_c, int kh, int kw,
               int pad_h, int pad_w, Rng& rng)
    : store_(&store), in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), pad_h_(pad_h), pad_w_(pad_w) {
  weight_ = store.add(prefix + ".weight", {out_c, in_c, kh, kw});
  bias_ = store.add(prefix + ".bias", {out_c});
  init_uniform_fan_in(store, weight_, static_cast<std::int64_t>(in_c) * kh * kw, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.ndim() != 3 || x.dim(0) != in_c_) {
    throw std::invalid_argument("Conv2d: input channel mismatch");
  }
  input_ = x;
  const std::int64_t H = x.dim(1);
  const std::int64_t W = x.dim(2);
  const std::int64_t K = static_cast<std::int64_t>(in_c_) * kh_ * kw_;

  Tensor y({out_c_, H, W});
  ConstMapMat wm(store_->entry(weight_).value.ptr(), out_c_, K);
  const double* bias = store_->entry(bias_).value.ptr();

  RowMat cols(K, W);
  for (std::int64_t h = 0; h < H; ++h) {
    cols.setZero();
    for (int c = 0; c < in_c_; ++c) {
      for (int i = 0; i < kh_; ++i) {
        const std::int64_t src_h = h - pad_h_ + i;
        if (src_h < 0 || src_h >= H) continue;
        const double* row = x.ptr() + (static_cast<std::int64_t>(c) * H + src_h) * W;
        for (int j = 0; j < kw_; ++j) {
          double* dst = cols.row(static_cast<std::int64_t>(c) * kh_ * kw_ + i * kw_ + j).data();
          const std::int64_t lo = std::max<std::int64_t>(0, pad_w_ - j);
          const std::int64_t hi = std::min<std::int64_t>(W, W + pad_w_ - j);
          for (std::int64_t w = lo; w < hi; ++w) dst[w] = row[w - pad_w_ + j];
        }
      }
    }
    RowMat out = wm * cols;  // [out_c, W]
    for (int oc = 0; oc < out_c_; ++oc) {
      double* dst = y.ptr() + (static_cast<std::int64_t>(oc) * H + h) * W;
      for (std::int64_t w = 0; w < W; ++w) dst[w] = out(oc, w) + bias[oc];
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool compute_dx) {
  const Tensor& x = input_;
  const std::int64_t H = x.dim(1);
  const std::int64_t W = x.dim(2);
  const std::int64_t K = static_cast<std::int64_t>(in_c_) * kh_ * kw_;

  ConstMapMat wm(store_->entry(weight_).value.ptr(), out_c_, K);
  MapMat dwm(store_->entry(weight_).grad.ptr(), out_c_, K);
  double* db = store_->entry(bias_).grad.ptr();

  Tensor dx;
  if (compute_dx) dx = Tensor(x.shape);

  RowMat cols(K, W);
  RowMat dyh(out_c_, W);
  for (std::int64_t h = 0; h < H; ++h) {
    for (int oc = 0; oc < out_c_; ++oc) {
      const double* src = dy.ptr() + (static_cast<std::int64_t>(oc) * H + h) * W;
      double acc = 0.0;
      for (std::int64_t w = 0; w < W; ++w) {
        dyh(oc, w) = src[w];
        acc += src[w];
      }
      db[oc] += acc;
    }

    // Rebuild the column matrix used in forward for this output row.
    cols.setZero();
    for (int c = 0; c < in_c_; ++c) {
      for (int i = 0; i < kh_; ++i) {
        const std::int64_t src_h = h - pad_h_ + i;
        if (src_h < 0 || src_h >= H) continue;
        const double* row = x.ptr() + (static_cast<std::int64_t>(c) * H + src_h) * W;
        for (int j = 0; j < kw_; ++j) {
          double* dst = cols.row(static_cast<std::int64_t>(c) * kh_ * kw_ + i * kw_ + j).data();
          const std::int64_t lo = std::max<std::int64_t>(0, pad_w_ - j);
          const std::int64_t hi = std::min<std::int64_t>(W, W + pad_w_ - j);
          for (std::int64_t w = lo; w < hi; ++w) dst[w] = row[w - pad_w_ + j];
        }
      }
    }
    dwm.noalias() += dyh * cols.transpose();

    if (compute_dx) {
      RowMat dcols = wm.transpose() * dyh;  // [K, W]
      for (int c = 0; c < in_c_; ++c) {
        for (int i = 0; i < kh_; ++i) {
          const std::int64_t src_h = h - pad_h_ + i;
          if (src_h < 0 || src_h >= H) continue;
          double* row = dx.ptr() + (static_cast<std::int64_t>(c) * H + src_h) * W;
          for (int j = 0; j < kw_; ++j) {
            const double* src =
                dcols.row(static_cast<std::int64_t>(c) * kh_ * kw_ + i * kw_ + j).data();
            const std::int64_t lo = std::max<std::int64_t>(0, pad_w_ - j);
            const std::int64_t hi = std::min<std::int64_t>(W, W + pad_w_ - j);
            for (std::int64_t w = lo; w < hi; ++w) row[w - pad_w_ + j] += src[w];
          }
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// AvgPool2d

Tensor AvgPool2d::forward(const Tensor& x) {
  input_shape_ = x.shape;
  const std::int64_t C = x.dim(0);
  const std::int64_t H = x.dim(1);
  const std::int64_t W = x.dim(2);
  if (H % sh_ != 0 || W % sw_ != 0) {
    throw std::invalid_argument("AvgPool2d: spatial size not divisible by stride");
  }
  const std::int64_t OH = H / sh_;
  const std::int64_t OW = W / sw_;
  Tensor y({C, OH, OW});
  const double scale = 1.0 / (sh_ * sw_);
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t oh = 0; oh < OH; ++oh) {
      for (std::int64_t ow = 0; ow < OW; ++ow) {
        double acc = 0.0;
        for (int i = 0; i < sh_; ++i) {
          const double* row = x.ptr() + (c * H + oh * sh_ + i) * W + ow * sw_;
          for (int j = 0; j < sw_; ++j) acc += row[j];
        }
        y.at3(c, oh, ow) = acc * scale;
      }
    }
  }
  return y;
}

Tensor AvgPool2d::backward(const Tensor& dy) const {
  Tensor dx(input_shape_);
  const std::int64_t C = input_shape_[0];
  const std::int64_t H = input_shape_[1];
  const std::int64_t W = input_shape_[2];
  const std::int64_t OH = H / sh_;
  const std::int64_t OW = W / sw_;
  const double scale = 1.0 / (sh_ * sw_);
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t oh = 0; oh < OH; ++oh) {
      for (std::int64_t ow = 0; ow < OW; ++ow) {
        const double g = dy.at3(c, oh, ow) * scale;
        for (int i = 0; i < sh_; ++i) {
          double* row = dx.ptr() + (c * H + oh * sh_ + i) * W + ow * sw_;
          for (int j = 0; j < sw_; ++j) row[j] += g;
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// BatchNorm2d

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& prefix, int channels)
    : store_(&store), channels_(channels) {
  gamma_ = store.add(prefix + ".gamma", {channels});
  beta_ = store.add(prefix + ".beta", {channels});
  running_mean_ = store.add(prefix + ".running_mean", {channels}, /*trainable=*/false);
  running_var_ = store.add(prefix + ".running_var", {channels}, /*trainable=*/false);
  store.entry(gamma_).value.fill(1.0);
  store.entry(running_var_).value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  training_ = training;
  const std::int64_t C = x.dim(0);
  const std::int64_t N = x.dim(1) * x.dim(2);
  if (C != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");

  const double* gamma = store_->entry(gamma_).value.ptr();
  const double* beta = store_->entry(beta_).value.ptr();
  double* rm = store_->entry(running_mean_).value.ptr();
  double* rv = store_->entry(running_var_).value.ptr();

  Tensor y(x.shape);
  x_hat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(C), 0.0);

  for (std::int64_t c = 0; c < C; ++c) {
    const double* src = x.ptr() + c * N;
    double mean, var;
    if (training) {
      mean = 0.0;
      for (std::int64_t i = 0; i < N; ++i) mean += src[i];
      mean /= static_cast<double>(N);
      var = 0.0;
      for (std::int64_t i = 0; i < N; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(N);
      rm[c] = (1.0 - kMomentum) * rm[c] + kMomentum * mean;
      rv[c] = (1.0 - kMomentum) * rv[c] + kMomentum * var;
    } else {
      mean = rm[c];
      var = rv[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[static_cast<std::size_t>(c)] = inv;
    double* xh = x_hat_.ptr() + c * N;
    double* dst = y.ptr() + c * N;
    for (std::int64_t i = 0; i < N; ++i) {
      xh[i] = (src[i] - mean) * inv;
      dst[i] = gamma[c] * xh[i] + beta[c];
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const std::int64_t C = dy.dim(0);
  const std::int64_t N = dy.dim(1) * dy.dim(2);
  const double* gamma = store_->entry(gamma_).value.ptr();
  double* dgamma = store_->entry(gamma_).grad.ptr();
  double* dbeta = store_->entry(beta_).grad.ptr();

  Tensor dx(dy.shape);
  for (std::int64_t c = 0; c < C; ++c) {
    const double* g = dy.ptr() + c * N;
    const double* xh = x_hat_.ptr() + c * N;
    double* out = dx.ptr() + c * N;
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::int64_t i = 0; i < N; ++i) {
      sum_dy += g[i];
      sum_dy_xh += g[i] * xh[i];
    }
    dbeta[c] += sum_dy;
    dgamma[c] += sum_dy_xh;
    const double inv = inv_std_[static_cast<std::size_t>(c)];
    if (training_) {
      const double mean_dy = sum_dy / static_cast<double>(N);
      const double mean_dy_xh = sum_dy_xh / static_cast<double>(N);
      for (std::int64_t i = 0; i < N; ++i) {
        out[i] = gamma[c] * inv * (g[i] - mean_dy - xh[i] * mean_dy_xh);
      }
    } else {
      for (std::int64_t i = 0; i < N; ++i) out[i] = gamma[c] * inv * g[i];
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// BatchNorm1dSeq ([T, C] layout)

BatchNorm1dSeq::BatchNorm1dSeq(ParamStore& store, const std::string& prefix, int channels)
    : store_(&store), channels_(channels) {
  gamma_ = store.add(prefix + ".gamma", {channels});
  beta_ = store.add(prefix + ".beta", {channels});
  running_mean_ = store.add(prefix + ".running_mean", {channels}, /*trainable=*/false);
  running_var_ = store.add(prefix + ".running_var", {channels}, /*trainable=*/false);
  store.entry(gamma_).value.fill(1.0);
  store.entry(running_var_).value.fill(1.0);
}

Tensor BatchNorm1dSeq::forward(const Tensor& x, bool training) {
  training_ = training;
  const std::int64_t T = x.dim(0);
  const std::int64_t C = x.dim(1);
  if (C != channels_) throw std::invalid_argument("BatchNorm1dSeq: channel mismatch");

  const double* gamma = store_->entry(gamma_).value.ptr();
  const double* beta = store_->entry(beta_).value.ptr();
  double* rm = store_->entry(running_mean_).value.ptr();
  double* rv = store_->entry(running_var_).value.ptr();

  Tensor y(x.shape);
  x_hat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(C), 0.0);

  for (std::int64_t c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      mean = 0.0;
      for (std::int64_t t = 0; t < T; ++t) mean += x.at2(t, c);
      mean /= static_cast<double>(T);
      var = 0.0;
      for (std::int64_t t = 0; t < T; ++t) {
        const double d = x.at2(t, c) - mean;
        var += d * d;
      }
      var /= static_cast<double>(T);
      rm[c] = (1.0 - kMomentum) * rm[c] + kMomentum * mean;
      rv[c] = (1.0 - kMomentum) * rv[c] + kMomentum * var;
    } else {
      mean = rm[c];
      var = rv[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[static_cast<std::size_t>(c)] = inv;
    for (std::int64_t t = 0; t < T; ++t) {
      const double xh = (x.at2(t, c) - mean) * inv;
      x_hat_.at2(t, c) = xh;
      y.at2(t, c) = gamma[c] * xh + beta[c];
    }
  }
  return y;
}

Tensor BatchNorm1dSeq::backward(const Tensor& dy) {
  const std::int64_t T = dy.dim(0);
  const std::int64_t C = dy.dim(1);
  const double* gamma = store_->entry(gamma_).value.ptr();
  double* dgamma = store_->entry(gamma_).grad.ptr();
  double* dbeta = store_->entry(beta_).grad.ptr();

  Tensor dx(dy.shape);
  for (std::int64_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
      sum_dy += dy.at2(t, c);
      sum_dy_xh += dy.at2(t, c) * x_hat_.at2(t, c);
    }
    dbeta[c] += sum_dy;
    dgamma[c] += sum_dy_xh;
    const double inv = inv_std_[static_cast<std::size_t>(c)];
    if (training_) {
      const double mean_dy = sum_dy / static_cast<double>(T);
      const double mean_dy_xh = sum_dy_xh / static_cast<double>(T);
      for (std::int64_t t = 0; t < T; ++t) {
        dx.at2(t, c) =
            gamma[c] * inv * (dy.at2(t, c) - mean_dy - x_hat_.at2(t, c) * mean_dy_xh);
      }
    } else {
      for (std::int64_t t = 0; t < T; ++t) dx.at2(t, c) = gamma[c] * inv * dy.at2(t, c);
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// Elementwise layers

Tensor ReLU::forward(const Tensor& x) {
  mask_.assign(x.data.size(), false);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] > 0.0) {
      y.data[i] = x.data[i];
      mask_[i] = true;
    }
  }
  return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (mask_[i]) dx.data[i] = dy.data[i];
  }
  return dx;
}

Tensor Swish::forward(const Tensor& x) {
  input_ = x;
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] = x.data[i] * sigmoid(x.data[i]);
  }
  return y;
}

Tensor Swish::backward(const Tensor& dy) const {
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const double s = sigmoid(input_.data[i]);
    dx.data[i] = dy.data[i] * (s + input_.data[i] * s * (1.0 - s));
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  output_ = Tensor(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) output_.data[i] = sigmoid(x.data[i]);
  return output_;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const double y = output_.data[i];
    dx.data[i] = dy.data[i] * y * (1.0 - y);
  }
  return dx;
}

Tensor Glu::forward(const Tensor& x) {
  if (x.dim(1) % 2 != 0) throw std::invalid_argument("Glu: feature dim must be even");
  input_ = x;
  const std::int64_t T = x.dim(0);
  const std::int64_t D = x.dim(1) / 2;
  Tensor y({T, D});
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t d = 0; d < D; ++d) {
      y.at2(t, d) = x.at2(t, d) * sigmoid(x.at2(t, D + d));
    }
  }
  return y;
}

Tensor Glu::backward(const Tensor& dy) const {
  const std::int64_t T = input_.dim(0);
  const std::int64_t D = input_.dim(1) / 2;
  Tensor dx(input_.shape);
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t d = 0; d < D; ++d) {
      const double a = input_.at2(t, d);
      const double s = sigmoid(input_.at2(t, D + d));
      dx.at2(t, d) = dy.at2(t, d) * s;
      dx.at2(t, D + d) = dy.at2(t, d) * a * s * (1.0 - s);
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// Linear

Linear::Linear(ParamStore& store, const std::string& prefix, int in_dim, int out_dim, Rng& rng)
    : store_(&store), in_dim_(in_dim), out_dim_(out_dim) {
  weight_ = store.add(prefix + ".weight", {out_dim, in_dim});
  bias_ = store.add(prefix + ".bias", {out_dim});
  init_uniform_fan_in(store, weight_, in_dim, rng);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.dim(1) != in_dim_) throw std::invalid_argument("Linear: input width mismatch");
  input_ = x;
  const std::int64_t T = x.dim(0);
  Tensor y({T, out_dim_});
  ConstMapMat xm(x.ptr(), T, in_dim_);
  ConstMapMat wm(store_->entry(weight_).value.ptr(), out_dim_, in_dim_);
  MapMat ym(y.ptr(), T, out_dim_);
  ym.noalias() = xm * wm.transpose();
  const double* bias = store_->entry(bias_).value.ptr();
  for (std::int64_t t = 0; t < T; ++t) {
    for (int o = 0; o < out_dim_; ++o) ym(t, o) += bias[o];
  }
  return y;
}

Tensor Linear::backward(const Tensor& dy, bool compute_dx) {
  const std::int64_t T = input_.dim(0);
  ConstMapMat xm(input_.ptr(), T, in_dim_);
  ConstMapMat dym(dy.ptr(), T, out_dim_);
  MapMat dwm(store_->entry(weight_).grad.ptr(), out_dim_, in_dim_);
  dwm.noalias() += dym.transpose() * xm;
  double* db = store_->entry(bias_).grad.ptr();
  for (std::int64_t t = 0; t < T; ++t) {
    for (int o = 0; o < out_dim_; ++o) db[o] += dym(t, o);
  }
  Tensor dx;
  if (compute_dx) {
    dx = Tensor({T, in_dim_});
    ConstMapMat wm(store_->entry(weight_).value.ptr(), out_dim_, in_dim_);
    MapMat dxm(dx.ptr(), T, in_dim_);
    dxm.noalias() = dym * wm;
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// LayerNorm

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, int dim)
    : store_(&store), dim_(dim) {
  gamma_ = store.add(prefix + ".gamma", {dim});
  beta_ = store.add(prefix + ".beta", {dim});
  store.entry(gamma_).value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
  if (x.dim(1) != dim_) throw std::invalid_argument("LayerNorm: width mismatch");
  const std::int64_t T = x.dim(0);
  const double* gamma = store_->entry(gamma_).value.ptr();
  const double* beta = store_->entry(beta_).value.ptr();
  Tensor y(x.shape);
  x_hat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(T), 0.0);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* row = x.ptr() + t * dim_;
    double mean = 0.0;
    for (int d = 0; d < dim_; ++d) mean += row[d];
    mean /= dim_;
    double var = 0.0;
    for (int d = 0; d < dim_; ++d) {
      const double diff = row[d] - mean;
      var += diff * diff;
    }
    var /= dim_;
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[static_cast<std::size_t>(t)] = inv;
    double* xh = x_hat_.ptr() + t * dim_;
    double* dst = y.ptr() + t * dim_;
    for (int d = 0; d < dim_; ++d) {
      xh[d] = (row[d] - mean) * inv;
      dst[d] = gamma[d] * xh[d] + beta[d];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy) {
  const std::int64_t T = dy.dim(0);
  const double* gamma = store_->entry(gamma_).value.ptr();
  double* dgamma = store_->entry(gamma_).grad.ptr();
  double* dbeta = store_->entry(beta_).grad.ptr();
  Tensor dx(dy.shape);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* g = dy.ptr() + t * dim_;
    const double* xh = x_hat_.ptr() + t * dim_;
    double* out = dx.ptr() + t * dim_;
    double sum_g = 0.0, sum_g_xh = 0.0;
    for (int d = 0; d < dim_; ++d) {
      const double gg = g[d] * gamma[d];
      sum_g += gg;
      sum_g_xh += gg * xh[d];
      dgamma[d] += g[d] * xh[d];
      dbeta[d] += g[d];
    }
    const double inv = inv_std_[static_cast<std::size_t>(t)];
    const double mean_g = sum_g / dim_;
    const double mean_g_xh = sum_g_xh / dim_;
    for (int d = 0; d < dim_; ++d) {
      out[d] = inv * (g[d] * gamma[d] - mean_g - xh[d] * mean_g_xh);
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// DepthwiseConv1d

DepthwiseConv1d::DepthwiseConv1d(ParamStore& store, const std::string& prefix, int channels,
                                 int kernel, Rng& rng)
    : store_(&store), channels_(channels), kernel_(kernel) {
  if (kernel % 2 == 0) throw std::invalid_argument("DepthwiseConv1d: kernel must be odd");
  weight_ = store.add(prefix + ".weight", {channels, kernel});
  bias_ = store.add(prefix + ".bias", {channels});
  init_uniform_fan_in(store, weight_, kernel, rng);
}

Tensor DepthwiseConv1d::forward(const Tensor& x) {
  if (x.dim(1) != channels_) throw std::invalid_argument("DepthwiseConv1d: channel mismatch");
  input_ = x;
  const std::int64_t T = x.dim(0);
  const int pad = kernel_ / 2;
  const double* w = store_->entry(weight_).value.ptr();
  const double* b = store_->entry(bias_).value.ptr();
  Tensor y(x.shape);
  for (std::int64_t t = 0; t < T; ++t) {
    for (int c = 0; c < channels_; ++c) {
      double acc = b[c];
      for (int k = 0; k < kernel_; ++k) {
        const std::int64_t src = t - pad + k;
        if (src < 0 || src >= T) continue;
        acc += w[c * kernel_ + k] * x.at2(src, c);
      }
      y.at2(t, c) = acc;
    }
  }
  return y;
}

Tensor DepthwiseConv1d::backward(const Tensor& dy) {
  const std::int64_t T = input_.dim(0);
  const int pad = kernel_ / 2;
  const double* w = store_->entry(weight_).value.ptr();
  double* dw = store_->entry(weight_).grad.ptr();
  double* db = store_->entry(bias_).grad.ptr();
  Tensor dx(input_.shape);
  for (std::int64_t t = 0; t < T; ++t) {
    for (int c = 0; c < channels_; ++c) {
      const double g = dy.at2(t, c);
      db[c] += g;
      for (int k = 0; k < kernel_; ++k) {
        const std::int64_t src = t - pad + k;
        if (src < 0 || src >= T) continue;
        dw[c * kernel_ + k] += g * input_.at2(src, c);
        dx.at2(src, c) += g * w[c * kernel_ + k];
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------------- //
// MultiHeadSelfAttention

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamStore& store, const std::string& prefix,
                                               int dim, int heads, int max_relative_offset,
                                               Rng& rng)
    : store_(&store),
      dim_(dim),
      heads_(heads),
      head_dim_(dim / heads),
      max_rel_(max_relative_offset),
      wq_(store, prefix + ".wq", dim, dim, rng),
      wk_(store, prefix + ".wk", dim, dim, rng),
      wv_(store, prefix + ".wv", dim, dim, rng),
      wo_(store, prefix + ".wo", dim, dim, rng) {
  if (dim % heads != 0) {
    throw std::invalid_argument("attention dim must be divisible by the head count");
  }
  rel_bias_ = store.add(prefix + ".rel_bias", {heads, 2 * max_rel_ + 1});
  // Non-zero bias makes position information active from initialization.
  for (double& v : store.entry(rel_bias_).value.data) v = rng.uniform(-0.1, 0.1);
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x) {
  const std::int64_t T = x.dim(0);
  q_ = wq_.forward(x);
  k_ = wk_.forward(x);
  v_ = wv_.forward(x);

  const double* bias = store_->entry(rel_bias_).value.ptr();
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  attn_.assign(static_cast<std::size_t>(heads_), Tensor());
  concat_ = Tensor({T, dim_});
  std::vector<double> logits(static_cast<std::size_t>(T));
  for (int h = 0; h < heads_; ++h) {
    Tensor& attn = attn_[static_cast<std::size_t>(h)];
    attn = Tensor({T, T});
    const std::int64_t off = static_cast<std::int64_t>(h) * head_dim_;
    for (std::int64_t i = 0; i < T; ++i) {
      double max_logit = -1e300;
      for (std::int64_t j = 0; j < T; ++j) {
        double dot = 0.0;
        const double* qi = q_.ptr() + i * dim_ + off;
        const double* kj = k_.ptr() + j * dim_ + off;
        for (int d = 0; d < head_dim_; ++d) dot += qi[d] * kj[d];
        const std::int64_t rel = std::clamp<std::int64_t>(j - i, -max_rel_, max_rel_) + max_rel_;
        const double logit = dot * scale + bias[h * (2 * max_rel_ + 1) + rel];
        logits[static_cast<std::size_t>(j)] = logit;
        max_logit = std::max(max_logit, logit);
      }
      double denom = 0.0;
      for (std::int64_t j = 0; j < T; ++j) {
        const double e = std::exp(logits[static_cast<std::size_t>(j)] - max_logit);
        attn.at2(i, j) = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::int64_t j = 0; j < T; ++j) attn.at2(i, j) *= inv;

      double* dst = concat_.ptr() + i * dim_ + off;
      for (int d = 0; d < head_dim_; ++d) dst[d] = 0.0;
      for (std::int64_t j = 0; j < T; ++j) {
        const double a = attn.at2(i, j);
        const double* vj = v_.ptr() + j * dim_ + off;
        for (int d = 0; d < head_dim_; ++d) dst[d] += a * vj[d];
      }
    }
  }
  return wo_.forward(concat_);
}

Tensor MultiHeadSelfAttention::backward(const Tensor& dy) {
  const std::int64_t T = dy.dim(0);
  const Tensor dconcat = wo_.backward(dy);

  Tensor dq({T, dim_});
  Tensor dk({T, dim_});
  Tensor dv({T, dim_});
  double* dbias = store_->entry(rel_bias_).grad.ptr();
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  std::vector<double> dlogits(static_cast<std::size_t>(T));
  for (int h = 0; h < heads_; ++h) {
    const Tensor& attn = attn_[static_cast<std::size_t>(h)];
    const std::int64_t off = static_cast<std::int64_t>(h) * head_dim_;
    for (std::int64_t i = 0; i < T; ++i) {
      const double* dctx = dconcat.ptr() + i * dim_ + off;

      // dA = dctx . V, then softmax backward to logits.
      double dot_sum = 0.0;
      for (std::int64_t j = 0; j < T; ++j) {
        const double* vj = v_.ptr() + j * dim_ + off;
        double da = 0.0;
        for (int d = 0; d < head_dim_; ++d) da += dctx[d] * vj[d];
        dlogits[static_cast<std::size_t>(j)] = da;
        dot_sum += da * attn.at2(i, j);
      }
      for (std::int64_t j = 0; j < T; ++j) {
        const double a = attn.at2(i, j);
        dlogits[static_cast<std::size_t>(j)] = (dlogits[static_cast<std::size_t>(j)] - dot_sum) * a;
      }

      for (std::int64_t j = 0; j < T; ++j) {
        const double dl = dlogits[static_cast<std::size_t>(j)];
        const std::int64_t rel = std::clamp<std::int64_t>(j - i, -max_rel_, max_rel_) + max_rel_;
        dbias[h * (2 * max_rel_ + 1) + rel] += dl;

        const double* qi = q_.ptr() + i * dim_ + off;
        const double* kj = k_.ptr() + j * dim_ + off;
        double* dqi = dq.ptr() + i * dim_ + off;
        double* dkj = dk.ptr() + j * dim_ + off;
        for (int d = 0; d < head_dim_; ++d) {
          dqi[d] += dl * scale * kj[d];
          dkj[d] += dl * scale * qi[d];
        }

        const double a = attn.at2(i, j);
        double* dvj = dv.ptr() + j * dim_ + off;
        for (int d = 0; d < head_dim_; ++d) dvj[d] += a * dctx[d];
      }
    }
  }

  Tensor dx = wq_.backward(dq);
  const Tensor dxk = wk_.backward(dk);
  const Tensor dxv = wv_.backward(dv);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxk.data[i] + dxv.data[i];
  return dx;
}

// ----------------------------------------------------------------------- //
// Conformer modules

FeedForwardModule::FeedForwardModule(ParamStore& store, const std::string& prefix, int dim,
                                     int hidden, Rng& rng)
    : ln_(store, prefix + ".ln", dim),
      in_(store, prefix + ".in", dim, hidden, rng),
      out_(store, prefix + ".out", hidden, dim, rng) {}

Tensor FeedForwardModule::forward(const Tensor& x) {
  return out_.forward(swish_.forward(in_.forward(ln_.forward(x))));
}

Tensor FeedForwardModule::backward(const Tensor& dy) {
  return ln_.backward(in_.backward(swish_.backward(out_.backward(dy))));
}

ConvolutionModule::ConvolutionModule(ParamStore& store, const std::string& prefix, int dim,
                                     int kernel, Rng& rng)
    : ln_(store, prefix + ".ln", dim),
      pw_in_(store, prefix + ".pw_in", dim, 2 * dim, rng),
      dw_(store, prefix + ".dw", dim, kernel, rng),
      bn_(store, prefix + ".bn", dim),
      pw_out_(store, prefix + ".pw_out", dim, dim, rng) {}

Tensor ConvolutionModule::forward(const Tensor& x, bool training) {
  Tensor h = ln_.forward(x);
  h = pw_in_.forward(h);
  h = glu_.forward(h);
  h = dw_.forward(h);
  h = bn_.forward(h, training);
  h = swish_.forward(h);
  return pw_out_.forward(h);
}

Tensor ConvolutionModule::backward(const Tensor& dy) {
  Tensor g = pw_out_.backward(dy);
  g = swish_.backward(g);
  g = bn_.backward(g);
  g = dw_.backward(g);
  g = glu_.backward(g);
  g = pw_in_.backward(g);
  return ln_.backward(g);
}

ConformerBlock::ConformerBlock(ParamStore& store, const std::string& prefix,
                               const ConformerConfig& cfg, Rng& rng)
    : ff1_(store, prefix + ".ff1", cfg.dim, cfg.ffn_hidden, rng),
      ff2_(store, prefix + ".ff2", cfg.dim, cfg.ffn_hidden, rng),
      attn_(store, prefix + ".attn", cfg.dim, cfg.heads, cfg.max_relative_offset, rng),
      conv_(store, prefix + ".conv", cfg.dim, cfg.depthwise_kernel, rng),
      final_ln_(store, prefix + ".final_ln", cfg.dim) {}

Tensor ConformerBlock::forward(const Tensor& x, bool training) {
  Tensor h = x;
  {
    const Tensor f = ff1_.forward(h);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += 0.5 * f.data[i];
  }
  {
    const Tensor a = attn_.forward(h);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += a.data[i];
  }
  {
    const Tensor c = conv_.forward(h, training);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += c.data[i];
  }
  {
    const Tensor f = ff2_.forward(h);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += 0.5 * f.data[i];
  }
  return final_ln_.forward(h);
}

Tensor ConformerBlock::backward(const Tensor& dy) {
  Tensor g = final_ln_.backward(dy);
  {
    Tensor gf = ff2_.backward(g);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += 0.5 * gf.data[i];
  }
  {
    Tensor gc = conv_.backward(g);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += gc.data[i];
  }
  {
    Tensor ga = attn_.backward(g);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += ga.data[i];
  }
  {
    Tensor gf = ff1_.backward(g);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += 0.5 * gf.data[i];
  }
  return g;
}

Conformer::Conformer(ParamStore& store, const std::string& prefix, const ConformerConfig& cfg,
                     Rng& rng) {
  blocks_.reserve(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(l), cfg, rng);
  }
}

Tensor Conformer::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& block : blocks_) h = block.forward(h, training);
  return h;
}

Tensor Conformer::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return g;
}

}  // namespace asdl
