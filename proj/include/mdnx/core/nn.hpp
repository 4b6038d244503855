#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mdnx/core/ops.hpp"
#include "mdnx/core/rng.hpp"
#include "mdnx/core/tensor.hpp"

namespace mdnx {

using NamedTensor = std::pair<std::string, Tensor>;

/// Owns parameters, buffers and child modules. Names are dotted paths
/// built from registration names, e.g. "depth.stage1.sdc0.conv.w".
class Module {
 public:
  virtual ~Module() = default;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<NamedTensor> named_buffers() const;
  /// Parameters followed by buffers; what a checkpoint stores.
  std::vector<NamedTensor> state() const;
  std::vector<Tensor> parameters() const;
  Index parameter_count() const;

  void train(bool on = true);
  void eval() { train(false); }
  bool training() const { return training_; }
  void zero_grad();

 protected:
  Tensor register_parameter(const std::string& name, Tensor t);
  Tensor register_buffer(const std::string& name, Tensor t);

  template <class M>
  std::shared_ptr<M> register_module(const std::string& name, std::shared_ptr<M> m) {
    check_name(name);
    children_.emplace_back(name, m);
    return m;
  }

 private:
  void check_name(const std::string& name) const;
  void collect(const std::string& prefix, bool params, std::vector<NamedTensor>& out) const;

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
  bool training_ = true;
};

/// Xavier-uniform weights, zero bias.
class Linear : public Module {
 public:
  Linear(Index in, Index out, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }

  Tensor weight;
  Tensor bias;
};

/// Kaiming-uniform weights, zero bias.
class Conv2d : public Module {
 public:
  Conv2d(Index in, Index out, Index kernel, Conv2dArgs args, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, args); }
  Index kernel_size() const { return weight.size(2); }

  Tensor weight;
  Tensor bias;
  Conv2dArgs args;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(Index channels);
  Tensor forward(const Tensor& x) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training());
  }

  Tensor gamma, beta, running_mean, running_var;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(Index features);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  Tensor gamma, beta;
};

/// Two linear layers with a GELU in between.
class Mlp : public Module {
 public:
  Mlp(Index in, Index hidden, Index out, Rng& rng);
  Tensor forward(const Tensor& x) const { return fc2->forward(gelu(fc1->forward(x))); }

  std::shared_ptr<Linear> fc1, fc2;
};

/// Scaled dot-product attention with 1/sqrt(d_head) scaling, separate
/// q/k/v projections and an output projection. Inputs are [N, L, C].
class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(Index dim, Index heads, Rng& rng);

  /// When `weights` is given it receives the attention matrix [N, heads, Lq, Lk].
  Tensor forward(const Tensor& query, const Tensor& key, const Tensor& value, Tensor* weights = nullptr) const;

  Index dim() const { return dim_; }
  Index heads() const { return heads_; }

  std::shared_ptr<Linear> q_proj, k_proj, v_proj, out_proj;

 private:
  Index dim_;
  Index heads_;
};

/// [N, L, C] -> [N * heads, L, C / heads]
Tensor split_heads(const Tensor& x, Index heads);
/// [N * heads, L, d] -> [N, L, heads * d]
Tensor merge_heads(const Tensor& x, Index heads);

/// [N, C, H, W] -> [N, H*W, C]
Tensor to_tokens(const Tensor& x);
/// [N, H*W, C] -> [N, C, H, W]
Tensor from_tokens(const Tensor& x, Index h, Index w);

}  // namespace mdnx
