#include "mdnx/core/nn.hpp"

#include <cmath>
#include <numbers>

namespace mdnx {

double Rng::normal() {
  // Box-Muller; the second variate is discarded to keep the stream stateless.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Module::check_name(const std::string& name) const {
  if (name.empty() || name.find('.') != std::string::npos) throw ContractError("invalid module member name '" + name + "'");
  auto clash = [&](const auto& v) {
    for (const auto& [n, _] : v)
      if (n == name) return true;
    return false;
  };
  if (clash(params_) || clash(buffers_) || clash(children_)) {
    throw ContractError("duplicate member name '" + name + "'");
  }
}

Tensor Module::register_parameter(const std::string& name, Tensor t) {
  check_name(name);
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

Tensor Module::register_buffer(const std::string& name, Tensor t) {
  check_name(name);
  buffers_.emplace_back(name, t);
  return t;
}

void Module::collect(const std::string& prefix, bool params, std::vector<NamedTensor>& out) const {
  for (const auto& [n, t] : params ? params_ : buffers_) out.emplace_back(prefix + n, t);
  for (const auto& [n, child] : children_) child->collect(prefix + n + ".", params, out);
}

std::vector<NamedTensor> Module::named_parameters() const {
  std::vector<NamedTensor> out;
  collect("", true, out);
  return out;
}

std::vector<NamedTensor> Module::named_buffers() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<NamedTensor> Module::state() const {
  auto out = named_parameters();
  auto buf = named_buffers();
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [_, t] : named_parameters()) out.push_back(t);
  return out;
}

Index Module::parameter_count() const {
  Index n = 0;
  for (const auto& [_, t] : named_parameters()) n += t.numel();
  return n;
}

void Module::train(bool on) {
  training_ = on;
  for (auto& [_, child] : children_) child->train(on);
}

void Module::zero_grad() {
  for (auto& [_, t] : named_parameters()) t.zero_grad();
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<Real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

Linear::Linear(Index in, Index out, Rng& rng, bool with_bias) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight = register_parameter("w", uniform_tensor({out, in}, bound, rng));
  if (with_bias) bias = register_parameter("b", Tensor::zeros({out}));
}

Conv2d::Conv2d(Index in, Index out, Index kernel, Conv2dArgs a, Rng& rng, bool with_bias) : args(a) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
  weight = register_parameter("w", uniform_tensor({out, in, kernel, kernel}, bound, rng));
  if (with_bias) bias = register_parameter("b", Tensor::zeros({out}));
}

BatchNorm2d::BatchNorm2d(Index channels) {
  gamma = register_parameter("gamma", Tensor::full({channels}, 1));
  beta = register_parameter("beta", Tensor::zeros({channels}));
  running_mean = register_buffer("running_mean", Tensor::zeros({channels}));
  running_var = register_buffer("running_var", Tensor::full({channels}, 1));
}

LayerNorm::LayerNorm(Index features) {
  gamma = register_parameter("gamma", Tensor::full({features}, 1));
  beta = register_parameter("beta", Tensor::zeros({features}));
}

Mlp::Mlp(Index in, Index hidden, Index out, Rng& rng) {
  fc1 = register_module("fc1", std::make_shared<Linear>(in, hidden, rng));
  fc2 = register_module("fc2", std::make_shared<Linear>(hidden, out, rng));
}

MultiHeadAttention::MultiHeadAttention(Index dim, Index heads, Rng& rng) : dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  q_proj = register_module("q", std::make_shared<Linear>(dim, dim, rng));
  k_proj = register_module("k", std::make_shared<Linear>(dim, dim, rng));
  v_proj = register_module("v", std::make_shared<Linear>(dim, dim, rng));
  out_proj = register_module("out", std::make_shared<Linear>(dim, dim, rng));
}

Tensor split_heads(const Tensor& x, Index heads) {
  const Index n = x.size(0), l = x.size(1), c = x.size(2);
  return reshape(permute(reshape(x, {n, l, heads, c / heads}), {0, 2, 1, 3}), {n * heads, l, c / heads});
}

Tensor merge_heads(const Tensor& x, Index heads) {
  const Index nh = x.size(0), l = x.size(1), d = x.size(2);
  return reshape(permute(reshape(x, {nh / heads, heads, l, d}), {0, 2, 1, 3}), {nh / heads, l, heads * d});
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& key, const Tensor& value, Tensor* weights) const {
  if (query.dim() != 3 || key.dim() != 3 || value.dim() != 3 || query.size(2) != dim_) {
    throw DimensionError("attention expects [N, L, " + std::to_string(dim_) + "] inputs, got " + shape_str(query.shape()));
  }
  const Index n = query.size(0), lq = query.size(1), lk = key.size(1);
  const Index d = dim_ / heads_;
  const Tensor q = split_heads(q_proj->forward(query), heads_);
  const Tensor k = split_heads(k_proj->forward(key), heads_);
  const Tensor v = split_heads(v_proj->forward(value), heads_);
  const Tensor scores = mul_scalar(bmm(q, transpose(k, 1, 2)), Real(1) / std::sqrt(static_cast<Real>(d)));
  const Tensor attn = softmax(scores, -1);
  if (weights) *weights = reshape(attn, {n, heads_, lq, lk});
  return out_proj->forward(merge_heads(bmm(attn, v), heads_));
}

Tensor to_tokens(const Tensor& x) {
  const Index n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  return permute(reshape(x, {n, c, h * w}), {0, 2, 1});
}

Tensor from_tokens(const Tensor& x, Index h, Index w) {
  const Index n = x.size(0), c = x.size(2);
  if (x.size(1) != h * w) throw DimensionError("from_tokens: token count does not match " + std::to_string(h) + "x" + std::to_string(w));
  return reshape(permute(x, {0, 2, 1}), {n, c, h, w});
}

}  // namespace mdnx
