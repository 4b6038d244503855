#include "mdnx/train/optim.hpp"

#include <algorithm>
#include <cmath>

namespace mdnx {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double c1 = 1 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    auto data = p.mutable_data();
    const auto grad = p.grad();
    const bool has = p.has_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has ? static_cast<double>(grad[i]) : 0.0;
      m[i] = opts_.beta1 * m[i] + (1 - opts_.beta1) * g;
      v[i] = opts_.beta2 * v[i] + (1 - opts_.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps);
      const double x = static_cast<double>(data[i]);
      data[i] = static_cast<Real>(x - opts_.lr * opts_.weight_decay * x - opts_.lr * update);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    if (p.has_grad())
      for (Real g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g = static_cast<Real>(g * s);
  }
  return norm;
}

MultiStepSchedule::MultiStepSchedule(double base, std::vector<Index> milestones, double factor)
    : base_(base), milestones_(std::move(milestones)), factor_(factor) {
  std::sort(milestones_.begin(), milestones_.end());
}

double MultiStepSchedule::lr(Index epoch) const {
  double lr = base_;
  for (Index m : milestones_)
    if (epoch >= m) lr *= factor_;
  return lr;
}

}  // namespace mdnx
