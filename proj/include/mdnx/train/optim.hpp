#pragma once

#include <vector>

#include "mdnx/core/tensor.hpp"

namespace mdnx {

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with bias correction and decoupled weight decay:
/// p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps).
/// Parameters without an accumulated gradient take a zero gradient.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions opts);

  void step();
  void zero_grad();
  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  Index steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions opts_;
  Index t_ = 0;
};

/// Rescales gradients in place so that their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

/// Learning rate base * factor^(number of milestones <= epoch).
class MultiStepSchedule {
 public:
  MultiStepSchedule(double base, std::vector<Index> milestones, double factor = 0.1);
  double lr(Index epoch) const;

 private:
  double base_;
  std::vector<Index> milestones_;
  double factor_;
};

}  // namespace mdnx
