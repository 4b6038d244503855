#include "mdnx/core/tensor.hpp"

#include <sstream>

namespace mdnx {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Real(0)); }

Tensor Tensor::full(Shape shape, Real value) {
  validate_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> data) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value) { return from_data({1}, {value}); }

Index Tensor::size(Index axis) const {
  const Index r = dim();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto t = detach();
  t.impl_->requires_grad = impl_->requires_grad && impl_->is_leaf;
  return t;
}

// ---------------------------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::shared_ptr<TensorImpl> output, BackwardFn fn) {
  output->requires_grad = true;
  output->is_leaf = false;
  nodes_.push_back(Node{std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (consumed_) throw ContractError("backward called twice without resetting the tape");
  if (!loss.requires_grad() || loss.is_leaf()) {
    throw ContractError("loss is not connected to the tape");
  }
  consumed_ = true;
  loss.impl()->grad_buffer()[0] += Real(1);
  last_visits_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->fn();
    ++last_visits_;
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

}  // namespace mdnx
