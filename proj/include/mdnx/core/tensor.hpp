#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdnx {

#ifdef MDNX_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Index = std::int64_t;
using Shape = std::vector<Index>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

std::string shape_str(const Shape& shape);
Index shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool is_leaf = true;

  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor from_data(Shape shape, std::vector<Real> data);
  static Tensor scalar(Real value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  Index dim() const { return static_cast<Index>(impl_->shape.size()); }
  Index size(Index axis) const;
  Index numel() const { return static_cast<Index>(impl_->data.size()); }

  std::span<const Real> data() const { return impl_->data; }
  std::span<Real> mutable_data() { return impl_->data; }
  Real item() const;
  Real operator[](Index i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  std::span<Real> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Define-by-run record of the operations executed since the last reset.
/// One tape per thread; nodes are appended in execution order, which is
/// already a topological order of the graph.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  static Tape& current();

  void record(std::shared_ptr<TensorImpl> output, BackwardFn fn);
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_visit_count() const { return last_visits_; }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::size_t last_visits_ = 0;
};

/// Backpropagates a scalar loss through the current thread's tape.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace mdnx
