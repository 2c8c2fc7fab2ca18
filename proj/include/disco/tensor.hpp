#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace disco {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  // Empty until the tensor takes part in a backward pass.
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Dense row-major tensor with shared ownership of its storage.
///
/// Copies of a Tensor alias the same storage; use clone() for a deep copy.
/// Gradients are only materialised for tensors with requires_grad set.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return storage_->data.size(); }

  std::span<double> data() { return storage_->data; }
  std::span<const double> data() const { return storage_->data; }
  double item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const;
  // Allocates a zero gradient if none exists yet. Gradient buffers are
  // accumulation state, so this is available through const handles.
  std::span<double> ensure_grad() const;
  void zero_grad();

  // Deep copy of shape and values; the copy does not track gradients.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const {
    return storage_ == other.storage_;
  }
  const std::shared_ptr<TensorStorage>& storage() const { return storage_; }

 private:
  std::shared_ptr<TensorStorage> storage_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Backward rules run in reverse recording order, so gradient accumulation
/// happens in a single fixed order on every replay.
class Tape {
 public:
  void record(std::function<void()> backward_rule);

  // Seeds d(loss)/d(loss) = 1 and replays every rule once. A second call
  // without reset() is a UsageError.
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return rules_.size(); }
  bool replayed() const { return replayed_; }

 private:
  std::vector<std::function<void()>> rules_;
  bool replayed_ = false;
};

// True when an op should be recorded: a tape is present and some input
// participates in differentiation.
bool tracking(const Tape* tape, std::initializer_list<const Tensor*> inputs);

}  // namespace disco
