#include "disco/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "disco/errors.hpp"

namespace disco {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : storage_(std::make_shared<TensorStorage>()) {}

Tensor::Tensor(Shape shape, double fill)
    : storage_(std::make_shared<TensorStorage>()) {
  storage_->data.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : storage_(std::make_shared<TensorStorage>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape()));
  }
  return storage_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape()));
  }
  return storage_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  if (!on) storage_->grad.clear();
  return *this;
}

std::span<double> Tensor::grad() {
  if (!has_grad()) throw UsageError("tensor has no gradient buffer");
  return storage_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient buffer");
  return storage_->grad;
}

std::span<double> Tensor::ensure_grad() const {
  if (storage_->grad.size() != storage_->data.size()) {
    storage_->grad.assign(storage_->data.size(), 0.0);
  }
  return storage_->grad;
}

void Tensor::zero_grad() {
  if (storage_->requires_grad) {
    storage_->grad.assign(storage_->data.size(), 0.0);
  }
}

Tensor Tensor::clone() const {
  return Tensor(storage_->shape, storage_->data);
}

void Tape::record(std::function<void()> backward_rule) {
  if (replayed_) throw UsageError("recording onto a replayed tape; reset() first");
  rules_.push_back(std::move(backward_rule));
}

void Tape::backward(const Tensor& loss) {
  if (replayed_) {
    throw UsageError("backward() called twice on the same tape without reset()");
  }
  if (loss.numel() != 1 || loss.rank() > 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that is not tracked");
  }
  Tensor seed = loss;
  auto g = seed.ensure_grad();
  g[0] += 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  replayed_ = true;
}

void Tape::reset() {
  rules_.clear();
  replayed_ = false;
}

bool tracking(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

}  // namespace disco
