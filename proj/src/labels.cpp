#include "disco/labels.hpp"

#include <string>

#include "disco/errors.hpp"

namespace disco {

LabelMatrix::LabelMatrix(std::vector<int> class_ids, std::size_t n_classes)
    : ids_(std::move(class_ids)), n_classes_(n_classes) {
  if (n_classes_ == 0) throw LabelError("label matrix needs at least one class");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] < 0 || static_cast<std::size_t>(ids_[i]) >= n_classes_) {
      throw LabelError("label " + std::to_string(ids_[i]) + " at row " +
                       std::to_string(i) + " outside [0," +
                       std::to_string(n_classes_) + ")");
    }
  }
}

LabelMatrix LabelMatrix::from_dense(const Tensor& y) {
  if (y.rank() != 2) {
    throw DimensionError("label matrix must be 2-D, got " + shape_str(y.shape()));
  }
  const std::size_t m = y.dim(0), n = y.dim(1);
  auto v = y.data();
  std::vector<int> ids(m);
  for (std::size_t i = 0; i < m; ++i) {
    int hot = -1;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = v[i * n + j];
      if (e == 1.0 && hot < 0) {
        hot = static_cast<int>(j);
      } else if (e != 0.0) {
        throw LabelError("row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (hot < 0) throw LabelError("row " + std::to_string(i) + " is not one-hot");
    ids[i] = hot;
  }
  return LabelMatrix(std::move(ids), n);
}

Tensor LabelMatrix::dense() const {
  Tensor y({ids_.size(), n_classes_});
  auto v = y.data();
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    v[i * n_classes_ + static_cast<std::size_t>(ids_[i])] = 1.0;
  }
  return y;
}

std::vector<std::size_t> LabelMatrix::class_counts() const {
  std::vector<std::size_t> counts(n_classes_, 0);
  for (int id : ids_) ++counts[static_cast<std::size_t>(id)];
  return counts;
}

}  // namespace disco
