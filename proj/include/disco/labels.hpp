#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

/// One-hot target matrix Y (m x n) for a batch.
///
/// Stored as class ids; the dense form is produced on demand. Construction
/// validates that every row is one-hot, so downstream code may rely on each
/// row summing to exactly 1 and the total summing to m.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::vector<int> class_ids, std::size_t n_classes);

  // Validates a dense m x n 0/1 matrix; throws LabelError otherwise.
  static LabelMatrix from_dense(const Tensor& y);

  std::size_t samples() const { return ids_.size(); }
  std::size_t classes() const { return n_classes_; }
  std::span<const int> ids() const { return ids_; }
  int id(std::size_t row) const { return ids_[row]; }

  Tensor dense() const;
  std::vector<std::size_t> class_counts() const;

 private:
  std::vector<int> ids_;
  std::size_t n_classes_ = 0;
};

}  // namespace disco
