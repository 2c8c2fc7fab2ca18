#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disco/labels.hpp"
#include "disco/tensor.hpp"

namespace disco {

/// Images stored as N x c x h x w bytes plus integer class ids.
struct Dataset {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<std::uint8_t> images;
  std::vector<int> labels;
  // Kept only so CIFAR records re-serialize byte-exactly.
  std::vector<std::uint8_t> coarse_labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return class_names.size(); }
  std::size_t image_bytes() const { return channels * height * width; }
  std::span<const std::uint8_t> image(std::size_t i) const;

  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
  // Throws DataError if sizes disagree or a label is out of range.
  void validate() const;
};

inline constexpr std::size_t kCifarImageBytes = 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordBytes = 2 + kCifarImageBytes;
inline constexpr std::size_t kCifar100Classes = 100;

// Records of 1 coarse-label byte, 1 fine-label byte and 3072 pixel bytes
// (three 32x32 channel planes). Fine labels become class ids.
Dataset parse_cifar100_binary(std::span<const std::uint8_t> bytes);
Dataset load_cifar100_binary(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_cifar100_binary(const Dataset& ds);
void save_cifar100_binary(const Dataset& ds, const std::filesystem::path& path);

struct Split {
  Dataset train;
  Dataset val;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

// Stratified: `val_per_class` samples of every class go to validation.
Split make_splits(const Dataset& ds, std::size_t val_per_class,
                  std::uint64_t seed);

// 40 validation images per 500 training images, scaled to `per_class`.
std::size_t default_val_per_class(std::size_t per_class);

struct BlobOptions {
  std::size_t n_classes = 4;
  std::size_t per_class = 200;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  // Standard deviation of additive pixel noise on the [0,1] intensity scale.
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Synthetic classification set: class k is a Gaussian bump centred at the
/// k-th of n points evenly spaced on a circle around the image centre.
Dataset gen_blob_images(const BlobOptions& opts);

/// Explicit (source class -> target class) pairs. Targets must be exactly
/// 0..size()-1 so the remapped dataset has dense class ids.
struct LabelMap {
  std::vector<std::pair<int, int>> pairs;

  std::size_t size() const { return pairs.size(); }
  std::optional<int> target_of(int source) const;
  std::optional<int> source_of(int target) const;
  void validate() const;
  static LabelMap identity(std::size_t n_classes);
};

// One "source target" pair per line; '#' starts a comment.
LabelMap parse_label_map(std::string_view text);
LabelMap load_label_map(const std::filesystem::path& path);

Dataset remap_for_cross_domain(const Dataset& ds, const LabelMap& map);

/// Per-channel mean and standard deviation of pixels scaled to [0,1].
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static ChannelStats fit(const Dataset& ds);
  static ChannelStats identity(std::size_t channels);
};

// Scaled to [0,1] and standardized; m x c x h x w.
Tensor images_to_tensor(const Dataset& ds, std::span<const std::size_t> indices,
                        const ChannelStats& stats);

struct Batch {
  Tensor images;
  LabelMatrix labels;
  std::vector<std::size_t> indices;
};

struct BatchOptions {
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  int epoch = 0;
  bool shuffle = true;
  // Random horizontal flip and 4-pixel pad-and-crop.
  bool augment = false;
};

/// Deterministic pass over a dataset. The order (and augmentation) for a
/// given epoch depends only on (seed, epoch); the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, ChannelStats stats, BatchOptions opts);

  bool next(Batch& out);
  std::size_t batch_count() const;

 private:
  const Dataset* ds_;
  ChannelStats stats_;
  BatchOptions opts_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t augment_state_;
};

}  // namespace disco
