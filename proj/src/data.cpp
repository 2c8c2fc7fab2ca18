#include "disco/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "disco/errors.hpp"
#include "disco/random.hpp"

namespace disco {

std::span<const std::uint8_t> Dataset::image(std::size_t i) const {
  return std::span<const std::uint8_t>(images).subspan(i * image_bytes(),
                                                      image_bytes());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.class_names = class_names;
  out.images.reserve(indices.size() * image_bytes());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto img = image(i);
    out.images.insert(out.images.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
    if (!coarse_labels.empty()) out.coarse_labels.push_back(coarse_labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

void Dataset::validate() const {
  if (images.size() != labels.size() * image_bytes()) {
    throw DataError("dataset holds " + std::to_string(images.size()) +
                    " image bytes for " + std::to_string(labels.size()) +
                    " labels");
  }
  if (!coarse_labels.empty() && coarse_labels.size() != labels.size()) {
    throw DataError("coarse label count does not match sample count");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes()) {
      throw DataError("label " + std::to_string(l) + " outside [0," +
                      std::to_string(n_classes()) + ")");
    }
  }
}

Dataset parse_cifar100_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("CIFAR-100 binary size " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.images.resize(n * kCifarImageBytes);
  ds.labels.resize(n);
  ds.coarse_labels.resize(n);
  for (std::size_t i = 0; i < kCifar100Classes; ++i)
    ds.class_names.push_back("class_" + std::to_string(i));
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[1] >= kCifar100Classes) {
      throw DataError("record " + std::to_string(r) + " has fine label " +
                      std::to_string(rec[1]));
    }
    ds.coarse_labels[r] = rec[0];
    ds.labels[r] = rec[1];
    std::copy(rec + 2, rec + kCifarRecordBytes,
              ds.images.begin() + static_cast<std::ptrdiff_t>(r * kCifarImageBytes));
  }
  return ds;
}

Dataset load_cifar100_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar100_binary(bytes);
}

std::vector<std::uint8_t> serialize_cifar100_binary(const Dataset& ds) {
  if (ds.image_bytes() != kCifarImageBytes) {
    throw DataError("CIFAR records need 3x32x32 images");
  }
  ds.validate();
  std::vector<std::uint8_t> out(ds.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::uint8_t* rec = out.data() + r * kCifarRecordBytes;
    rec[0] = ds.coarse_labels.empty() ? 0 : ds.coarse_labels[r];
    rec[1] = static_cast<std::uint8_t>(ds.labels[r]);
    auto img = ds.image(r);
    std::copy(img.begin(), img.end(), rec + 2);
  }
  return out;
}

void save_cifar100_binary(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = serialize_cifar100_binary(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Split make_splits(const Dataset& ds, std::size_t val_per_class,
                  std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.n_classes());
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::mt19937_64 rng(derive_seed(seed, 0x5711));
  Split split;
  std::vector<bool> is_val(ds.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < val_per_class) {
      throw ConfigError("class " + std::to_string(c) + " has " +
                        std::to_string(members.size()) + " samples, fewer than " +
                        std::to_string(val_per_class) + " requested for validation");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < val_per_class; ++k) is_val[members[k]] = true;
  }
  for (std::size_t i = 0; i < ds.size(); ++i)
    (is_val[i] ? split.val_indices : split.train_indices).push_back(i);
  split.train = ds.subset(split.train_indices);
  split.val = ds.subset(split.val_indices);
  return split;
}

std::size_t default_val_per_class(std::size_t per_class) {
  return (per_class * 40 + 250) / 500;
}

Dataset gen_blob_images(const BlobOptions& opts) {
  if (opts.n_classes < 2) throw ConfigError("blob dataset needs at least 2 classes");
  if (opts.image_size == 0 || opts.channels == 0) {
    throw ConfigError("blob images need positive size and channel count");
  }
  Dataset ds;
  ds.channels = opts.channels;
  ds.height = ds.width = opts.image_size;
  for (std::size_t k = 0; k < opts.n_classes; ++k)
    ds.class_names.push_back("blob_" + std::to_string(k));

  const double size = static_cast<double>(opts.image_size);
  const double centre = (size - 1.0) / 2.0;
  const double radius = 0.3 * size;
  const double spread = size / 8.0;
  std::mt19937_64 rng(derive_seed(opts.seed, 0xb10b));
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = opts.n_classes * opts.per_class;
  ds.images.resize(n * ds.image_bytes());
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % opts.n_classes;
    ds.labels[i] = static_cast<int>(k);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(opts.n_classes);
    const double cy = centre + radius * std::sin(angle);
    const double cx = centre + radius * std::cos(angle);
    std::uint8_t* img = ds.images.data() + i * ds.image_bytes();
    for (std::size_t c = 0; c < ds.channels; ++c)
      for (std::size_t y = 0; y < ds.height; ++y)
        for (std::size_t x = 0; x < ds.width; ++x) {
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          double v = 0.15 + 0.7 * std::exp(-(dy * dy + dx * dx) / (2.0 * spread * spread));
          if (opts.noise > 0.0) v += opts.noise * noise(rng);
          v = std::clamp(v, 0.0, 1.0);
          img[(c * ds.height + y) * ds.width + x] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
  }
  return ds;
}

std::optional<int> LabelMap::target_of(int source) const {
  for (const auto& [s, t] : pairs)
    if (s == source) return t;
  return std::nullopt;
}

std::optional<int> LabelMap::source_of(int target) const {
  for (const auto& [s, t] : pairs)
    if (t == target) return s;
  return std::nullopt;
}

void LabelMap::validate() const {
  std::set<int> sources, targets;
  for (const auto& [s, t] : pairs) {
    if (s < 0 || t < 0) throw ConfigError("label map ids must be non-negative");
    if (!sources.insert(s).second) {
      throw ConfigError("label map lists source " + std::to_string(s) + " twice");
    }
    if (!targets.insert(t).second) {
      throw ConfigError("label map is not injective: target " +
                        std::to_string(t) + " repeated");
    }
    if (static_cast<std::size_t>(t) >= pairs.size()) {
      throw ConfigError("label map target " + std::to_string(t) +
                        " outside [0," + std::to_string(pairs.size()) + ")");
    }
  }
}

LabelMap LabelMap::identity(std::size_t n_classes) {
  LabelMap map;
  for (std::size_t i = 0; i < n_classes; ++i)
    map.pairs.emplace_back(static_cast<int>(i), static_cast<int>(i));
  return map;
}

LabelMap parse_label_map(std::string_view text) {
  LabelMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    int source = 0, target = 0;
    std::string extra;
    if (!(fields >> source)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError("label map line " + std::to_string(lineno) + ": expected two integers");
    }
    if (!(fields >> target) || (fields >> extra)) {
      throw ConfigError("label map line " + std::to_string(lineno) + ": expected two integers");
    }
    map.pairs.emplace_back(source, target);
  }
  map.validate();
  return map;
}

LabelMap load_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label map " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_label_map(buf.str());
}

Dataset remap_for_cross_domain(const Dataset& ds, const LabelMap& map) {
  map.validate();
  for (const auto& [s, t] : map.pairs) {
    if (static_cast<std::size_t>(s) >= ds.n_classes()) {
      throw ConfigError("label map source " + std::to_string(s) +
                        " is not a class of the dataset");
    }
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (map.target_of(ds.labels[i])) keep.push_back(i);
  if (keep.empty()) throw ConfigError("label map selects no samples");

  Dataset out = ds.subset(keep);
  for (auto& l : out.labels) l = *map.target_of(l);
  out.class_names.assign(map.size(), "");
  for (const auto& [s, t] : map.pairs)
    out.class_names[static_cast<std::size_t>(t)] = ds.class_names[static_cast<std::size_t>(s)];
  return out;
}

ChannelStats ChannelStats::fit(const Dataset& ds) {
  ChannelStats stats;
  stats.mean.assign(ds.channels, 0.0);
  stats.stddev.assign(ds.channels, 1.0);
  const std::size_t plane = ds.height * ds.width;
  const double count = static_cast<double>(ds.size() * plane);
  if (count == 0.0) return stats;
  for (std::size_t c = 0; c < ds.channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* p = ds.images.data() + i * ds.image_bytes() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) acc += p[k] / 255.0;
    }
    const double mu = acc / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* p = ds.images.data() + i * ds.image_bytes() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double d = p[k] / 255.0 - mu;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / count);
    stats.mean[c] = mu;
    stats.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

ChannelStats ChannelStats::identity(std::size_t channels) {
  return ChannelStats{std::vector<double>(channels, 0.0),
                      std::vector<double>(channels, 1.0)};
}

Tensor images_to_tensor(const Dataset& ds, std::span<const std::size_t> indices,
                        const ChannelStats& stats) {
  if (stats.mean.size() != ds.channels || stats.stddev.size() != ds.channels) {
    throw DimensionError("channel statistics do not match dataset channels");
  }
  Tensor out({indices.size(), ds.channels, ds.height, ds.width});
  auto v = out.data();
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const std::uint8_t* img = ds.images.data() + indices[s] * ds.image_bytes();
    for (std::size_t c = 0; c < ds.channels; ++c) {
      const double mu = stats.mean[c], inv = 1.0 / stats.stddev[c];
      for (std::size_t k = 0; k < plane; ++k) {
        v[(s * ds.channels + c) * plane + k] = (img[c * plane + k] / 255.0 - mu) * inv;
      }
    }
  }
  return out;
}

BatchIterator::BatchIterator(const Dataset& ds, ChannelStats stats,
                             BatchOptions opts)
    : ds_(&ds), stats_(std::move(stats)), opts_(opts) {
  if (opts_.batch_size == 0) throw ConfigError("batch size must be >= 1");
  order_.resize(ds.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  const auto epoch = static_cast<std::uint64_t>(opts_.epoch);
  if (opts_.shuffle) {
    std::mt19937_64 rng(derive_seed(opts_.seed, 2 * epoch));
    std::shuffle(order_.begin(), order_.end(), rng);
  }
  augment_state_ = derive_seed(opts_.seed, 2 * epoch + 1);
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + opts_.batch_size - 1) / opts_.batch_size;
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + opts_.batch_size);
  out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;

  out.images = images_to_tensor(*ds_, out.indices, stats_);
  std::vector<int> ids;
  ids.reserve(out.indices.size());
  for (auto i : out.indices) ids.push_back(ds_->labels[i]);
  out.labels = LabelMatrix(std::move(ids), ds_->n_classes());

  if (opts_.augment) {
    constexpr long kPad = 4;
    std::mt19937_64 rng(augment_state_);
    augment_state_ = mix_seed(augment_state_);
    std::uniform_int_distribution<long> shift(-kPad, kPad);
    std::bernoulli_distribution flip(0.5);
    const std::size_t c = ds_->channels, h = ds_->height, w = ds_->width;
    std::vector<double> src(c * h * w);
    auto v = out.images.data();
    for (std::size_t s = 0; s < out.indices.size(); ++s) {
      double* img = v.data() + s * c * h * w;
      std::copy(img, img + c * h * w, src.begin());
      const bool mirrored = flip(rng);
      const long dy = shift(rng), dx = shift(rng);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const long sy = static_cast<long>(y) + dy;
            long sx = static_cast<long>(x) + dx;
            double value = 0.0;
            if (sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w)) {
              if (mirrored) sx = static_cast<long>(w) - 1 - sx;
              value = src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
            img[(ch * h + y) * w + x] = value;
          }
    }
  }
  return true;
}

}  // namespace disco
