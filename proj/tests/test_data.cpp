#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "disco/data.hpp"
#include "disco/errors.hpp"
#include "disco/ops.hpp"
#include "disco/optim.hpp"
#include "doctest.h"

using namespace disco;

namespace {

std::vector<std::uint8_t> crafted_record(std::uint8_t coarse, std::uint8_t fine) {
  std::vector<std::uint8_t> rec(kCifarRecordBytes);
  rec[0] = coarse;
  rec[1] = fine;
  for (std::size_t k = 0; k < kCifarImageBytes; ++k) rec[2 + k] = static_cast<std::uint8_t>(k % 256);
  return rec;
}

// 100 classes with `per_class` records each; pixels vary by index.
Dataset synthetic_cifar(std::size_t per_class) {
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = 0; i < per_class * kCifar100Classes; ++i) {
    auto rec = crafted_record(static_cast<std::uint8_t>(i % 20), static_cast<std::uint8_t>(i % 100));
    rec[2] = static_cast<std::uint8_t>(i * 7);
    bytes.insert(bytes.end(), rec.begin(), rec.end());
  }
  return parse_cifar100_binary(bytes);
}

}  // namespace

TEST_CASE("a crafted CIFAR record is loaded exactly") {
  const auto rec = crafted_record(3, 7);
  const auto path = std::filesystem::temp_directory_path() / "disco_one_record.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  const Dataset ds = load_cifar100_binary(path);
  REQUIRE(ds.size() == 1);
  CHECK(ds.labels[0] == 7);
  CHECK(ds.n_classes() == 100);
  const auto img = ds.image(0);
  for (std::size_t k = 0; k < kCifarImageBytes; ++k) CHECK(img[k] == k % 256);
  CHECK(serialize_cifar100_binary(ds) == rec);
  std::filesystem::remove(path);
}

TEST_CASE("CIFAR format errors") {
  auto rec = crafted_record(0, 7);
  auto truncated = rec;
  truncated.pop_back();
  CHECK_THROWS_AS(parse_cifar100_binary(truncated), DataError);
  rec[1] = 100;
  CHECK_THROWS_AS(parse_cifar100_binary(rec), DataError);
  CHECK_THROWS_AS(load_cifar100_binary("/nonexistent/disco.bin"), DataError);
}

TEST_CASE("re-serializing a loaded file reproduces its bytes") {
  std::vector<std::uint8_t> bytes;
  for (int i = 0; i < 25; ++i) {
    auto rec = crafted_record(static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(i * 3 % 100));
    for (std::size_t k = 2; k < rec.size(); k += 17) rec[k] = static_cast<std::uint8_t>(rec[k] ^ i);
    bytes.insert(bytes.end(), rec.begin(), rec.end());
  }
  CHECK(serialize_cifar100_binary(parse_cifar100_binary(bytes)) == bytes);
}

TEST_CASE("stratified splits") {
  const Dataset ds = synthetic_cifar(50);
  SUBCASE("40 per class over 100 classes") {
    const auto split = make_splits(ds, 40, 1);
    CHECK(split.val.size() == 4000);
    CHECK(split.train.size() == 1000);
    for (auto c : split.val.class_counts()) CHECK(c == 40);
    std::set<std::size_t> all(split.train_indices.begin(), split.train_indices.end());
    all.insert(split.val_indices.begin(), split.val_indices.end());
    CHECK(all.size() == ds.size());
  }
  SUBCASE("empty validation") {
    const auto split = make_splits(ds, 0, 1);
    CHECK(split.val.size() == 0);
    CHECK(split.train.images == ds.images);
    CHECK(split.train.labels == ds.labels);
  }
  SUBCASE("determinism") {
    const auto a = make_splits(ds, 10, 5), b = make_splits(ds, 10, 5), c = make_splits(ds, 10, 6);
    CHECK(a.val_indices == b.val_indices);
    CHECK(a.train_indices == b.train_indices);
    CHECK(a.val_indices != c.val_indices);
  }
  CHECK_THROWS_AS(make_splits(ds, 51, 0), ConfigError);
  CHECK(default_val_per_class(500) == 40);
  CHECK(default_val_per_class(200) == 16);
}

TEST_CASE("blob generator") {
  SUBCASE("noiseless classes are constant") {
    const Dataset ds = gen_blob_images({.n_classes = 3, .per_class = 5, .image_size = 8, .noise = 0.0, .seed = 1});
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto a = ds.image(i), b = ds.image(j);
        CHECK((ds.labels[i] == ds.labels[j]) == std::equal(a.begin(), a.end(), b.begin()));
      }
  }
  SUBCASE("counts") {
    const Dataset ds = gen_blob_images({.n_classes = 4, .per_class = 50, .image_size = 16});
    CHECK(ds.size() == 200);
    for (auto c : ds.class_counts()) CHECK(c == 50);
  }
  SUBCASE("seeded") {
    const BlobOptions opts{.n_classes = 2, .per_class = 4, .image_size = 8, .noise = 0.2, .seed = 3};
    CHECK(gen_blob_images(opts).images == gen_blob_images(opts).images);
    auto other = opts;
    other.seed = 4;
    CHECK(gen_blob_images(opts).images != gen_blob_images(other).images);
  }
  CHECK_THROWS_AS(gen_blob_images({.n_classes = 1}), ConfigError);
}

TEST_CASE("two blob classes are linearly separable under pooled features") {
  const Dataset ds = gen_blob_images({.n_classes = 2, .per_class = 100, .image_size = 16, .noise = 0.05, .seed = 9});
  const ChannelStats stats = ChannelStats::fit(ds);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const Tensor features = grid_avg_pool(images_to_tensor(ds, all, stats), 4);
  const LabelMatrix y(ds.labels, 2);

  Tensor w({features.dim(1), 2}), b({2});
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  std::vector<Tensor> params{w, b};
  Optimizer opt(params, {.kind = OptimizerKind::kAdam, .lr = 0.05});
  double accuracy = 0.0;
  for (int it = 0; it < 200 && accuracy < 1.0; ++it) {
    Tape tape;
    opt.zero_grad();
    const Tensor logits = add_bias(matmul(features, w, &tape), b, &tape);
    tape.backward(softmax_cross_entropy(logits, y, &tape));
    opt.step();
    const auto pred = argmax_rows(add_bias(matmul(features, w), b));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i];
    accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  }
  CHECK(accuracy == 1.0);
}

TEST_CASE("label maps") {
  const auto map = parse_label_map("# header\n3 0\n  5\t1  # trailing\n\n7 2\n");
  CHECK(map.size() == 3);
  CHECK(map.target_of(5) == 1);
  CHECK(map.source_of(2) == 7);
  CHECK_FALSE(map.target_of(4).has_value());
  CHECK_THROWS_AS(parse_label_map("1 0\n2 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_label_map("1 0\n1 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_label_map("1 5\n"), ConfigError);
  CHECK_THROWS_AS(parse_label_map("1\n"), ConfigError);
  CHECK_THROWS_AS(parse_label_map("1 0 2\n"), ConfigError);
}

TEST_CASE("cross-domain remapping") {
  const Dataset ds = gen_blob_images({.n_classes = 20, .per_class = 3, .image_size = 8, .seed = 2});
  SUBCASE("identity") {
    const Dataset out = remap_for_cross_domain(ds, LabelMap::identity(20));
    CHECK(out.images == ds.images);
    CHECK(out.labels == ds.labels);
    CHECK(out.class_names == ds.class_names);
  }
  SUBCASE("twelve classes") {
    LabelMap map;
    for (int k = 0; k < 12; ++k) map.pairs.emplace_back(19 - k, k);
    const Dataset out = remap_for_cross_domain(ds, map);
    CHECK(out.n_classes() == 12);
    CHECK(out.size() == 36);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.labels[i] < 12);
    CHECK(out.class_names[0] == ds.class_names[19]);
  }
  SUBCASE("single class") {
    const Dataset out = remap_for_cross_domain(ds, LabelMap{{{4, 0}}});
    CHECK(out.n_classes() == 1);
    CHECK(out.size() == 3);
  }
  CHECK_THROWS_AS(remap_for_cross_domain(ds, LabelMap{{{25, 0}}}), ConfigError);
  Dataset empty_class = ds.subset(std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(remap_for_cross_domain(empty_class, LabelMap{{{5, 0}}}), ConfigError);
}

TEST_CASE("batch iterator") {
  const Dataset ds = gen_blob_images({.n_classes = 3, .per_class = 7, .image_size = 8, .noise = 0.3, .seed = 5});
  const ChannelStats stats = ChannelStats::fit(ds);

  SUBCASE("one batch of everything") {
    BatchIterator it(ds, stats, {.batch_size = ds.size(), .seed = 1});
    Batch batch;
    REQUIRE(it.next(batch));
    CHECK(batch.images.dim(0) == ds.size());
    std::set<std::size_t> seen(batch.indices.begin(), batch.indices.end());
    CHECK(seen.size() == ds.size());
    CHECK_FALSE(it.next(batch));
  }
  SUBCASE("partial final batch and determinism") {
    auto collect = [&](std::uint64_t seed, int epoch) {
      BatchIterator it(ds, stats, {.batch_size = 4, .seed = seed, .epoch = epoch, .augment = true});
      CHECK(it.batch_count() == 6);
      std::vector<std::size_t> sizes, order;
      std::vector<double> pixels;
      Batch b;
      while (it.next(b)) {
        sizes.push_back(b.indices.size());
        order.insert(order.end(), b.indices.begin(), b.indices.end());
        pixels.insert(pixels.end(), b.images.data().begin(), b.images.data().end());
      }
      CHECK(sizes.back() == 1);
      return std::pair{order, pixels};
    };
    const auto a = collect(3, 2), b = collect(3, 2), c = collect(3, 3);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first != c.first);
  }
  SUBCASE("standardized statistics") {
    BatchIterator it(ds, stats, {.batch_size = ds.size(), .shuffle = false});
    Batch batch;
    REQUIRE(it.next(batch));
    const auto x = batch.images.data();
    const std::size_t plane = ds.height * ds.width;
    for (std::size_t ch = 0; ch < ds.channels; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = x[(i * ds.channels + ch) * plane + p];
          s += v;
          s2 += v * v;
        }
      const double n = static_cast<double>(ds.size() * plane);
      const double mean = s / n;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(std::sqrt(s2 / n - mean * mean) - 1.0) < 1e-6);
    }
  }
}
