#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "disco/errors.hpp"
#include "disco/gradcheck.hpp"
#include "disco/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace disco;
using disco::testing::random_tensor;

namespace {

ModelSpec small_spec(Architecture arch, std::vector<std::size_t> widths,
                     std::size_t n_classes) {
  ModelSpec spec;
  spec.arch = arch;
  spec.widths = std::move(widths);
  spec.blocks.assign(spec.widths.size(), 1);
  spec.n_classes = n_classes;
  spec.in_channels = 3;
  spec.in_height = spec.in_width = 8;
  return spec;
}

}  // namespace

TEST_CASE("build is deterministic in the seed") {
  const auto spec = small_spec(Architecture::kMicroResnetFc, {4, 8}, 5);
  Model a = Model::build(spec, 42), b = Model::build(spec, 42), c = Model::build(spec, 43);
  REQUIRE(a.parameters().size() == b.parameters().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    auto pa = a.parameters()[i].data(), pb = b.parameters()[i].data(), pc = c.parameters()[i].data();
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
    any_diff = any_diff || !std::equal(pa.begin(), pa.end(), pc.begin());
  }
  CHECK(any_diff);
}

TEST_CASE("micro_resnet_nofc ends in n_classes filters") {
  auto spec = small_spec(Architecture::kMicroResnetNoFc, {8, 16, 10}, 10);
  Model model = Model::build(spec, 1);
  const auto& names = model.parameter_names();
  std::size_t last_conv = 0;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].ends_with("conv2.weight")) last_conv = i;
  CHECK(model.parameters()[last_conv].dim(0) == 10);
  const auto out = model.forward(Tensor({2, 3, 8, 8}), Mode::kEval);
  CHECK(out.tapped_activations.dim(1) == 10);
  CHECK(out.logits.shape() == Shape{2, 10});

  spec.widths.back() = 12;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(Model::build(spec, 1), ConfigError);
}

TEST_CASE("removing the head reduces the parameter count") {
  const Model fc = Model::build(small_spec(Architecture::kMicroResnetFc, {8, 16, 32}, 10), 0);
  const Model nofc = Model::build(small_spec(Architecture::kMicroResnetNoFc, {8, 16, 10}, 10), 0);
  CHECK(nofc.parameter_count() < fc.parameter_count());
}

TEST_CASE("forward output structure") {
  Model nofc = Model::build(small_spec(Architecture::kMicroResnetNoFc, {4, 3}, 3), 7);
  const auto out = nofc.forward(Tensor({2, 3, 8, 8}), Mode::kTrain);
  CHECK(out.tapped_activations.same_storage(out.head_input));
  CHECK(out.tapped_activations.shape() == Shape{2, 3, 4, 4});

  Model fc = Model::build(small_spec(Architecture::kMicroResnetFc, {4, 6}, 3), 7);
  const auto fout = fc.forward(Tensor({2, 3, 8, 8}), Mode::kTrain);
  CHECK(fout.tapped_activations.dim(1) == 6);
  CHECK(fout.logits.shape() == Shape{2, 3});

  auto probe_spec = small_spec(Architecture::kMlpProbe, {5}, 2);
  Model probe = Model::build(probe_spec, 7);
  const auto pout = probe.forward(Tensor({3, 3, 8, 8}, 0.5), Mode::kEval);
  CHECK(pout.logits.shape() == Shape{3, 2});
  CHECK(pout.tapped_activations.shape() == Shape{3, 5, 1, 1});

  CHECK_THROWS_AS(nofc.forward(Tensor({2, 3, 6, 8}), Mode::kEval), DimensionError);
  CHECK_THROWS_AS(nofc.forward(Tensor({2, 1, 8, 8}), Mode::kEval), DimensionError);
}

TEST_CASE("zero input gives finite logits") {
  Model model = Model::build(small_spec(Architecture::kMicroResnetNoFc, {4, 8, 5}, 5), 3);
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    const auto out = model.forward(Tensor({4, 3, 8, 8}, 0.0), mode);
    for (double v : out.logits.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("eval mode is batch-size independent and pure") {
  std::mt19937_64 rng(5);
  Model model = Model::build(small_spec(Architecture::kMicroResnetFc, {4, 8}, 4), 3);
  // Move the running statistics away from their initial values.
  for (int i = 0; i < 3; ++i) model.forward(random_tensor({6, 3, 8, 8}, rng), Mode::kTrain);

  const Tensor one = random_tensor({1, 3, 8, 8}, rng);
  Tensor eight({8, 3, 8, 8});
  for (std::size_t s = 0; s < 8; ++s)
    std::copy(one.data().begin(), one.data().end(), eight.data().begin() + static_cast<long>(s * one.numel()));
  const auto single = model.forward(one, Mode::kEval).logits;
  const auto batch = model.forward(eight, Mode::kEval).logits;
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t j = 0; j < 4; ++j) CHECK(batch.data()[s * 4 + j] == single.data()[j]);
  const auto again = model.forward(one, Mode::kEval).logits;
  CHECK(std::equal(again.data().begin(), again.data().end(), single.data().begin()));
}

TEST_CASE("cross-entropy gradient w.r.t. every parameter matches finite differences") {
  std::mt19937_64 rng(9);
  ModelSpec spec = small_spec(Architecture::kMicroResnetNoFc, {4, 3}, 3);
  spec.in_height = spec.in_width = 6;
  Model model = Model::build(spec, 11);
  const Tensor x = random_tensor({4, 3, 6, 6}, rng);
  const LabelMatrix y({0, 1, 2, 1}, 3);
  auto& params = model.parameters();
  const auto res = finite_diff_check(
      [&](Tape* tape) {
        return softmax_cross_entropy(model.forward(x, Mode::kTrain, tape).logits, y, tape);
      },
      params, 1e-6);
  INFO("worst tensor " << model.parameter_names()[res.worst_tensor] << " index "
                       << res.worst_index << " analytic " << res.analytic << " numeric "
                       << res.numeric);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(4);
  Model model = Model::build(small_spec(Architecture::kMicroResnetFc, {4, 8}, 4), 21);
  model.forward(random_tensor({5, 3, 8, 8}, rng), Mode::kTrain);
  model.input_stats = ChannelStats{{0.1, 0.2, 0.3}, {1.5, 2.5, 3.5}};
  const auto path = std::filesystem::temp_directory_path() / "disco_test_model.ckpt";
  model.save(path);

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "DSC1");

  Model loaded = Model::load(path);
  CHECK(serialize_spec(loaded.spec()) == serialize_spec(model.spec()));
  CHECK(loaded.input_stats.mean == model.input_stats.mean);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    auto a = model.parameters()[i].data(), b = loaded.parameters()[i].data();
    for (std::size_t k = 0; k < a.size(); ++k)
      CHECK(b[k] == static_cast<double>(static_cast<float>(a[k])));
  }
  CHECK(loaded.norms()[0].running_mean[0] ==
        static_cast<double>(static_cast<float>(model.norms()[0].running_mean[0])));

  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE and more bytes";
  }
  CHECK_THROWS_AS(Model::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("snapshot and restore") {
  std::mt19937_64 rng(4);
  Model model = Model::build(small_spec(Architecture::kMicroResnetFc, {4}, 2), 2);
  const auto state = model.snapshot();
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const auto before = model.forward(x, Mode::kEval).logits.clone();
  for (auto& p : model.parameters())
    for (double& v : p.data()) v += 0.25;
  model.forward(x, Mode::kTrain);
  model.restore(state);
  const auto after = model.forward(x, Mode::kEval).logits;
  CHECK(std::equal(after.data().begin(), after.data().end(), before.data().begin()));
}
