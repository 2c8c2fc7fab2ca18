#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "disco/errors.hpp"
#include "disco/experiment.hpp"
#include "doctest.h"

using namespace disco;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "dataset": {
    "kind": "blobs",
    "blobs": {"n_classes": 3, "per_class": 20, "image_size": 8, "noise": 0.2, "seed": 1},
    "test_per_class": 10,
    "val_per_class": 5
  },
  "cross_domain": {
    "dataset": {"kind": "blobs", "blobs": {"n_classes": 3, "per_class": 10, "image_size": 8, "noise": 0.4, "seed": 2}},
    "label_map": [[0, 0], [2, 1]]
  },
  "model": {"arch": "micro_resnet_nofc", "widths": [4, 3], "blocks": [1, 1]},
  "train": {
    "epochs": 3,
    "batch_size": 10,
    "optimizer": {"kind": "adam", "lr": 0.01},
    "loss": {"lambda1": 0.5, "lambda2": 0.5, "gate_epoch": 1}
  },
  "seeds": [4],
  "out": "unused"
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("disco_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig tiny(const std::string& name) {
  auto cfg = parse_experiment_config(kTinyConfig);
  cfg.out = fresh_dir(name);
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config parsing and the resolved snapshot") {
  const auto cfg = parse_experiment_config(kTinyConfig);
  CHECK(cfg.dataset.blobs.n_classes == 3);
  CHECK(cfg.model.arch == Architecture::kMicroResnetNoFc);
  CHECK(cfg.train.loss.gate_epoch == 1);
  CHECK(cfg.train.schedule.kind == ScheduleKind::kPlateau);
  REQUIRE(cfg.cross_domain.has_value());
  CHECK(cfg.cross_domain->label_map.size() == 2);
  const std::string resolved = to_json(cfg);
  CHECK(to_json(parse_experiment_config(resolved)) == resolved);

  auto defaults = parse_experiment_config("{}");
  CHECK(defaults.seeds == std::vector<std::uint64_t>{0});
  CHECK(defaults.train.loss.lambda1 == 0.5);
  CHECK(defaults.train.loss.gate_epoch == 10);
}

TEST_CASE("config errors name every offending key") {
  const std::string bad = R"({
    "dataset": {"kind": "mnist", "colour": true},
    "model": {"arch": "vgg", "widths": [4, -1]},
    "train": {"epochs": 0, "batch_size": "big", "loss": {"lambda1": -1}},
    "seeds": [],
    "extra": 1
  })";
  try {
    parse_experiment_config(bad);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"dataset.kind", "dataset.colour", "model.arch", "model.widths[1]",
                            "train.epochs", "train.batch_size", "train.loss", "seeds", "extra"}) {
      CAPTURE(key);
      CHECK(msg.find(std::string(key) + ":") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"dataset": {"kind": "cifar100"}})"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), DataError);
}

TEST_CASE("overrides replace file values") {
  auto cfg = parse_experiment_config(kTinyConfig);
  apply_overrides(cfg, {.seeds = std::vector<std::uint64_t>{1, 2}, .lambda1 = 0.0, .gate_epoch = 5, .out = "x"});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.train.loss.lambda1 == 0.0);
  CHECK(cfg.train.loss.lambda2 == 0.5);
  CHECK(cfg.train.loss.gate_epoch == 5);
  CHECK(cfg.out == "x");
  CHECK_THROWS_AS(apply_overrides(cfg, {.lambda2 = -1.0}), ConfigError);
}

TEST_CASE("aggregation") {
  CHECK(sample_stddev({0.5}) == 0.0);
  CHECK(sample_stddev({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
  CHECK(format_mean_std(0.975, 0.012) == "97.50±1.20");
  CHECK(format_mean_std(0.5, 0.0) == "50.00±0.00");
  std::vector<TrialResult> trials(3);
  trials[0].in_domain_accuracy = 0.9;
  trials[1].in_domain_accuracy = 0.7;
  trials[2].in_domain_accuracy = 0.8;
  const auto s = summarize("x", trials);
  CHECK(s.mean == doctest::Approx(0.8));
  CHECK(s.stddev == doctest::Approx(0.1));
  CHECK(s.cross_accuracies.empty());
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("single-seed experiment writes its outputs") {
  const auto cfg = tiny("single");
  const auto report = run_experiment(cfg);
  CHECK(report.baseline.accuracies.size() == 1);
  CHECK(report.ours.stddev == 0.0);
  CHECK(report.ours.cross_accuracies.size() == 1);
  for (const char* f : {"config.resolved.json", "summary.csv", "summary.txt"}) CHECK(fs::exists(cfg.out / f));
  const std::string table = slurp(cfg.out / "summary.txt");
  CHECK(table.find("| baseline |") != std::string::npos);
  CHECK(table.find("±0.00") != std::string::npos);
  for (const auto& t : report.ours_trials) {
    for (const char* f : {"config.json", "metrics.csv", "result.json", "model.ckpt"})
      CHECK(fs::exists(t.run_dir / f));
    // The per-run snapshot reproduces the run's weights.
    const auto snap = parse_experiment_config(slurp(t.run_dir / "config.json"));
    CHECK(snap.train.loss.lambda1 == 0.5);
    CHECK(snap.seeds == std::vector<std::uint64_t>{4});
  }
  const auto reparsed = parse_experiment_config(slurp(cfg.out / "config.resolved.json"));
  CHECK(to_json(reparsed) == slurp(cfg.out / "config.resolved.json"));
  fs::remove_all(cfg.out);
}

TEST_CASE("five seeds aggregate into five entries") {
  auto cfg = tiny("five");
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.train.epochs = 1;
  const auto report = run_experiment(cfg);
  for (const auto* s : {&report.baseline, &report.ours}) {
    REQUIRE(s->accuracies.size() == 5);
    const auto [lo, hi] = std::minmax_element(s->accuracies.begin(), s->accuracies.end());
    CHECK(s->mean >= *lo);
    CHECK(s->mean <= *hi);
  }
  fs::remove_all(cfg.out);
}

TEST_CASE("ablation reuses the experiment's runs") {
  const auto cfg = tiny("ablate");
  const auto report = run_experiment(cfg);
  const auto rows = run_ablation(cfg);
  REQUIRE(rows.size() == 4);
  CHECK((!rows[0].gini && !rows[0].kl));
  CHECK((rows[1].gini && !rows[1].kl));
  CHECK((!rows[2].gini && rows[2].kl));
  CHECK((rows[3].gini && rows[3].kl));
  CHECK(rows[0].trials[0].cached);
  CHECK(rows[3].trials[0].cached);
  CHECK_FALSE(rows[1].trials[0].cached);
  CHECK(rows[0].trials[0].run_dir == report.baseline_trials[0].run_dir);
  CHECK(rows[3].trials[0].run_dir == report.ours_trials[0].run_dir);
  CHECK(rows[3].summary.mean == report.ours.mean);
  CHECK(rows[3].trials[0].records.size() == 3);

  const std::string table = slurp(cfg.out / "ablation.txt");
  CHECK(table.find("| L_* | L_Gini | L_KL | Accuracy") == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  fs::remove_all(cfg.out);
}

TEST_CASE("zero weights make every ablation row the same run") {
  auto cfg = tiny("ablate_zero");
  apply_overrides(cfg, {.lambda1 = 0.0, .lambda2 = 0.0});
  const auto rows = run_ablation(cfg);
  for (const auto& row : rows) {
    CHECK(row.trials[0].run_dir == rows[0].trials[0].run_dir);
    CHECK(row.summary.mean == rows[0].summary.mean);
    CHECK(row.summary.cross_mean == rows[0].summary.cross_mean);
  }
  fs::remove_all(cfg.out);
}

TEST_CASE("rerunning without the cache reproduces every file") {
  auto cfg = tiny("rerun");
  run_experiment(cfg);
  const auto first = run_experiment(cfg, {.use_cache = false});
  const auto key_dir = first.ours_trials[0].run_dir;
  const std::string ckpt = slurp(key_dir / "model.ckpt"), result = slurp(key_dir / "result.json");
  const std::string summary = slurp(cfg.out / "summary.csv");
  const auto second = run_experiment(cfg, {.use_cache = false});
  CHECK_FALSE(second.ours_trials[0].cached);
  CHECK(slurp(key_dir / "model.ckpt") == ckpt);
  CHECK(slurp(key_dir / "result.json") == result);
  CHECK(slurp(cfg.out / "summary.csv") == summary);
  std::ifstream csv(key_dir / "metrics.csv");
  const auto records = read_metrics_csv(csv);
  REQUIRE(records.size() == first.ours_trials[0].records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    CHECK(same_metrics(records[i], first.ours_trials[0].records[i]));
  fs::remove_all(cfg.out);
}

TEST_CASE("checkpoint evaluation") {
  auto cfg = tiny("evaluate");
  const auto report = run_experiment(cfg);
  const auto ckpt = report.ours_trials[0].run_dir / "model.ckpt";
  const auto data = load_data(cfg);
  const LabelMap identity = LabelMap::identity(3);
  CHECK(evaluate_checkpoint(ckpt, data.val) == evaluate_checkpoint(ckpt, data.val, &identity));
  CHECK(evaluate_checkpoint(ckpt, data.val) == report.ours_trials[0].val_accuracy);
  CHECK(evaluate_checkpoint(ckpt, *data.cross, &cfg.cross_domain->label_map) ==
        *report.ours_trials[0].cross_accuracy);
  const Dataset wrong = gen_blob_images({.n_classes = 3, .per_class = 2, .image_size = 16});
  CHECK_THROWS_AS(evaluate_checkpoint(ckpt, wrong), ConfigError);
  fs::remove_all(cfg.out);
}

TEST_CASE("a diverging run aborts and leaves a diagnostic") {
  auto cfg = tiny("abort");
  cfg.train.optimizer.lr = 1e300;
  const auto data = load_data(cfg);
  CHECK_THROWS_AS(run_trial(cfg, data, 0.5, 0.5, 0), NumericalAbort);
  bool found = false;
  for (const auto& entry : fs::recursive_directory_iterator(cfg.out))
    found = found || entry.path().filename() == "abort.json";
  CHECK(found);
  fs::remove_all(cfg.out);
}

TEST_CASE("metrics CSV round trip") {
  std::vector<EpochRecord> records{{0, 1.25, 0.5, 1e-9, 1.25, 0.5, 0.25, 0.001, 0.125},
                                   {1, 0.1, 0.2, 0.3, 0.35, 1.0, 1.0, 0.0005, 2.0}};
  std::stringstream buf;
  write_metrics_csv(buf, records);
  const auto back = read_metrics_csv(buf);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(same_metrics(back[i], records[i]));
    CHECK(back[i].seconds == records[i].seconds);
  }
  std::stringstream bad("nope\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), DataError);
}

TEST_CASE("gradcheck suite") {
  const auto r = run_gradcheck_suite(20, 0);
  CHECK(r.instances == 20);
  CHECK(r.gini_max_error < 1e-4);
  CHECK(r.kl_max_error < 1e-4);
}
