#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "disco/data.hpp"
#include "disco/model.hpp"
#include "disco/train.hpp"

namespace disco {

inline constexpr const char* kCodeVersion = "disco-1";

/// Where samples come from. `kind` is "blobs" or "cifar100".
struct DatasetConfig {
  std::string kind = "blobs";
  BlobOptions blobs;
  // Blobs only: size of the separately generated test set.
  std::size_t test_per_class = 50;
  // cifar100 only.
  std::filesystem::path path;
  std::filesystem::path test_path;
  // Optional subset of class ids; relabelled 0..k-1 in the listed order.
  std::vector<int> classes;
  std::optional<std::size_t> val_per_class;
  std::uint64_t split_seed = 0;
};

struct CrossDomainConfig {
  DatasetConfig data;
  // Pairs from model class id to cross-domain class id.
  LabelMap label_map;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::optional<CrossDomainConfig> cross_domain;
  // n_classes and the input shape are filled in from the dataset.
  ModelSpec model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  bool include_gini = true;
  bool include_kl = true;
  std::filesystem::path out = "runs";

  // Lambdas after the ablation flags are applied.
  double effective_lambda1() const { return include_gini ? train.loss.lambda1 : 0.0; }
  double effective_lambda2() const { return include_kl ? train.loss.lambda2 : 0.0; }
};

/// Parses a JSON experiment config. Every problem found is reported in one
/// ConfigError, one "key.path: message" line each.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Fully resolved form, parseable by parse_experiment_config.
std::string to_json(const ExperimentConfig& cfg);

struct Overrides {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<int> gate_epoch;
  std::optional<std::filesystem::path> out;
};
void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

struct LoadedData {
  Dataset train;
  Dataset val;
  std::optional<Dataset> test;
  // Already relabelled into cross-domain ids.
  std::optional<Dataset> cross;
};

// Also sets cfg.model's class count and input shape from the data.
LoadedData load_data(ExperimentConfig& cfg);

struct RunOptions {
  bool use_cache = true;
  std::ostream* log = nullptr;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::filesystem::path run_dir;
  bool cached = false;
  int best_epoch = 0;
  double val_accuracy = 0.0;
  // Test accuracy when a test set exists, otherwise validation accuracy.
  double in_domain_accuracy = 0.0;
  std::optional<double> cross_accuracy;
  std::vector<EpochRecord> records;
};

// Canonical description of everything that determines a training run.
std::string run_key(const ExperimentConfig& cfg, double lambda1, double lambda2,
                    std::uint64_t seed);
std::uint64_t fnv1a64(std::string_view bytes);

/// Trains one seed with the given weights, or reuses a finished run whose
/// key matches. Accuracies are always recomputed from the checkpoint.
TrialResult run_trial(const ExperimentConfig& cfg, const LoadedData& data,
                      double lambda1, double lambda2, std::uint64_t seed,
                      const RunOptions& opts = {});

struct TrialSummary {
  std::string label;
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> cross_accuracies;
  double cross_mean = 0.0;
  double cross_stddev = 0.0;
};

// Sample (n - 1) standard deviation; 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);
TrialSummary summarize(std::string label, const std::vector<TrialResult>& trials);
// Accuracy fractions as percentages, "mean±std" with two decimals.
std::string format_mean_std(double mean, double stddev);

struct ExperimentReport {
  TrialSummary baseline;
  TrialSummary ours;
  std::vector<TrialResult> baseline_trials;
  std::vector<TrialResult> ours_trials;
};

/// Baseline (cross-entropy only) and the configured loss over every seed.
/// Writes config.resolved.json, summary.csv and summary.txt into cfg.out.
ExperimentReport run_experiment(ExperimentConfig cfg, const RunOptions& opts = {});

struct AblationRow {
  bool gini = false;
  bool kl = false;
  TrialSummary summary;
  std::vector<TrialResult> trials;
};

/// The four loss-term subsets with identical seeds. Writes
/// config.resolved.json, ablation.csv and ablation.txt into cfg.out.
std::vector<AblationRow> run_ablation(ExperimentConfig cfg, const RunOptions& opts = {});

std::string format_experiment_table(const ExperimentReport& report);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

std::vector<EpochRecord> read_metrics_csv(std::istream& in);

/// Top-1 accuracy of a saved model. With a map, `ds` must already carry
/// the map's target ids.
double evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& ds,
                           const LabelMap* map = nullptr);

struct GradcheckSuiteResult {
  double gini_max_error = 0.0;
  double kl_max_error = 0.0;
  std::size_t instances = 0;
  double seconds = 0.0;
};

// Finite-difference checks of the Gini and KL terms with respect to the
// activations on random instances (m=4, c=3, n=3, h=w=2).
GradcheckSuiteResult run_gradcheck_suite(std::size_t instances, std::uint64_t seed);

}  // namespace disco
