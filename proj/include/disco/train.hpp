#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "disco/data.hpp"
#include "disco/errors.hpp"
#include "disco/losses.hpp"
#include "disco/model.hpp"
#include "disco/optim.hpp"

namespace disco {

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 50;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  LossConfig loss;
  std::uint64_t seed = 0;
  // Only 64-bit arithmetic is implemented.
  std::string precision = "f64";
  bool augment = false;
  std::size_t eval_batch_size = 256;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double l_star = 0.0;
  double l_gini = 0.0;
  double l_kl = 0.0;
  double l_total = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

// Field-by-field equality of everything except wall-clock time.
bool same_metrics(const EpochRecord& a, const EpochRecord& b);

// Thrown when a step produces a non-finite value.
class NumericalAbort : public NumericalError {
 public:
  NumericalAbort(int epoch, std::size_t step, std::string term,
                 const std::string& detail);
  int epoch;
  std::size_t step;
  std::string term;  // "forward", "cross_entropy", "gini_kl", "total", "backward"
};

struct TrainHooks {
  // Receives the CSV header first, then one row per epoch as it completes.
  std::ostream* metrics_csv = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Trains `model` in place and leaves it at its best-validation-accuracy
/// epoch. Input statistics are fitted on `train` and stored in the model.
///
/// Each step: forward in training mode, cross-entropy on the logits, the
/// Gini and KL terms on the tapped activations, then the gated total loss.
/// Before the gate epoch the auxiliary terms are still computed for the
/// records but are not recorded on the tape, so they contribute no gradient.
TrainResult run_training(Model& model, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Top-1 accuracy in eval mode. With a label map, the argmax is restricted
/// to the logits of the map's source classes and the winning source class
/// is translated to its target before comparison with the dataset label.
double evaluate_accuracy(Model& model, const Dataset& ds,
                         const LabelMap* map = nullptr,
                         std::size_t batch_size = 256);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& r);
void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& records);

// Locale-independent shortest round-trip form of a double.
std::string format_double(double v);

}  // namespace disco
