#include "disco/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "disco/ops.hpp"

namespace disco {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (eval_batch_size < 1) throw ConfigError("train: eval_batch_size must be >= 1");
  if (precision != "f64") {
    throw ConfigError("train: precision '" + precision + "' is not supported (only f64)");
  }
  optimizer.validate();
  schedule.validate();
  loss.validate();
}

bool same_metrics(const EpochRecord& a, const EpochRecord& b) {
  return a.epoch == b.epoch && a.l_star == b.l_star && a.l_gini == b.l_gini &&
         a.l_kl == b.l_kl && a.l_total == b.l_total &&
         a.train_accuracy == b.train_accuracy && a.val_accuracy == b.val_accuracy &&
         a.learning_rate == b.learning_rate;
}

NumericalAbort::NumericalAbort(int epoch_, std::size_t step_, std::string term_,
                               const std::string& detail)
    : NumericalError("numerical abort at epoch " + std::to_string(epoch_) +
                     ", step " + std::to_string(step_) + " in " + term_ + ": " +
                     detail),
      epoch(epoch_),
      step(step_),
      term(std::move(term_)) {}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string metrics_csv_header() {
  return "epoch,l_star,l_gini,l_kl,l_total,train_accuracy,val_accuracy,"
         "learning_rate,seconds\n";
}

std::string metrics_csv_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch);
  for (double v : {r.l_star, r.l_gini, r.l_kl, r.l_total, r.train_accuracy,
                   r.val_accuracy, r.learning_rate, r.seconds}) {
    row += ',';
    row += format_double(v);
  }
  row += '\n';
  return row;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& records) {
  out << metrics_csv_header();
  for (const auto& r : records) out << metrics_csv_row(r);
}

double evaluate_accuracy(Model& model, const Dataset& ds, const LabelMap* map,
                         std::size_t batch_size) {
  if (ds.size() == 0) throw ConfigError("evaluation dataset is empty");
  const std::size_t n_model = model.spec().n_classes;
  if (map == nullptr && ds.n_classes() != n_model) {
    throw ConfigError("dataset has " + std::to_string(ds.n_classes()) +
                      " classes but the model predicts " + std::to_string(n_model) +
                      "; a label map is required");
  }
  if (map != nullptr) {
    map->validate();
    for (const auto& [s, t] : map->pairs) {
      if (static_cast<std::size_t>(s) >= n_model) {
        throw ConfigError("label map source " + std::to_string(s) +
                          " is not a model class");
      }
    }
  }
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Tensor x = images_to_tensor(ds, idx, model.input_stats);
    const Tensor logits = model.forward(x, Mode::kEval).logits;
    auto v = logits.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      int predicted;
      if (map == nullptr) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n_model; ++j)
          if (v[r * n_model + j] > v[r * n_model + best]) best = j;
        predicted = static_cast<int>(best);
      } else {
        // Pairs are scanned in target order so ties resolve to the lowest target.
        int best_target = -1;
        double best_logit = 0.0;
        for (std::size_t t = 0; t < map->size(); ++t) {
          const int s = *map->source_of(static_cast<int>(t));
          const double z = v[r * n_model + static_cast<std::size_t>(s)];
          if (best_target < 0 || z > best_logit) {
            best_target = static_cast<int>(t);
            best_logit = z;
          }
        }
        predicted = best_target;
      }
      if (predicted == ds.labels[idx[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

TrainResult run_training(Model& model, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("training set is empty");
  if (val.size() == 0) throw ConfigError("validation set is empty");
  if (train.n_classes() != model.spec().n_classes) {
    throw ConfigError("training set has " + std::to_string(train.n_classes()) +
                      " classes, model has " + std::to_string(model.spec().n_classes));
  }
  model.input_stats = ChannelStats::fit(train);

  Optimizer optimizer(model.parameters(), cfg.optimizer);
  LrSchedule schedule(cfg.schedule, cfg.optimizer.lr);
  TrainResult result;
  result.best_val_accuracy = -1.0;
  ModelState best_state = model.snapshot();

  if (hooks.metrics_csv) *hooks.metrics_csv << metrics_csv_header();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = optimizer.learning_rate();
    const bool gated = cfg.loss.gated_in(epoch);

    BatchIterator batches(train, model.input_stats,
                          {cfg.batch_size, cfg.seed, epoch, true, cfg.augment});
    Batch batch;
    std::size_t step = 0, seen = 0, correct = 0;
    double sum_star = 0.0, sum_gini = 0.0, sum_kl = 0.0, sum_total = 0.0;
    while (batches.next(batch)) {
      const std::size_t m = batch.labels.samples();
      Tape tape;
      optimizer.zero_grad();
      std::string term = "forward";
      try {
        const ForwardOutput out = model.forward(batch.images, Mode::kTrain, &tape);
        term = "cross_entropy";
        const Tensor ce = softmax_cross_entropy(out.logits, batch.labels, &tape);
        term = "gini_kl";
        // A batch whose tapped activations are all clamped to zero has no
        // feature histogram; it contributes no auxiliary loss.
        Tensor gini = Tensor::scalar(0.0), kl = Tensor::scalar(0.0);
        try {
          DiscoTerms aux = disco_loss(out.tapped_activations, batch.labels, cfg.loss,
                                      gated ? &tape : nullptr);
          gini = aux.gini;
          kl = aux.kl;
        } catch (const DegenerateInputError&) {
        }
        term = "total";
        const Tensor total = total_loss(ce, gini, kl, cfg.loss, epoch, &tape);
        ensure_finite(total, "total_loss");
        term = "backward";
        tape.backward(total);
        for (const auto& p : model.parameters()) {
          if (!p.has_grad()) continue;
          for (double g : p.grad())
            if (!std::isfinite(g)) throw NumericalError("non-finite parameter gradient");
        }
        optimizer.step();

        const double w = static_cast<double>(m);
        sum_star += ce.item() * w;
        sum_gini += gini.item() * w;
        sum_kl += kl.item() * w;
        sum_total += total.item() * w;
        const auto predicted = argmax_rows(out.logits);
        for (std::size_t i = 0; i < m; ++i)
          if (predicted[i] == batch.labels.id(i)) ++correct;
      } catch (const NumericalError& e) {
        throw NumericalAbort(epoch, step, term, e.what());
      }
      seen += m;
      ++step;
    }
    const double n = static_cast<double>(seen);
    rec.l_star = sum_star / n;
    rec.l_gini = sum_gini / n;
    rec.l_kl = sum_kl / n;
    rec.l_total = sum_total / n;
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.val_accuracy = evaluate_accuracy(model, val, nullptr, cfg.eval_batch_size);

    if (rec.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = rec.val_accuracy;
      result.best_epoch = epoch;
      best_state = model.snapshot();
    }
    optimizer.set_learning_rate(schedule.update(epoch, rec.val_accuracy));

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.records.push_back(rec);
    if (hooks.metrics_csv) {
      *hooks.metrics_csv << metrics_csv_row(rec);
      hooks.metrics_csv->flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  model.restore(best_state);
  return result;
}

}  // namespace disco
