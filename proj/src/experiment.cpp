#include "disco/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "disco/errors.hpp"
#include "disco/gradcheck.hpp"
#include "disco/losses.hpp"
#include "disco/random.hpp"
#include "json.hpp"

namespace disco {

using nlohmann::json;

namespace {

std::string join_key(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) {
    errors.push_back(path + ": " + msg);
  }

  const json* object(const json& parent, const std::string& path, std::string_view key) {
    auto it = parent.find(key);
    if (it == parent.end() || it->is_null()) return nullptr;
    if (!it->is_object()) {
      fail(join_key(path, key), "expected an object");
      return nullptr;
    }
    return &*it;
  }

  void allow(const json& obj, const std::string& path,
             std::initializer_list<std::string_view> keys) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
        fail(join_key(path, it.key()), "unknown key");
    }
  }

  void number(const json& obj, const std::string& path, std::string_view key, double& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number()) return fail(join_key(path, key), "expected a number");
    out = it->get<double>();
  }

  void integer(const json& obj, const std::string& path, std::string_view key, int& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number_integer()) return fail(join_key(path, key), "expected an integer");
    out = it->get<int>();
  }

  template <class U>
  bool unsigned_value(const json& v, const std::string& where, U& out) {
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      out = static_cast<U>(v.get<std::uint64_t>());
      return true;
    }
    fail(where, "expected a non-negative integer");
    return false;
  }

  template <class U>
  void count(const json& obj, const std::string& path, std::string_view key, U& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    unsigned_value(*it, join_key(path, key), out);
  }

  void boolean(const json& obj, const std::string& path, std::string_view key, bool& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_boolean()) return fail(join_key(path, key), "expected true or false");
    out = it->get<bool>();
  }

  void string(const json& obj, const std::string& path, std::string_view key, std::string& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_string()) return fail(join_key(path, key), "expected a string");
    out = it->get<std::string>();
  }

  template <class T, class F>
  void list(const json& obj, const std::string& path, std::string_view key,
            std::vector<T>& out, F&& element) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string where = join_key(path, key);
    if (!it->is_array()) return fail(where, "expected a list");
    std::vector<T> values;
    for (std::size_t i = 0; i < it->size(); ++i) {
      T v{};
      if (!element((*it)[i], where + "[" + std::to_string(i) + "]", v)) return;
      values.push_back(v);
    }
    out = std::move(values);
  }

  template <class U>
  void count_list(const json& obj, const std::string& path, std::string_view key,
                  std::vector<U>& out) {
    list(obj, path, key, out,
         [this](const json& v, const std::string& where, U& x) { return unsigned_value(v, where, x); });
  }

  void int_list(const json& obj, const std::string& path, std::string_view key, std::vector<int>& out) {
    list(obj, path, key, out, [this](const json& v, const std::string& where, int& x) {
      if (!v.is_number_integer()) {
        fail(where, "expected an integer");
        return false;
      }
      x = v.get<int>();
      return true;
    });
  }

  // Runs a validator that throws ConfigError and records its message.
  template <class F>
  void check(const std::string& path, F&& validate) {
    try {
      validate();
    } catch (const ConfigError& e) {
      fail(path, e.what());
    }
  }
};

void read_dataset(Reader& r, const json& j, const std::string& path, DatasetConfig& d) {
  r.allow(j, path, {"kind", "blobs", "test_per_class", "path", "test_path", "classes",
                    "val_per_class", "split_seed"});
  r.string(j, path, "kind", d.kind);
  if (d.kind != "blobs" && d.kind != "cifar100")
    r.fail(join_key(path, "kind"), "expected \"blobs\" or \"cifar100\"");
  if (const json* b = r.object(j, path, "blobs")) {
    const std::string bp = join_key(path, "blobs");
    r.allow(*b, bp, {"n_classes", "per_class", "image_size", "channels", "noise", "seed"});
    r.count(*b, bp, "n_classes", d.blobs.n_classes);
    r.count(*b, bp, "per_class", d.blobs.per_class);
    r.count(*b, bp, "image_size", d.blobs.image_size);
    r.count(*b, bp, "channels", d.blobs.channels);
    r.number(*b, bp, "noise", d.blobs.noise);
    r.count(*b, bp, "seed", d.blobs.seed);
    if (d.blobs.n_classes < 2) r.fail(join_key(bp, "n_classes"), "must be >= 2");
    if (d.blobs.per_class < 1) r.fail(join_key(bp, "per_class"), "must be >= 1");
    if (d.blobs.image_size < 1) r.fail(join_key(bp, "image_size"), "must be >= 1");
    if (d.blobs.channels < 1) r.fail(join_key(bp, "channels"), "must be >= 1");
    if (!(d.blobs.noise >= 0.0)) r.fail(join_key(bp, "noise"), "must be >= 0");
  }
  r.count(j, path, "test_per_class", d.test_per_class);
  std::string p = d.path.string(), tp = d.test_path.string();
  r.string(j, path, "path", p);
  r.string(j, path, "test_path", tp);
  d.path = p;
  d.test_path = tp;
  if (d.kind == "cifar100" && d.path.empty()) r.fail(join_key(path, "path"), "required for cifar100");
  r.int_list(j, path, "classes", d.classes);
  if (auto it = j.find("val_per_class"); it != j.end() && !it->is_null()) {
    std::size_t v = 0;
    if (r.unsigned_value(*it, join_key(path, "val_per_class"), v)) d.val_per_class = v;
  }
  r.count(j, path, "split_seed", d.split_seed);
}

void read_label_map(Reader& r, const json& j, const std::string& path, LabelMap& map) {
  if (j.is_string()) {
    try {
      map = load_label_map(j.get<std::string>());
    } catch (const ConfigError& e) {
      r.fail(path, e.what());
    }
    return;
  }
  if (!j.is_array()) return r.fail(path, "expected a file path or a list of [source, target] pairs");
  LabelMap parsed;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& pair = j[i];
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer()) {
      return r.fail(path + "[" + std::to_string(i) + "]", "expected [source, target]");
    }
    parsed.pairs.emplace_back(pair[0].get<int>(), pair[1].get<int>());
  }
  r.check(path, [&] { parsed.validate(); });
  map = std::move(parsed);
}

json dataset_json(const DatasetConfig& d) {
  json j = {{"kind", d.kind}, {"classes", d.classes}, {"split_seed", d.split_seed}};
  j["val_per_class"] = d.val_per_class ? json(*d.val_per_class) : json(nullptr);
  if (d.kind == "blobs") {
    j["blobs"] = {{"n_classes", d.blobs.n_classes}, {"per_class", d.blobs.per_class},
                  {"image_size", d.blobs.image_size}, {"channels", d.blobs.channels},
                  {"noise", d.blobs.noise}, {"seed", d.blobs.seed}};
    j["test_per_class"] = d.test_per_class;
  } else {
    j["path"] = d.path.string();
    j["test_path"] = d.test_path.string();
  }
  return j;
}

json model_json(const ModelSpec& m) {
  return {{"arch", to_string(m.arch)}, {"widths", m.widths}, {"blocks", m.blocks}};
}

json train_json(const TrainConfig& t) {
  return {
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"eval_batch_size", t.eval_batch_size},
      {"augment", t.augment},
      {"precision", t.precision},
      {"optimizer",
       {{"kind", to_string(t.optimizer.kind)}, {"lr", t.optimizer.lr},
        {"momentum", t.optimizer.momentum}, {"weight_decay", t.optimizer.weight_decay},
        {"beta1", t.optimizer.beta1}, {"beta2", t.optimizer.beta2}, {"eps", t.optimizer.eps}}},
      {"schedule",
       {{"kind", to_string(t.schedule.kind)}, {"factor", t.schedule.factor},
        {"patience", t.schedule.patience}, {"threshold", t.schedule.threshold},
        {"milestones", t.schedule.milestones}}},
      {"loss",
       {{"lambda1", t.loss.lambda1}, {"lambda2", t.loss.lambda2},
        {"gate_epoch", t.loss.gate_epoch}, {"epsilon", t.loss.epsilon},
        {"kl_reverse", t.loss.kl_reverse}}},
  };
}

json label_map_json(const LabelMap& map) {
  json pairs = json::array();
  for (const auto& [s, t] : map.pairs) pairs.push_back({s, t});
  return pairs;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", fraction * 100.0);
  return buf;
}

std::string percent_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ";" : "") + percent(values[i]);
  return out;
}

// Zero weights make the gate and the loss options irrelevant; normalizing
// them lets every cross-entropy-only configuration share one cached run.
LossConfig effective_loss(LossConfig loss, double lambda1, double lambda2) {
  loss.lambda1 = lambda1;
  loss.lambda2 = lambda2;
  if (lambda1 == 0.0 && lambda2 == 0.0) {
    const LossConfig defaults;
    loss.gate_epoch = 0;
    loss.epsilon = defaults.epsilon;
    loss.kl_reverse = false;
  }
  return loss;
}

Dataset relabel_classes(const Dataset& ds, const std::vector<int>& classes) {
  if (classes.empty()) return ds;
  LabelMap map;
  for (std::size_t i = 0; i < classes.size(); ++i)
    map.pairs.emplace_back(classes[i], static_cast<int>(i));
  return remap_for_cross_domain(ds, map);
}

Dataset load_source(const DatasetConfig& d) {
  if (d.kind == "blobs") return relabel_classes(gen_blob_images(d.blobs), d.classes);
  return relabel_classes(load_cifar100_binary(d.path), d.classes);
}

std::optional<Dataset> load_test(const DatasetConfig& d) {
  if (d.kind == "blobs") {
    if (d.test_per_class == 0) return std::nullopt;
    BlobOptions opts = d.blobs;
    opts.per_class = d.test_per_class;
    opts.seed = derive_seed(d.blobs.seed, 0x7e57);
    return relabel_classes(gen_blob_images(opts), d.classes);
  }
  if (d.test_path.empty()) return std::nullopt;
  return relabel_classes(load_cifar100_binary(d.test_path), d.classes);
}

void log_line(const RunOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << '\n' << std::flush;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object at the top level");

  Reader r;
  ExperimentConfig cfg;
  r.allow(j, "", {"dataset", "cross_domain", "model", "train", "seeds", "ablation", "out"});

  if (const json* d = r.object(j, "", "dataset")) read_dataset(r, *d, "dataset", cfg.dataset);

  if (const json* c = r.object(j, "", "cross_domain")) {
    CrossDomainConfig cross;
    r.allow(*c, "cross_domain", {"dataset", "label_map"});
    if (const json* d = r.object(*c, "cross_domain", "dataset"))
      read_dataset(r, *d, "cross_domain.dataset", cross.data);
    else
      r.fail("cross_domain.dataset", "required");
    if (auto it = c->find("label_map"); it != c->end())
      read_label_map(r, *it, "cross_domain.label_map", cross.label_map);
    else
      r.fail("cross_domain.label_map", "required");
    cfg.cross_domain = std::move(cross);
  }

  if (const json* m = r.object(j, "", "model")) {
    r.allow(*m, "model", {"arch", "widths", "blocks"});
    std::string arch = to_string(cfg.model.arch);
    r.string(*m, "model", "arch", arch);
    r.check("model.arch", [&] { cfg.model.arch = parse_architecture(arch); });
    r.count_list(*m, "model", "widths", cfg.model.widths);
    r.count_list(*m, "model", "blocks", cfg.model.blocks);
  }

  if (const json* t = r.object(j, "", "train")) {
    TrainConfig& tc = cfg.train;
    r.allow(*t, "train", {"epochs", "batch_size", "eval_batch_size", "augment", "precision",
                          "optimizer", "schedule", "loss"});
    r.integer(*t, "train", "epochs", tc.epochs);
    r.count(*t, "train", "batch_size", tc.batch_size);
    r.count(*t, "train", "eval_batch_size", tc.eval_batch_size);
    r.boolean(*t, "train", "augment", tc.augment);
    r.string(*t, "train", "precision", tc.precision);
    if (const json* o = r.object(*t, "train", "optimizer")) {
      const std::string p = "train.optimizer";
      r.allow(*o, p, {"kind", "lr", "momentum", "weight_decay", "beta1", "beta2", "eps"});
      std::string kind = to_string(tc.optimizer.kind);
      r.string(*o, p, "kind", kind);
      r.check(p + ".kind", [&] { tc.optimizer.kind = parse_optimizer_kind(kind); });
      r.number(*o, p, "lr", tc.optimizer.lr);
      r.number(*o, p, "momentum", tc.optimizer.momentum);
      r.number(*o, p, "weight_decay", tc.optimizer.weight_decay);
      r.number(*o, p, "beta1", tc.optimizer.beta1);
      r.number(*o, p, "beta2", tc.optimizer.beta2);
      r.number(*o, p, "eps", tc.optimizer.eps);
      r.check(p, [&] { tc.optimizer.validate(); });
    }
    if (const json* s = r.object(*t, "train", "schedule")) {
      const std::string p = "train.schedule";
      r.allow(*s, p, {"kind", "factor", "patience", "threshold", "milestones"});
      std::string kind = to_string(tc.schedule.kind);
      r.string(*s, p, "kind", kind);
      r.check(p + ".kind", [&] { tc.schedule.kind = parse_schedule_kind(kind); });
      r.number(*s, p, "factor", tc.schedule.factor);
      r.integer(*s, p, "patience", tc.schedule.patience);
      r.number(*s, p, "threshold", tc.schedule.threshold);
      r.int_list(*s, p, "milestones", tc.schedule.milestones);
      r.check(p, [&] { tc.schedule.validate(); });
    }
    if (const json* l = r.object(*t, "train", "loss")) {
      const std::string p = "train.loss";
      r.allow(*l, p, {"lambda1", "lambda2", "gate_epoch", "epsilon", "kl_reverse"});
      r.number(*l, p, "lambda1", tc.loss.lambda1);
      r.number(*l, p, "lambda2", tc.loss.lambda2);
      r.integer(*l, p, "gate_epoch", tc.loss.gate_epoch);
      r.number(*l, p, "epsilon", tc.loss.epsilon);
      r.boolean(*l, p, "kl_reverse", tc.loss.kl_reverse);
      r.check(p, [&] { tc.loss.validate(); });
    }
    if (tc.epochs < 1) r.fail("train.epochs", "must be >= 1");
    if (tc.batch_size < 1) r.fail("train.batch_size", "must be >= 1");
    if (tc.eval_batch_size < 1) r.fail("train.eval_batch_size", "must be >= 1");
    if (tc.precision != "f64") r.fail("train.precision", "only \"f64\" is supported");
  }

  r.count_list(j, "", "seeds", cfg.seeds);
  if (cfg.seeds.empty()) r.fail("seeds", "needs at least one seed");

  if (const json* a = r.object(j, "", "ablation")) {
    r.allow(*a, "ablation", {"include_gini", "include_kl"});
    r.boolean(*a, "ablation", "include_gini", cfg.include_gini);
    r.boolean(*a, "ablation", "include_kl", cfg.include_kl);
  }

  std::string out = cfg.out.string();
  r.string(j, "", "out", out);
  if (out.empty()) r.fail("out", "must not be empty");
  cfg.out = out;

  if (!r.errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : r.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string to_json(const ExperimentConfig& cfg) {
  json j = {{"dataset", dataset_json(cfg.dataset)},
            {"model", model_json(cfg.model)},
            {"train", train_json(cfg.train)},
            {"seeds", cfg.seeds},
            {"ablation", {{"include_gini", cfg.include_gini}, {"include_kl", cfg.include_kl}}},
            {"out", cfg.out.string()}};
  if (cfg.cross_domain) {
    j["cross_domain"] = {{"dataset", dataset_json(cfg.cross_domain->data)},
                         {"label_map", label_map_json(cfg.cross_domain->label_map)}};
  }
  return j.dump(2) + "\n";
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seeds) {
    if (o.seeds->empty()) throw ConfigError("--seed needs at least one value");
    cfg.seeds = *o.seeds;
  }
  if (o.lambda1) cfg.train.loss.lambda1 = *o.lambda1;
  if (o.lambda2) cfg.train.loss.lambda2 = *o.lambda2;
  if (o.gate_epoch) cfg.train.loss.gate_epoch = *o.gate_epoch;
  if (o.out) cfg.out = *o.out;
  cfg.train.loss.validate();
}

LoadedData load_data(ExperimentConfig& cfg) {
  LoadedData data;
  const Dataset full = load_source(cfg.dataset);
  const auto counts = full.class_counts();
  const std::size_t smallest = counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end());
  const std::size_t vpc = cfg.dataset.val_per_class.value_or(default_val_per_class(smallest));
  Split split = make_splits(full, vpc, cfg.dataset.split_seed);
  data.train = std::move(split.train);
  data.val = std::move(split.val);
  data.test = load_test(cfg.dataset);

  cfg.model.n_classes = full.n_classes();
  cfg.model.in_channels = full.channels;
  cfg.model.in_height = full.height;
  cfg.model.in_width = full.width;
  cfg.model.validate();

  if (cfg.cross_domain) {
    const LabelMap& map = cfg.cross_domain->label_map;
    for (const auto& [s, t] : map.pairs) {
      if (s < 0 || static_cast<std::size_t>(s) >= cfg.model.n_classes)
        throw ConfigError("cross_domain.label_map: source " + std::to_string(s) +
                          " is not a model class");
    }
    const Dataset source = load_source(cfg.cross_domain->data);
    if (source.channels != full.channels || source.height != full.height ||
        source.width != full.width) {
      throw ConfigError("cross_domain.dataset: image shape differs from the training data");
    }
    data.cross = remap_for_cross_domain(source, map);
  }
  return data;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string run_key(const ExperimentConfig& cfg, double lambda1, double lambda2,
                    std::uint64_t seed) {
  TrainConfig train = cfg.train;
  train.loss = effective_loss(train.loss, lambda1, lambda2);
  const json j = {{"version", kCodeVersion},
                  {"dataset", dataset_json(cfg.dataset)},
                  {"model", model_json(cfg.model)},
                  {"train", train_json(train)},
                  {"seed", seed}};
  return j.dump();
}

TrialResult run_trial(const ExperimentConfig& cfg, const LoadedData& data, double lambda1,
                      double lambda2, std::uint64_t seed, const RunOptions& opts) {
  const std::string key = run_key(cfg, lambda1, lambda2, seed);
  TrialResult result;
  result.seed = seed;
  result.run_dir = cfg.out / "runs" / hex64(fnv1a64(key));
  const auto result_path = result.run_dir / "result.json";
  const auto ckpt_path = result.run_dir / "model.ckpt";
  const auto csv_path = result.run_dir / "metrics.csv";

  if (opts.use_cache && std::filesystem::exists(result_path) &&
      std::filesystem::exists(ckpt_path) && std::filesystem::exists(csv_path)) {
    try {
      std::ifstream in(result_path);
      const json j = json::parse(in);
      if (j.at("key").get<std::string>() == key) {
        result.cached = true;
        result.best_epoch = j.at("best_epoch").get<int>();
        std::ifstream csv(csv_path);
        result.records = read_metrics_csv(csv);
      }
    } catch (const std::exception&) {
      result.cached = false;
    }
  }

  if (!result.cached) {
    std::filesystem::create_directories(result.run_dir);
    std::filesystem::remove(result_path);
    ExperimentConfig snapshot = cfg;
    snapshot.train.loss = effective_loss(cfg.train.loss, lambda1, lambda2);
    snapshot.include_gini = snapshot.include_kl = true;
    snapshot.seeds = {seed};
    write_text(result.run_dir / "config.json", to_json(snapshot));

    TrainConfig train = snapshot.train;
    train.seed = derive_seed(seed, 2);
    Model model = Model::build(cfg.model, derive_seed(seed, 1));
    std::ofstream csv(csv_path, std::ios::binary);
    TrainHooks hooks;
    hooks.metrics_csv = &csv;
    hooks.on_epoch = [&](const EpochRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "  seed %llu epoch %d  l_star %.4f  l_gini %.4f  l_kl %.4f  val %.4f",
                    static_cast<unsigned long long>(seed), r.epoch, r.l_star, r.l_gini,
                    r.l_kl, r.val_accuracy);
      log_line(opts, buf);
    };
    TrainResult trained;
    try {
      trained = run_training(model, data.train, data.val, train, hooks);
    } catch (const NumericalAbort& e) {
      const json abort = {{"epoch", e.epoch}, {"step", e.step}, {"term", e.term},
                          {"detail", e.what()}};
      write_text(result.run_dir / "abort.json", abort.dump(2) + "\n");
      throw;
    }
    csv.close();
    model.save(ckpt_path);
    result.records = std::move(trained.records);
    result.best_epoch = trained.best_epoch;
  }

  // Evaluate the stored checkpoint so cached and fresh runs agree exactly.
  Model model = Model::load(ckpt_path);
  result.val_accuracy = evaluate_accuracy(model, data.val, nullptr, cfg.train.eval_batch_size);
  result.in_domain_accuracy =
      data.test ? evaluate_accuracy(model, *data.test, nullptr, cfg.train.eval_batch_size)
                : result.val_accuracy;
  if (data.cross) {
    result.cross_accuracy = evaluate_accuracy(model, *data.cross, &cfg.cross_domain->label_map,
                                              cfg.train.eval_batch_size);
  }

  if (!result.cached) {
    json j = {{"key", key},
              {"seed", seed},
              {"best_epoch", result.best_epoch},
              {"val_accuracy", result.val_accuracy},
              {"in_domain_accuracy", result.in_domain_accuracy}};
    if (result.cross_accuracy) j["cross_accuracy"] = *result.cross_accuracy;
    write_text(result_path, j.dump(2) + "\n");
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "run %s seed %llu lambda1 %g lambda2 %g: in-domain %.4f%s",
                result.run_dir.filename().string().c_str(),
                static_cast<unsigned long long>(seed), lambda1, lambda2,
                result.in_domain_accuracy, result.cached ? " (cached)" : "");
  log_line(opts, buf);
  return result;
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0));
}

TrialSummary summarize(std::string label, const std::vector<TrialResult>& trials) {
  TrialSummary s;
  s.label = std::move(label);
  bool all_cross = !trials.empty();
  for (const auto& t : trials) {
    s.accuracies.push_back(t.in_domain_accuracy);
    if (t.cross_accuracy)
      s.cross_accuracies.push_back(*t.cross_accuracy);
    else
      all_cross = false;
  }
  if (!all_cross) s.cross_accuracies.clear();
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  s.mean = mean(s.accuracies);
  s.stddev = sample_stddev(s.accuracies);
  s.cross_mean = mean(s.cross_accuracies);
  s.cross_stddev = sample_stddev(s.cross_accuracies);
  return s;
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean * 100.0, stddev * 100.0);
  return buf;
}

namespace {

// Counts code points so the ± sign and check marks align.
std::size_t display_length(const std::string& s) {
  std::size_t len = 0;
  for (unsigned char c : s) len += (c & 0xC0) != 0x80;
  return len;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_length(row[c]));
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "|";
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out += " " + rows[r][c] + std::string(widths[c] - display_length(rows[r][c]), ' ') + " |";
    out += "\n";
    if (r == 0) {
      out += "|";
      for (std::size_t w : widths) out += std::string(w + 2, '-') + "|";
      out += "\n";
    }
  }
  return out;
}

std::string summary_csv_rows(const std::string& prefix, const TrialSummary& s) {
  std::string out = prefix + "in_domain," + std::to_string(s.accuracies.size()) + "," +
                    percent(s.mean) + "," + percent(s.stddev) + "," + percent_list(s.accuracies) + "\n";
  if (!s.cross_accuracies.empty()) {
    out += prefix + "cross_domain," + std::to_string(s.cross_accuracies.size()) + "," +
           percent(s.cross_mean) + "," + percent(s.cross_stddev) + "," +
           percent_list(s.cross_accuracies) + "\n";
  }
  return out;
}

}  // namespace

std::string format_experiment_table(const ExperimentReport& report) {
  const bool cross = !report.baseline.cross_accuracies.empty();
  std::vector<std::vector<std::string>> rows{{"Method", "In-domain"}};
  if (cross) rows[0].push_back("Cross-domain");
  for (const TrialSummary* s : {&report.baseline, &report.ours}) {
    std::vector<std::string> row{s->label, format_mean_std(s->mean, s->stddev)};
    if (cross) row.push_back(format_mean_std(s->cross_mean, s->cross_stddev));
    rows.push_back(row);
  }
  return table(rows);
}

std::string format_ablation_table(const std::vector<AblationRow>& ablation) {
  const bool cross = !ablation.empty() && !ablation.front().summary.cross_accuracies.empty();
  std::vector<std::vector<std::string>> rows{{"L_*", "L_Gini", "L_KL", "Accuracy"}};
  if (cross) rows[0].push_back("Cross-domain");
  const std::string mark = "✓";
  for (const auto& a : ablation) {
    std::vector<std::string> row{mark, a.gini ? mark : "", a.kl ? mark : "",
                                 format_mean_std(a.summary.mean, a.summary.stddev)};
    if (cross) row.push_back(format_mean_std(a.summary.cross_mean, a.summary.cross_stddev));
    rows.push_back(row);
  }
  return table(rows);
}

ExperimentReport run_experiment(ExperimentConfig cfg, const RunOptions& opts) {
  const LoadedData data = load_data(cfg);
  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out / "config.resolved.json", to_json(cfg));

  ExperimentReport report;
  for (auto seed : cfg.seeds) report.baseline_trials.push_back(run_trial(cfg, data, 0.0, 0.0, seed, opts));
  for (auto seed : cfg.seeds) {
    report.ours_trials.push_back(
        run_trial(cfg, data, cfg.effective_lambda1(), cfg.effective_lambda2(), seed, opts));
  }
  report.baseline = summarize("baseline", report.baseline_trials);
  report.ours = summarize("ours", report.ours_trials);

  write_text(cfg.out / "summary.csv",
             "method,domain,trials,mean_percent,std_percent,accuracies_percent\n" +
                 summary_csv_rows("baseline,", report.baseline) +
                 summary_csv_rows("ours,", report.ours));
  write_text(cfg.out / "summary.txt", format_experiment_table(report));
  return report;
}

std::vector<AblationRow> run_ablation(ExperimentConfig cfg, const RunOptions& opts) {
  const LoadedData data = load_data(cfg);
  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out / "config.resolved.json", to_json(cfg));

  std::vector<AblationRow> rows;
  for (auto [gini, kl] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    AblationRow row;
    row.gini = gini;
    row.kl = kl;
    const double l1 = gini ? cfg.train.loss.lambda1 : 0.0;
    const double l2 = kl ? cfg.train.loss.lambda2 : 0.0;
    for (auto seed : cfg.seeds) row.trials.push_back(run_trial(cfg, data, l1, l2, seed, opts));
    row.summary = summarize(std::string("L_*") + (gini ? "+L_Gini" : "") + (kl ? "+L_KL" : ""),
                            row.trials);
    rows.push_back(std::move(row));
  }

  std::string csv = "l_star,l_gini,l_kl,domain,trials,mean_percent,std_percent,accuracies_percent\n";
  for (const auto& row : rows) {
    csv += summary_csv_rows(std::string("1,") + (row.gini ? "1," : "0,") + (row.kl ? "1," : "0,"),
                            row.summary);
  }
  write_text(cfg.out / "ablation.csv", csv);
  write_text(cfg.out / "ablation.txt", format_ablation_table(rows));
  return rows;
}

std::vector<EpochRecord> read_metrics_csv(std::istream& in) {
  std::vector<EpochRecord> records;
  std::string line;
  if (!std::getline(in, line) || line + "\n" != metrics_csv_header())
    throw DataError("metrics CSV: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      double x = 0.0;
      const auto res = std::from_chars(line.data() + start, line.data() + end, x);
      if (res.ec != std::errc() || res.ptr != line.data() + end)
        throw DataError("metrics CSV: bad field in '" + line + "'");
      v.push_back(x);
      start = end + 1;
    }
    if (v.size() != 9) throw DataError("metrics CSV: expected 9 fields in '" + line + "'");
    records.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]});
  }
  return records;
}

double evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& ds,
                           const LabelMap* map) {
  Model model = Model::load(checkpoint);
  const ModelSpec& spec = model.spec();
  if (spec.in_channels != ds.channels || spec.in_height != ds.height || spec.in_width != ds.width) {
    throw ConfigError("checkpoint expects " + std::to_string(spec.in_channels) + "x" +
                      std::to_string(spec.in_height) + "x" + std::to_string(spec.in_width) +
                      " images, dataset has " + std::to_string(ds.channels) + "x" +
                      std::to_string(ds.height) + "x" + std::to_string(ds.width));
  }
  return evaluate_accuracy(model, ds, map);
}

GradcheckSuiteResult run_gradcheck_suite(std::size_t instances, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  constexpr std::size_t m = 4, c = 3, n = 3, hw = 2;
  GradcheckSuiteResult result;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> value(0.0, 2.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(n) - 1);
  const LossConfig cfg;
  for (std::size_t i = 0; i < instances; ++i) {
    Tensor a({m, c, hw, hw});
    for (double& v : a.data()) v = value(rng);
    // A batch drawn from a single class has an all-zero gradient up to epsilon.
    std::vector<int> ids(m);
    do {
      for (int& id : ids) id = label(rng);
    } while (std::all_of(ids.begin(), ids.end(), [&](int id) { return id == ids[0]; }));
    const LabelMatrix y(ids, n);
    result.gini_max_error = std::max(
        result.gini_max_error,
        finite_diff_check([&](const Tensor& x, Tape* tape) { return disco_loss(x, y, cfg, tape).gini; },
                          a.clone(), 1e-5));
    result.kl_max_error = std::max(
        result.kl_max_error,
        finite_diff_check([&](const Tensor& x, Tape* tape) { return disco_loss(x, y, cfg, tape).kl; },
                          a.clone(), 1e-5));
    ++result.instances;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace disco
