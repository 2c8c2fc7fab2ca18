#include <charconv>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "disco/errors.hpp"
#include "disco/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct Flags {
  std::string config;
  std::string seeds;
  std::string out;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<int> gate_epoch;
  bool no_cache = false;
  bool quiet = false;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data() + start, text.data() + end, v);
    if (res.ec != std::errc() || res.ptr != text.data() + end)
      throw disco::ConfigError("--seed: '" + text + "' is not a comma-separated list of integers");
    seeds.push_back(v);
    start = end + 1;
  }
  return seeds;
}

disco::ExperimentConfig resolve(const Flags& f) {
  auto cfg = disco::load_experiment_config(f.config);
  disco::Overrides o;
  if (!f.seeds.empty()) o.seeds = parse_seed_list(f.seeds);
  if (!f.out.empty()) o.out = f.out;
  o.lambda1 = f.lambda1;
  o.lambda2 = f.lambda2;
  o.gate_epoch = f.gate_epoch;
  disco::apply_overrides(cfg, o);
  return cfg;
}

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seeds, "Trial seeds, comma separated");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--lambda1", f.lambda1, "Weight of the Gini term");
  cmd->add_option("--lambda2", f.lambda2, "Weight of the KL term");
  cmd->add_option("--gate-epoch", f.gate_epoch, "First epoch with the auxiliary terms");
  cmd->add_flag("--no-cache", f.no_cache, "Retrain even when a matching run exists");
  cmd->add_flag("--quiet", f.quiet, "Only print the final table");
}

int run(int argc, char** argv) {
  CLI::App app{"Discriminability-loss training and evaluation"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Flags train_flags, ablate_flags, eval_flags;
  auto* train = app.add_subcommand("train", "Train baseline and configured loss over all seeds");
  add_run_flags(train, train_flags);
  auto* ablate = app.add_subcommand("ablate", "Run the four loss-term configurations");
  add_run_flags(ablate, ablate_flags);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, split = "auto";
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--config", eval_flags.config, "Config describing the data")->required();
  eval->add_option("--split", split, "train, val, test, cross or auto")
      ->check(CLI::IsMember({"auto", "train", "val", "test", "cross"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  std::size_t instances = 20;
  std::uint64_t gc_seed = 0;
  gradcheck->add_option("--instances", instances, "Random instances");
  gradcheck->add_option("--seed", gc_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*train || *ablate) {
    const Flags& f = *train ? train_flags : ablate_flags;
    const auto cfg = resolve(f);
    disco::RunOptions opts{.use_cache = !f.no_cache, .log = f.quiet ? nullptr : &std::cerr};
    if (*train) {
      std::cout << disco::format_experiment_table(disco::run_experiment(cfg, opts));
    } else {
      std::cout << disco::format_ablation_table(disco::run_ablation(cfg, opts));
    }
    std::cout << "outputs in " << cfg.out.string() << "\n";
    return kOk;
  }

  if (*eval) {
    auto cfg = resolve(eval_flags);
    const auto data = disco::load_data(cfg);
    if (split == "auto") split = data.cross ? "cross" : data.test ? "test" : "val";
    const disco::Dataset* ds = nullptr;
    const disco::LabelMap* map = nullptr;
    if (split == "train") ds = &data.train;
    if (split == "val") ds = &data.val;
    if (split == "test") {
      if (!data.test) throw disco::ConfigError("the config defines no test set");
      ds = &*data.test;
    }
    if (split == "cross") {
      if (!data.cross) throw disco::ConfigError("the config defines no cross_domain section");
      ds = &*data.cross;
      map = &cfg.cross_domain->label_map;
    }
    const double acc = disco::evaluate_checkpoint(checkpoint, *ds, map);
    std::cout << split << " accuracy " << acc << " (" << ds->size() << " samples)\n";
    return kOk;
  }

  const auto r = disco::run_gradcheck_suite(instances, gc_seed);
  std::cout << "instances " << r.instances << "\n"
            << "gini max relative error " << r.gini_max_error << "\n"
            << "kl max relative error " << r.kl_max_error << "\n"
            << "seconds " << r.seconds << "\n";
  return (r.gini_max_error < 1e-4 && r.kl_max_error < 1e-4) ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const disco::NumericalAbort& e) {
    std::cerr << "numerical abort at epoch " << e.epoch << ", step " << e.step << " ("
              << e.term << "): " << e.what() << "\n";
    return kNumerical;
  } catch (const disco::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const disco::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfig;
  } catch (const disco::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
}
