// Command-line front end: spinup, dns, make-dataset, train, evaluate.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffqg/commands.hpp"
#include "diffqg/qg.hpp"

namespace fs = std::filesystem;
using namespace diffqg;

namespace {

ClosureSpec parse_closure_arg(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
    throw ConfigError("--closure expects name=source, got '" + arg + "'");
  }
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();

  CLI::App app{"Differentiable quasi-geostrophic LES toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides run.seed");
  app.add_option("--out", out_dir, "output directory");

  auto* spinup = app.add_subcommand("spinup", "spin up a statistically steady initial state");

  std::string initial;
  auto* dns = app.add_subcommand("dns", "integrate the DNS and store a trajectory");
  dns->add_option("--initial", initial, "initial snapshot")->required();

  std::vector<std::string> manifests;
  auto* dataset_cmd = app.add_subcommand("make-dataset", "coarse-grain trajectories into a training set");
  dataset_cmd->add_option("--manifest", manifests, "trajectory manifest (repeatable)")->required();

  std::string dataset;
  std::optional<std::string> strategy;
  std::optional<int> n_rollout, epochs;
  auto* train_cmd = app.add_subcommand("train", "train a CNN closure");
  train_cmd->add_option("--dataset", dataset, "dataset file")->required();
  train_cmd->add_option("--strategy", strategy, "apriori or aposteriori");
  train_cmd->add_option("--n-rollout", n_rollout, "rollout length N");
  train_cmd->add_option("--epochs", epochs, "number of epochs");

  std::vector<std::string> closure_args;
  auto* eval = app.add_subcommand("evaluate", "compare closures against filtered DNS");
  eval->add_option("--initial", initial, "held-out initial snapshot")->required();
  eval->add_option("--closure", closure_args, "name=zero|smagorinsky|checkpoint (repeatable, overrides [closures])");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.training.seed = cfg.seed;
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (*spinup) return cmd_spinup(cfg, out, std::cout);
    if (*dns) return cmd_dns(cfg, initial, out, std::cout);
    if (*dataset_cmd) {
      return cmd_make_dataset(cfg, std::vector<fs::path>(manifests.begin(), manifests.end()), out, std::cout);
    }
    if (*train_cmd) {
      if (strategy) cfg.training.strategy = parse_strategy(*strategy);
      if (n_rollout) cfg.training.n_rollout = *n_rollout;
      if (epochs) cfg.training.epochs = *epochs;
      cfg.validate();
      return cmd_train(cfg, dataset, out, std::cout);
    }
    if (*eval) {
      std::vector<ClosureSpec> closures = cfg.closures;
      if (!closure_args.empty()) {
        closures.clear();
        for (const std::string& a : closure_args) closures.push_back(parse_closure_arg(a));
      }
      if (closures.empty()) throw ConfigError("no closures to evaluate");
      return cmd_evaluate(cfg, initial, closures, out, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
