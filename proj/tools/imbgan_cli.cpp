// Command-line driver: prepare-data, train-slppl, train, eval, grid, run-all.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "imbgan/data.hpp"
#include "imbgan/experiment.hpp"
#include "imbgan/grid.hpp"

namespace fs = std::filesystem;
using namespace imbgan;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingData = 3,
  kDivergence = 4,
  kDataFormat = 5,
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig config = preset_defaults(DatasetPreset::synthetic);
  if (!opts.config_path.empty()) {
    config = parse_config(opts.config_path);
  } else if (const char* root = std::getenv("DATA_ROOT"); root && *root) {
    config.data_root = root;
  }
  if (!opts.out.empty()) config.output_dir = opts.out;
  if (config.output_dir.empty()) config.output_dir = "runs";
  if (opts.seed) config.seeds = {*opts.seed};
  return config;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "run a single seed instead of the config list");
  cmd->add_option("--out", opts.out, "artifact directory (overrides output_dir)");
}

PretrainedModel pretrained_or_train(const ExperimentConfig& config,
                                    const PreparedData& data, std::uint64_t seed,
                                    const fs::path& dir) {
  if (fs::exists(dir / "slppl.nbnd")) {
    std::cerr << "using " << (dir / "slppl.nbnd").string() << '\n';
    return load_model(dir / "slppl.nbnd", config);
  }
  SlpplHistory history;
  PretrainedModel model = run_pretraining(config, data, seed, std::cerr, &history);
  write_slppl_history(history, dir / "slppl_history.csv");
  save_model(dir / "slppl.nbnd", model.bundle, model.priors);
  return model;
}

int run(int argc, char** argv) {
  CLI::App app{"Imbalanced classification with a three-player GAN (ADSO / AMO / DSO+Q)"};
  app.require_subcommand(1);
  app.footer("Environment: DATA_ROOT overrides experiment.data_root.\n"
             "Exit codes: 0 ok, 1 failure, 2 config/usage, 3 missing data, "
             "4 divergence, 5 bad data format.\n\n" +
             config_help());

  CommonOptions opts;
  auto* prep = app.add_subcommand("prepare-data",
                                  "build the imbalanced split and write it as IDX files");
  auto* slppl = app.add_subcommand("train-slppl", "pretrain encoder/decoder and fit priors");
  auto* train = app.add_subcommand("train", "run a strategy from the pretrained model");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test set");
  auto* grid = app.add_subcommand("grid", "write a class-by-row sample grid");
  auto* all = app.add_subcommand("run-all", "full pipeline for every seed with summary");
  for (auto* cmd : {prep, slppl, train, eval, grid, all}) add_common(cmd, opts);

  std::optional<std::string> strategy;
  train->add_option("--strategy", strategy, "adso | amo | dso")
      ->check(CLI::IsMember({"adso", "amo", "dso"}));
  all->add_option("--strategy", strategy, "adso | amo | dso")
      ->check(CLI::IsMember({"adso", "amo", "dso"}));
  std::string checkpoint = "best.nbnd";
  eval->add_option("--checkpoint", checkpoint, "checkpoint file name in the seed directory");
  grid->add_option("--checkpoint", checkpoint, "checkpoint file name in the seed directory");
  std::optional<std::size_t> rows;
  grid->add_option("--rows", rows, "tiles per class (overrides grid.rows_per_class)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  ExperimentConfig config = load_config(opts);
  if (strategy) {
    config.strategy = *strategy == "adso" ? StrategyKind::adso
                      : *strategy == "amo" ? StrategyKind::amo
                                           : StrategyKind::dso;
  }

  if (all->parsed()) {
    run_experiment(config, std::cerr);
    return kOk;
  }

  for (const auto seed : config.seeds) {
    const fs::path dir = seed_dir(config, seed);
    fs::create_directories(dir);
    write_text(dir / "config.snapshot", config_snapshot(config));

    if (grid->parsed()) {
      const PretrainedModel model = load_model(dir / checkpoint, config);
      emit_sample_grid(model.bundle, model.priors,
                       rows.value_or(config.grid_rows_per_class), dir / "grid.pgm", seed);
      std::cerr << "wrote " << (dir / "grid.pgm").string() << '\n';
      continue;
    }

    const PreparedData data = prepare_data(config, seed, std::cerr);
    if (prep->parsed()) {
      const fs::path d = dir / "data";
      fs::create_directories(d);
      save_idx(data.train.base, d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
      if (data.holdout.size()) {
        save_idx(data.holdout, d / "holdout-images-idx3-ubyte",
                 d / "holdout-labels-idx1-ubyte");
      }
      save_idx(data.test, d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte");
    } else if (slppl->parsed()) {
      SlpplHistory history;
      const PretrainedModel model =
          run_pretraining(config, data, seed, std::cerr, &history);
      write_slppl_history(history, dir / "slppl_history.csv");
      save_model(dir / "slppl.nbnd", model.bundle, model.priors);
    } else if (train->parsed()) {
      const PretrainedModel model = pretrained_or_train(config, data, seed, dir);
      run_strategy(config, data, model, seed, dir, std::cerr);
    } else if (eval->parsed()) {
      const PretrainedModel model = load_model(dir / checkpoint, config);
      const SeedResult result{seed, evaluate_model(model.bundle, data), 0};
      write_text(dir / "metrics.csv", metrics_csv(config.strategy, {result}));
      std::cout << format_metrics_table({{to_string(config.strategy), result.report}});
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataMissingError& e) {
    std::cerr << "missing data: " << e.what() << '\n';
    return kMissingData;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
    return kDivergence;
  } catch (const FormatError& e) {
    std::cerr << "data format error: " << e.what() << '\n';
    return kDataFormat;
  } catch (const ConsistencyError& e) {
    std::cerr << "data format error: " << e.what() << '\n';
    return kDataFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
