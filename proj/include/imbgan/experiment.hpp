#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "imbgan/advtrain.hpp"
#include "imbgan/config.hpp"
#include "imbgan/metrics.hpp"

namespace imbgan {

// Dataset files for a non-synthetic preset are not where the config says.
class DataMissingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PreparedData {
  ImbalancedDataset train;
  BalancedView balanced;
  LabeledImageSet holdout;  // model selection, disjoint from train
  LabeledImageSet test;
};

// Directory and file names of the IDX files a preset reads.
std::filesystem::path dataset_dir(const ExperimentConfig& config);

// Builds the imbalanced training split, its balanced view, the holdout and
// the test set for one seed. Logs the class histogram and IR.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed,
                          std::ostream& log);

// Encoder/decoder after pretraining together with the fitted priors.
struct PretrainedModel {
  NetworkBundle bundle;
  ClassPriors priors;
};

PretrainedModel run_pretraining(const ExperimentConfig& config,
                                const PreparedData& data, std::uint64_t seed,
                                std::ostream& log,
                                SlpplHistory* history = nullptr);

// Bundle plus priors in one NBND1 file.
void save_model(const std::filesystem::path& path, const NetworkBundle& bundle,
                const ClassPriors& priors);
PretrainedModel load_model(const std::filesystem::path& path,
                           const ExperimentConfig& config);

void write_slppl_history(const SlpplHistory& history,
                         const std::filesystem::path& path);

struct SeedResult {
  std::uint64_t seed = 0;
  MetricsReport report;
  std::size_t best_epoch = 0;
};

// metrics.csv body for one or more seeds.
std::string metrics_csv(StrategyKind strategy,
                        const std::vector<SeedResult>& results);

MetricsReport evaluate_model(const NetworkBundle& bundle,
                             const PreparedData& data);

// Runs the selected strategy from a pretrained model, writing history.csv,
// best.nbnd, final.nbnd and the periodic checkpoints into `dir`.
AdvOutcome run_strategy(const ExperimentConfig& config,
                        const PreparedData& data, const PretrainedModel& model,
                        std::uint64_t seed, const std::filesystem::path& dir,
                        std::ostream& log);

// Whole pipeline for one seed into `dir`.
SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed,
                    const std::filesystem::path& dir, std::ostream& log);

// Every seed into <output_dir>/seed-<n>, then metrics.csv and summary.txt at
// the top level. Returns per-seed results.
std::vector<SeedResult> run_experiment(const ExperimentConfig& config,
                                       std::ostream& log);

std::filesystem::path seed_dir(const ExperimentConfig& config,
                               std::uint64_t seed);

// Per-seed rows plus mean, min and max.
std::string format_summary(StrategyKind strategy,
                           const std::vector<SeedResult>& results);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace imbgan
