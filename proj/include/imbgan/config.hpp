#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "imbgan/advtrain.hpp"

namespace imbgan {

enum class DatasetPreset { mnist, fmnist, synthetic };

std::string to_string(DatasetPreset p);

// Everything one experiment needs. Preset-dependent defaults are filled in
// by parse_config_text for every key the file leaves out.
struct ExperimentConfig {
  // [experiment]
  DatasetPreset preset = DatasetPreset::synthetic;
  std::string data_root = "data";
  std::string output_dir;
  std::vector<std::uint64_t> seeds{0};
  StrategyKind strategy = StrategyKind::adso;

  // [data]
  std::vector<std::size_t> per_class_counts;
  std::size_t holdout_per_class = 100;
  std::size_t synthetic_test_per_class = 200;

  // [model]
  std::size_t latent_dim = 64;
  double dropout = 0.3;
  double leaky_slope = 0.2;

  // [slppl]
  std::size_t slppl_epochs = 20;
  std::size_t slppl_batch_size = 64;
  AdamOptions slppl_adam{};
  double prior_epsilon = 1e-4;
  bool diagonal_prior = false;

  // [adversarial]
  AdvConfig adv{};
  std::size_t checkpoint_every = 0;

  // [grid]
  std::size_t grid_rows_per_class = 8;

  std::size_t num_classes() const { return per_class_counts.size(); }
  ArchitectureSpec architecture() const;
  AdvConfig adv_config(std::uint64_t seed) const;
  SlpplConfig slppl_config(std::uint64_t seed) const;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// Default config for a preset (output_dir left empty).
ExperimentConfig preset_defaults(DatasetPreset preset);

// Parses the sectioned key = value format. Unknown sections or keys, type
// mismatches and syntax errors (reported with their line) throw ConfigError.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name = "<config>");

// Reads a file and applies the DATA_ROOT environment override.
ExperimentConfig parse_config(const std::filesystem::path& path);

// Full snapshot listing every key; parse_config_text(snapshot) == config.
std::string config_snapshot(const ExperimentConfig& config);

// Key reference with per-preset defaults, for --help.
std::string config_help();

}  // namespace imbgan
