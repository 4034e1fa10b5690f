#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ctt/augment.hpp"
#include "ctt/losses.hpp"
#include "ctt/model.hpp"
#include "ctt/synthetic.hpp"

namespace ctt {

struct OptimizerConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double decay_factor = 0.1;
  std::size_t decay_interval = 200;
  std::size_t iterations = 300;
  std::size_t batch_size = 16;
  double val_fraction = 0.1;      // tail of the shuffled training set,
                                  // used only for best-checkpoint selection
  std::size_t eval_interval = 50; // validation cadence in iterations

  void validate() const;
};

struct DataConfig {
  std::optional<std::string> manifest;        // exactly one of manifest /
  std::optional<SyntheticConfig> synthetic;   // synthetic must be set
  AugmentationPolicy augmentation;
};

// One JSON document drives every subcommand. Unknown keys are rejected.
// Named profiles: "desk" (the default values below) and "paper"
// (256x256, D=128, L=12, cross at 6, 3000 iterations).
struct ExperimentConfig {
  ModelConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  DataConfig data;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::size_t folds = 5;

  static ExperimentConfig profile(const std::string& name);
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::filesystem::path& path);

  void validate() const;
};

}  // namespace ctt
