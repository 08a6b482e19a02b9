#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ghost/dataset.hpp"
#include "ghost/engine.hpp"

namespace ghost {

struct DatasetSpec {
  std::string type = "synthetic";  // "mnist" | "synthetic"
  // mnist
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t val_count = 1000;
  std::size_t max_train_per_class = 0;
  // synthetic
  SyntheticSpec synthetic;
  std::uint64_t data_seed = 7777;  // shared across run seeds and modes
};

struct RunConfig {
  DatasetSpec dataset;
  ExperimentConfig experiment;
  // Normalized snapshot (defaults filled in); reproduces the run bit-exactly
  // together with the seed.
  nlohmann::json snapshot;
};

// Strict parse: unknown keys are rejected so config typos fail loudly.
RunConfig parse_run_config(const nlohmann::json& j,
                           const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

LabeledDataset build_dataset(const DatasetSpec& spec);

}  // namespace ghost
