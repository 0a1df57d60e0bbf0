#pragma once

// Experiment configuration (JSON, schema version 1). See docs/config.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synmem/dataset.hpp"
#include "synmem/faultmem.hpp"
#include "synmem/powerarea.hpp"
#include "synmem/quantnet.hpp"

namespace synmem {

inline constexpr int kConfigSchemaVersion = 1;

struct IdxSource {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

struct SyntheticSource {
  SyntheticSpec spec;  // spec.n is unused; sizes below
  std::size_t train = 6000;
  std::size_t test = 2000;
};

struct DatasetSource {
  std::optional<IdxSource> idx;
  SyntheticSource synthetic;  // used when idx is empty
};

struct Baseline {
  std::string layout = "all6t";
  double voltage = 0.75;
};

struct ExperimentConfig {
  NetworkArch arch{{784, 256, 128, 64, 32, 10}};
  FixedPointFormat format;
  DatasetSource dataset;
  TrainParams training{3.0, 20, 8, 1};
  FailureModel failure_model;
  PowerParams power;
  std::vector<std::string> layouts{"all6t"};
  std::vector<double> voltages{0.95};
  std::size_t chips_per_point = 20;
  std::uint64_t master_seed = 1;
  AccessMode access_mode = AccessMode::StaticMask;
  Baseline baseline;
  std::uint64_t reads_per_word = 1;
  std::uint64_t writes_per_word = 1;
  std::vector<std::vector<unsigned>> profiles{{2, 4, 2, 2, 3}, {1, 3, 1, 1, 3}};
  std::vector<std::string> profile_references{"all6t", "hybrid:3"};
  double profile_voltage = 0.65;

  /// Throws std::invalid_argument on any inconsistency (support, bank counts, ...).
  void validate() const;
  /// Fully resolved form: referenced files are inlined, so it hashes stably.
  nlohmann::json to_json() const;
  /// Hex digest of to_json(); identifies results and cached networks.
  std::string hash() const;
  /// Digest of the inputs that determine the trained network.
  std::string training_key() const;

  /// Relative file references resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace synmem
