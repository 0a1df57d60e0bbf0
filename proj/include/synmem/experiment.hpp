#pragma once

// Monte Carlo experiment runner: trains (or loads) the benchmark network once,
// then evaluates it on sampled chips across voltages and memory layouts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "synmem/config.hpp"

namespace synmem {

/// Runs fn(0..count-1) on up to `jobs` threads. Each index runs exactly once;
/// callers write results into per-index slots so the outcome is order-free.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn);

struct AccuracyStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one chip
  double min = 0.0;

  /// Standard error of the mean.
  double sem(std::size_t n) const;
};

AccuracyStats summarize(const std::vector<double>& values);

/// One (voltage, layout) point.
struct RunRow {
  double voltage = 0.0;
  std::string layout;
  std::size_t chips = 0;
  AccuracyStats accuracy;
  std::vector<double> chip_accuracy;
  std::vector<std::uint64_t> chip_seeds;
  PowerAreaReport power;
  Savings savings;
  bool renormalized = false;
  std::string error;  // non-empty for a failed point
};

struct SweepResult {
  std::vector<RunRow> rows;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  double float_accuracy = 0.0;
  double reference_accuracy = 0.0;  // quantized, fault-free
};

struct ProfileRow {
  RunRow run;
  std::vector<unsigned> k_per_bank;
  bool reference = false;  // a configured uniform layout, not a profile
  bool pareto = false;     // no other row is at least as good on accuracy, savings and area
};

struct ProfileReport {
  double voltage = 0.0;
  double reference_accuracy = 0.0;
  std::vector<ProfileRow> rows;  // ascending area overhead
};

/// Seed for chip `index` of a point. Layouts with equal per-bank protection
/// share seeds, so e.g. hybrid:0 and all6t sample identical chips.
std::uint64_t chip_seed(std::uint64_t master, double volts, const std::vector<unsigned>& profile, std::size_t index);

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  /// Loads the data and obtains the float network: from `cache_dir` when a
  /// network for the same training inputs is cached there, else by training
  /// (and writing the cache when `cache_dir` is set).
  void prepare(const std::filesystem::path& cache_dir = {}, std::ostream* log = nullptr);
  /// Uses an already-trained network instead of training.
  void prepare_with(FloatNetwork net);

  const ExperimentConfig& config() const { return config_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& test_set() const { return test_; }
  const FloatNetwork& float_network() const { return float_net_; }
  const QuantizedNetwork& network() const { return qnet_; }
  double float_accuracy() const { return float_accuracy_; }
  /// Fault-free quantized accuracy.
  double reference_accuracy() const { return reference_accuracy_; }

  std::vector<BankShape> shapes() const { return bank_shapes(config_.arch); }
  MemoryLayout layout(const std::string& text) const;
  PowerAreaReport power_report(const MemoryLayout& layout, double volts) const;
  const PowerAreaReport& baseline_power() const { return baseline_power_; }

  /// Accuracy of one chip (sample, load, evaluate).
  double chip_accuracy(const MemoryLayout& layout, double volts, std::uint64_t seed) const;
  RunRow run_point(double volts, const MemoryLayout& layout, unsigned jobs = 1) const;
  /// Grid voltages x layouts in config order. When `csv` is given, rows are
  /// written as each point completes; a failing point leaves an error row.
  SweepResult sweep(unsigned jobs = 1, std::ostream* csv = nullptr) const;
  ProfileReport compare_sensitivity_profiles(const std::vector<std::vector<unsigned>>& profiles,
                                             unsigned jobs = 1) const;

 private:
  void finish_prepare();

  ExperimentConfig config_;
  Dataset train_;
  Dataset test_;
  FloatNetwork float_net_;
  QuantizedNetwork qnet_;
  double float_accuracy_ = 0.0;
  double reference_accuracy_ = 0.0;
  PowerAreaReport baseline_power_;
  bool prepared_ = false;
};

/// Column header of sweep and profile CSV files.
std::string csv_header();
std::string csv_row(const RunRow& row, std::uint64_t seed);
/// Power/area-only rows (no Monte Carlo); accuracy columns are left empty.
std::string power_csv_row(double volts, const std::string& layout, const PowerAreaReport& report,
                          const Savings& savings, std::uint64_t seed);

nlohmann::json to_json(const RunRow& row);
nlohmann::json to_json(const SweepResult& result);
nlohmann::json to_json(const ProfileReport& report);

/// Network files. Doubles round-trip exactly.
void save_network(const FloatNetwork& net, const std::filesystem::path& path, const std::string& key = {});
FloatNetwork load_network(const std::filesystem::path& path, std::string* key = nullptr);
void save_quantized(const QuantizedNetwork& net, const std::filesystem::path& path);

}  // namespace synmem
