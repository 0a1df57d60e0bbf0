#pragma once

// Closed-form bitcell power and area accounting over hybrid memory layouts.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "synmem/faultmem.hpp"

namespace synmem {

/// Per-cell power model, arbitrary but consistent units.
///
/// Dynamic: nominal * (V/Vnom)^dynamic_exponent. Leakage:
/// leak_nom * (V/Vnom) * exp((V - Vnom) / v_leak). An 8T cell costs the 6T value
/// times the 8T multipliers.
struct PowerParams {
  double vnom = 0.95;
  double read_power = 1.0;
  double write_power = 1.0;
  double leakage_power = 0.05;  // per cell per unit time
  double dynamic_exponent = 2.0;
  double v_leak = 0.1;
  double eight_t_read = 1.20;
  double eight_t_write = 1.20;
  double eight_t_leakage = 1.47;
  double six_t_area = 1.0;
  double eight_t_area = 1.37;
  /// Unit-time intervals of leakage charged to one evaluation pass.
  double leakage_weight = 64.0;

  void validate() const;
  static PowerParams from_json(const nlohmann::json& j);
  static PowerParams load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

enum class PowerOp { Read, Write, Leak };

double cell_power(const PowerParams& params, BitcellKind kind, PowerOp op, double volts);

struct BankAccess {
  std::uint64_t reads = 0;   // word reads
  std::uint64_t writes = 0;  // word writes
};
using AccessTrace = std::vector<BankAccess>;

/// Every word read `reads_per_word` times and written `writes_per_word` times.
AccessTrace uniform_trace(std::span<const BankShape> shapes, std::uint64_t reads_per_word,
                          std::uint64_t writes_per_word);

struct AreaReport {
  double area_units = 0.0;
  double all_six_t_units = 0.0;
  double overhead_fraction = 0.0;  // area / all_six_t - 1
};

AreaReport area(const PowerParams& params, const MemoryLayout& layout, std::span<const BankShape> shapes);

struct PowerAreaReport {
  double read_power = 0.0;
  double write_power = 0.0;
  double leakage_power = 0.0;  // already multiplied by leakage_weight
  double total = 0.0;
  double area_units = 0.0;
  double area_overhead = 0.0;  // fraction vs all-6T
};

/// Throws std::invalid_argument if `trace` does not have one entry per bank.
PowerAreaReport aggregate(const PowerParams& params, const MemoryLayout& layout, std::span<const BankShape> shapes,
                          const AccessTrace& trace, double volts);

/// Percent reductions, 100 * (1 - candidate / baseline).
struct Savings {
  double read_pct = 0.0;
  double write_pct = 0.0;
  double leakage_pct = 0.0;
  double total_pct = 0.0;
};

/// Throws std::domain_error when a baseline component is zero and the candidate's is not.
Savings savings(const PowerAreaReport& candidate, const PowerAreaReport& baseline);

}  // namespace synmem
