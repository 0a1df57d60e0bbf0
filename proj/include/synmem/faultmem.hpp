#pragma once

// Voltage-dependent SRAM bitcell failures, hybrid 8T-6T memory layouts and
// fault-injecting weight storage.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "synmem/quantnet.hpp"

namespace synmem {

enum class BitcellKind { SixT, EightT };
enum class FailureType { ReadAccess, Write, ReadDisturb };

/// Threshold-voltage variation inputs for one transistor.
struct VtVariationParams {
  double sigma_vt0 = 0.0;  // volts, minimum-sized device
  double length = 0.0;
  double width = 0.0;
  double min_length = 0.0;
  double min_width = 0.0;
};

/// sigma_vt0 * sqrt((Lmin/L) * (Wmin/W)). Throws std::invalid_argument on
/// non-positive dimensions or a device smaller than the minimum.
double sigma_vt(const VtVariationParams& p);

/// Failure probability as a function of supply voltage.
///
/// Three backends: identically zero, a tabulated curve interpolated piecewise
/// linearly in log-probability (linearly on segments touching p = 0) and
/// clamped outside the table, and a Gaussian margin
/// p(V) = Phi(-(mu0 + slope * (V - Vnom)) / sigma_m).
class FailureCurve {
 public:
  struct Zero {};
  struct Table {
    std::vector<std::pair<double, double>> points;  // (volts, probability), ascending volts
  };
  struct AnalyticMargin {
    double mu0 = 0.0;
    double slope = 0.0;
    double sigma_m = 1.0;
  };

  FailureCurve() = default;
  static FailureCurve zero() { return FailureCurve{}; }
  /// Sorts by voltage and validates range and monotonicity.
  static FailureCurve table(std::vector<std::pair<double, double>> points);
  static FailureCurve analytic(double mu0, double slope, double sigma_m);

  double probability(double volts, double vnom) const;
  bool is_zero() const { return std::holds_alternative<Zero>(curve_); }
  const std::variant<Zero, Table, AnalyticMargin>& backend() const { return curve_; }

  static FailureCurve from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  explicit FailureCurve(std::variant<Zero, Table, AnalyticMargin> c) : curve_(std::move(c)) {}
  std::variant<Zero, Table, AnalyticMargin> curve_;
};

struct CellFailureCurves {
  FailureCurve read_access;
  FailureCurve write;
  FailureCurve read_disturb;

  const FailureCurve& get(FailureType type) const;
};

struct FailureModel {
  double vnom = 0.95;
  double v_min = 0.5;  // supported voltage range
  double v_max = 1.0;
  CellFailureCurves six_t;
  CellFailureCurves eight_t;

  /// Throws std::out_of_range outside [v_min, v_max].
  double probability(BitcellKind kind, FailureType type, double volts) const;

  static FailureModel from_json(const nlohmann::json& j);
  static FailureModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

inline double failure_prob(const FailureModel& model, BitcellKind kind, FailureType type, double volts) {
  return model.probability(kind, type, volts);
}

/// Which MSBs of each weight word live in 8T cells.
class MemoryLayout {
 public:
  struct AllSixT {};
  struct HybridUniform {
    unsigned k = 0;
  };
  struct SensitivityBanks {
    std::vector<unsigned> k_per_bank;
  };
  using Variant = std::variant<AllSixT, HybridUniform, SensitivityBanks>;

  static MemoryLayout all_six_t(int word_bits = 8);
  static MemoryLayout hybrid_uniform(unsigned k, int word_bits = 8);
  static MemoryLayout sensitivity_banks(std::vector<unsigned> k_per_bank, int word_bits = 8);
  /// Accepts "all6t", "hybrid:<k>" and "banks:<k0>,<k1>,..." (or '-' separated).
  static MemoryLayout parse(const std::string& text, int word_bits = 8);

  int word_bits() const { return word_bits_; }
  const Variant& variant() const { return layout_; }
  /// Throws std::invalid_argument if a per-bank list does not cover `banks`.
  void validate(std::size_t banks) const;
  unsigned protected_count(std::size_t bank) const;
  /// Bits held in 8T cells for words of `bank`.
  std::uint16_t protected_mask(std::size_t bank) const;
  /// Bits held in 6T cells for words of `bank`.
  std::uint16_t six_t_mask(std::size_t bank) const;
  /// Effective protected-MSB count per bank; equal profiles imply equal behaviour.
  std::vector<unsigned> profile(std::size_t banks) const;
  /// Stable text form, usable as a CSV field.
  std::string label() const;

 private:
  MemoryLayout(Variant v, int word_bits);
  Variant layout_;
  int word_bits_ = 8;
};

/// Protected positions, most significant first.
std::vector<unsigned> protected_positions(const MemoryLayout& layout, std::size_t bank);

struct BankShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t words() const { return rows * cols; }
  bool operator==(const BankShape&) const = default;
};

std::vector<BankShape> bank_shapes(const NetworkArch& arch);

/// Per-word fault masks of one weight bank.
struct BankFaults {
  std::vector<std::uint16_t> read_mask;
  std::vector<std::uint16_t> write_mask;
  std::vector<std::uint16_t> disturb_mask;  // stays all-zero unless a read-disturb curve is configured
  bool operator==(const BankFaults&) const = default;
};

/// One Monte Carlo realization of a memory at a voltage.
struct ChipInstance {
  double voltage = 0.0;
  std::uint64_t seed = 0;
  int word_bits = 8;
  double p_read = 0.0;   // per-6T-bit probabilities actually sampled
  double p_write = 0.0;
  bool renormalized = false;  // p_read + p_write exceeded 1 at this voltage
  std::vector<BankShape> shapes;
  std::vector<std::uint16_t> six_t_masks;
  std::vector<BankFaults> banks;

  bool operator==(const ChipInstance&) const = default;
};

/// Draws read-access / write / healthy per 6T bit; 8T bits are always healthy.
ChipInstance sample_chip(const MemoryLayout& layout, const FailureModel& model, double volts,
                         std::span<const BankShape> shapes, std::uint64_t seed);

enum class AccessMode { StaticMask, PerAccessBernoulli };

std::string to_string(AccessMode mode);
AccessMode parse_access_mode(const std::string& text);

/// Weight memory after loading a quantized network into a faulty chip.
///
/// StaticMask: a read-faulty cell always returns the complement of its content.
/// PerAccessBernoulli: each 6T cell that is not write-faulty flips with the
/// chip's read-failure probability independently on every access; the
/// chip's static read mask is not used.
class FaultyWeightStore final : public WeightSource {
 public:
  FaultyWeightStore(ChipInstance chip, std::vector<Matrix<std::uint16_t>> stored, AccessMode mode);

  std::uint16_t read(std::size_t bank, std::size_t row, std::size_t col, std::uint64_t pass = 0) const;
  void fetch_bank(std::size_t bank, std::uint64_t pass, std::span<std::uint16_t> out) const override;
  bool repeatable() const override { return mode_ == AccessMode::StaticMask || chip_.p_read == 0.0; }

  const ChipInstance& chip() const { return chip_; }
  const std::vector<Matrix<std::uint16_t>>& stored() const { return stored_; }
  AccessMode mode() const { return mode_; }

 private:
  std::uint16_t read_word(std::size_t bank, std::size_t index, std::uint64_t pass) const;

  ChipInstance chip_;
  std::vector<Matrix<std::uint16_t>> stored_;
  AccessMode mode_;
  std::vector<double> any_flip_;  // P(at least one flip) for m candidate bits
};

/// Loads `net` into `chip`: write-faulty cells keep a random power-up bit.
FaultyWeightStore write_weights(const ChipInstance& chip, const QuantizedNetwork& net, std::uint64_t seed,
                                AccessMode mode = AccessMode::StaticMask);

inline std::uint16_t read_weight(const FaultyWeightStore& store, std::size_t bank, std::size_t row, std::size_t col,
                                 std::uint64_t pass = 0) {
  return store.read(bank, row, col, pass);
}

}  // namespace synmem
