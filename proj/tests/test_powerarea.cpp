#include <gtest/gtest.h>

#include <cmath>

#include "synmem/powerarea.hpp"

using namespace synmem;

namespace {

const std::vector<BankShape> kOneWord{{1, 1}};
const std::vector<BankShape> kDesk = bank_shapes(NetworkArch{{784, 256, 128, 64, 32, 10}});

// Independent closed form of total power for a uniform-k layout with one
// read and one write per word.
double uniform_total(const PowerParams& p, unsigned k, double v) {
  double bits = 0;
  for (const auto& s : kDesk) bits += static_cast<double>(s.words());
  const double r = v / p.vnom;
  const double dyn6 = r * r, dyn8 = r * r * 1.2;
  const double leak6 = p.leakage_power * r * std::exp((v - p.vnom) / 0.1);
  const double leak8 = leak6 * 1.47;
  const double six = 8.0 - k, eight = k;
  return bits * (2 * (six * dyn6 + eight * dyn8) + p.leakage_weight * (six * leak6 + eight * leak8));
}

}  // namespace

TEST(CellPower, NominalValuesAndRatios) {
  const PowerParams p;
  EXPECT_EQ(cell_power(p, BitcellKind::SixT, PowerOp::Read, p.vnom), p.read_power);
  EXPECT_EQ(cell_power(p, BitcellKind::SixT, PowerOp::Leak, p.vnom), p.leakage_power);
  EXPECT_DOUBLE_EQ(cell_power(p, BitcellKind::EightT, PowerOp::Read, p.vnom) /
                       cell_power(p, BitcellKind::SixT, PowerOp::Read, p.vnom),
                   1.20);
  EXPECT_DOUBLE_EQ(cell_power(p, BitcellKind::EightT, PowerOp::Write, p.vnom) /
                       cell_power(p, BitcellKind::SixT, PowerOp::Write, p.vnom),
                   1.20);
  EXPECT_DOUBLE_EQ(cell_power(p, BitcellKind::EightT, PowerOp::Leak, p.vnom) /
                       cell_power(p, BitcellKind::SixT, PowerOp::Leak, p.vnom),
                   1.47);
}

TEST(CellPower, StrictlyIncreasingInVoltage) {
  const PowerParams p;
  for (auto kind : {BitcellKind::SixT, BitcellKind::EightT}) {
    for (auto op : {PowerOp::Read, PowerOp::Write, PowerOp::Leak}) {
      double prev = 0.0;
      for (double v = 0.5; v <= 1.0; v += 0.01) {
        const double now = cell_power(p, kind, op, v);
        EXPECT_GT(now, prev);
        prev = now;
      }
    }
  }
  EXPECT_THROW(cell_power(p, BitcellKind::SixT, PowerOp::Read, 0.0), std::invalid_argument);
}

TEST(PowerParams, ValidationAndJson) {
  PowerParams p;
  p.eight_t_leakage = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  const PowerParams d;
  const auto back = PowerParams::from_json(d.to_json());
  EXPECT_EQ(back.to_json(), d.to_json());
  const auto shipped = PowerParams::load(SYNMEM_DATA_DIR "/power_params_default.json");
  EXPECT_EQ(shipped.to_json(), d.to_json());
}

TEST(Area, OverheadClosedForms) {
  const PowerParams p;
  EXPECT_EQ(area(p, MemoryLayout::all_six_t(), kDesk).overhead_fraction, 0.0);
  EXPECT_NEAR(area(p, MemoryLayout::hybrid_uniform(3), kDesk).overhead_fraction, 3 * 0.37 / 8, 1e-12);
  EXPECT_NEAR(area(p, MemoryLayout::hybrid_uniform(8), kDesk).overhead_fraction, 0.37, 1e-12);
  EXPECT_NEAR(area(p, MemoryLayout::hybrid_uniform(3), kOneWord).overhead_fraction, 0.13875, 1e-15);
}

TEST(Area, ShiftingProtectionToSmallerBankShrinksArea) {
  const PowerParams p;
  const std::vector<BankShape> shapes{{100, 50}, {50, 10}, {10, 10}};
  const auto big = area(p, MemoryLayout::sensitivity_banks({3, 1, 1}), shapes).overhead_fraction;
  const auto small = area(p, MemoryLayout::sensitivity_banks({1, 3, 1}), shapes).overhead_fraction;
  EXPECT_LT(small, big);
  const std::vector<BankShape> equal{{10, 10}, {10, 10}, {10, 10}};
  EXPECT_DOUBLE_EQ(area(p, MemoryLayout::sensitivity_banks({3, 1, 1}), equal).overhead_fraction,
                   area(p, MemoryLayout::sensitivity_banks({1, 3, 1}), equal).overhead_fraction);
}

TEST(Aggregate, SingleWordReadAllSixT) {
  const PowerParams p;
  const auto r = aggregate(p, MemoryLayout::all_six_t(), kOneWord, AccessTrace{{1, 0}}, p.vnom);
  EXPECT_EQ(r.read_power, 8.0);
  EXPECT_EQ(r.write_power, 0.0);
}

TEST(Aggregate, SingleWordReadHybrid3) {
  const PowerParams p;
  const auto r = aggregate(p, MemoryLayout::hybrid_uniform(3), kOneWord, AccessTrace{{1, 0}}, p.vnom);
  EXPECT_DOUBLE_EQ(r.read_power, 5 + 3 * 1.2);
}

TEST(Aggregate, ZeroTraceHasOnlyLeakage) {
  const PowerParams p;
  const auto r = aggregate(p, MemoryLayout::hybrid_uniform(2), kOneWord, AccessTrace{{0, 0}}, 0.7);
  EXPECT_EQ(r.read_power, 0.0);
  EXPECT_EQ(r.write_power, 0.0);
  EXPECT_GT(r.leakage_power, 0.0);
  EXPECT_EQ(r.total, r.leakage_power);
}

TEST(Aggregate, TwoBankMixedTraceHandSum) {
  PowerParams p;
  p.leakage_weight = 1.0;
  const std::vector<BankShape> shapes{{2, 1}, {1, 1}};
  const auto r = aggregate(p, MemoryLayout::sensitivity_banks({1, 2}), shapes, AccessTrace{{3, 0}, {0, 2}}, p.vnom);
  EXPECT_DOUBLE_EQ(r.read_power, 3 * (7 + 1.2));
  EXPECT_DOUBLE_EQ(r.write_power, 2 * (6 + 2 * 1.2));
  EXPECT_DOUBLE_EQ(r.leakage_power, 2 * (7 * 0.05 + 0.05 * 1.47) + (6 * 0.05 + 2 * 0.05 * 1.47));
  EXPECT_DOUBLE_EQ(r.total, r.read_power + r.write_power + r.leakage_power);
}

TEST(Aggregate, TraceMustMatchBanks) {
  const PowerParams p;
  EXPECT_THROW(aggregate(p, MemoryLayout::all_six_t(), kOneWord, AccessTrace{}, 0.9), std::invalid_argument);
}

TEST(Savings, Identities) {
  const PowerParams p;
  const auto base = aggregate(p, MemoryLayout::all_six_t(), kOneWord, AccessTrace{{1, 1}}, 0.8);
  EXPECT_EQ(savings(base, base).total_pct, 0.0);
  auto half = base;
  half.total /= 2;
  EXPECT_DOUBLE_EQ(savings(half, base).total_pct, 50.0);
  PowerAreaReport zero;
  EXPECT_THROW(savings(base, zero), std::domain_error);
}

TEST(Savings, HybridAtLowVoltageVersusAllSixTBaseline) {
  const PowerParams p;
  const auto trace = uniform_trace(kDesk, 1, 1);
  const auto base = aggregate(p, MemoryLayout::all_six_t(), kDesk, trace, 0.75);
  const auto cand = aggregate(p, MemoryLayout::hybrid_uniform(3), kDesk, trace, 0.65);
  const double expected = 100.0 * (1.0 - uniform_total(p, 3, 0.65) / uniform_total(p, 0, 0.75));
  EXPECT_NEAR(savings(cand, base).total_pct, expected, 1e-9);
  EXPECT_GT(expected, 0.0);
}
