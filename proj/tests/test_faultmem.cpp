#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>

#include "synmem/faultmem.hpp"
#include "test_util.hpp"

using namespace synmem;
using synmem::testing::three_sigma;

namespace {

FailureModel flat_model(double p_read, double p_write, double volts = 0.6) {
  FailureModel m;
  m.six_t.read_access = FailureCurve::table({{volts, p_read}});
  m.six_t.write = FailureCurve::table({{volts, p_write}});
  return m;
}

QuantizedNetwork small_qnet(std::uint64_t seed = 2) {
  return quantize(init_network(NetworkArch{{12, 8, 4}}, seed), FixedPointFormat{8});
}

std::size_t popcount_all(const std::vector<std::uint16_t>& masks) {
  std::size_t n = 0;
  for (auto m : masks) n += std::popcount(m);
  return n;
}

}  // namespace

TEST(SigmaVt, ScalesWithInverseRootArea) {
  EXPECT_DOUBLE_EQ(sigma_vt({0.030, 1, 1, 1, 1}), 0.030);
  EXPECT_DOUBLE_EQ(sigma_vt({0.030, 1, 4, 1, 1}), 0.015);
  EXPECT_DOUBLE_EQ(sigma_vt({0.040, 2, 2, 1, 1}), 0.020);
  EXPECT_THROW(sigma_vt({0.030, 0.5, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(sigma_vt({0.0, 1, 1, 1, 1}), std::invalid_argument);
}

TEST(FailureCurve, TableIsExactAtPointsAndClampedOutside) {
  const auto c = FailureCurve::table({{0.6, 0.1}, {0.7, 1e-3}, {0.8, 0.0}});
  EXPECT_EQ(c.probability(0.6, 0.95), 0.1);
  EXPECT_EQ(c.probability(0.7, 0.95), 1e-3);
  EXPECT_EQ(c.probability(0.8, 0.95), 0.0);
  EXPECT_EQ(c.probability(0.55, 0.95), 0.1);
  EXPECT_EQ(c.probability(0.9, 0.95), 0.0);
}

TEST(FailureCurve, TableInterpolatesInLogSpace) {
  const auto c = FailureCurve::table({{0.6, 1e-1}, {0.7, 1e-3}});
  EXPECT_NEAR(c.probability(0.65, 0.95), 1e-2, 1e-15);
  // A zero endpoint falls back to linear interpolation.
  const auto z = FailureCurve::table({{0.7, 1e-3}, {0.8, 0.0}});
  EXPECT_NEAR(z.probability(0.75, 0.95), 5e-4, 1e-15);
}

TEST(FailureCurve, RejectsBadTables) {
  EXPECT_THROW(FailureCurve::table({}), std::invalid_argument);
  EXPECT_THROW(FailureCurve::table({{0.6, 1.5}}), std::invalid_argument);
  EXPECT_THROW(FailureCurve::table({{0.6, -0.1}}), std::invalid_argument);
}

TEST(FailureCurve, AnalyticMarginAtZeroMarginIsHalf) {
  const auto c = FailureCurve::analytic(-0.1, 0.5, 0.05);
  EXPECT_DOUBLE_EQ(c.probability(0.95 + 0.2, 0.95), 0.5);
  const auto d = FailureCurve::analytic(0.0, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(d.probability(0.95, 0.95), 0.5);
  // One sigma of margin.
  EXPECT_NEAR(d.probability(1.05, 0.95), 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-15);
}

TEST(FailureCurve, MonotoneNonIncreasingForRandomCurves) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> pts;
    double p = u(rng);
    for (int i = 0; i < 6; ++i) {
      pts.emplace_back(0.5 + 0.1 * i, p);
      p *= (u(rng) < 0.2) ? 0.0 : u(rng);
    }
    const auto table = FailureCurve::table(pts);
    const auto analytic = FailureCurve::analytic(u(rng) - 0.5, 2.0 * u(rng), 0.01 + u(rng));
    double prev_t = 2.0, prev_a = 2.0;
    for (double v = 0.45; v <= 1.1; v += 0.0037) {
      const double pt = table.probability(v, 0.95), pa = analytic.probability(v, 0.95);
      EXPECT_LE(pt, prev_t * (1 + 1e-12));
      EXPECT_LE(pa, prev_a * (1 + 1e-12));
      prev_t = pt;
      prev_a = pa;
    }
  }
}

TEST(FailureCurve, JsonRoundTrip) {
  for (const auto& c : {FailureCurve::zero(), FailureCurve::table({{0.6, 0.1}, {0.7, 0.0}}),
                        FailureCurve::analytic(0.1, 0.4, 0.03)}) {
    const auto back = FailureCurve::from_json(c.to_json());
    for (double v : {0.55, 0.6, 0.65, 0.7, 0.9}) EXPECT_EQ(back.probability(v, 0.95), c.probability(v, 0.95));
  }
  EXPECT_THROW(FailureCurve::from_json(nlohmann::json{{"spline", 1}}), std::invalid_argument);
}

TEST(FailureModel, EightTIsZeroAndSupportIsEnforced) {
  const auto m = flat_model(0.2, 0.1);
  for (double v : {0.5, 0.6, 0.75, 1.0}) {
    EXPECT_EQ(m.probability(BitcellKind::EightT, FailureType::ReadAccess, v), 0.0);
    EXPECT_EQ(m.probability(BitcellKind::EightT, FailureType::Write, v), 0.0);
  }
  EXPECT_EQ(failure_prob(m, BitcellKind::SixT, FailureType::ReadAccess, 0.6), 0.2);
  EXPECT_EQ(m.probability(BitcellKind::SixT, FailureType::ReadDisturb, 0.6), 0.0);
  EXPECT_THROW(m.probability(BitcellKind::SixT, FailureType::ReadAccess, 0.4), std::out_of_range);
  EXPECT_THROW(m.probability(BitcellKind::SixT, FailureType::ReadAccess, 1.2), std::out_of_range);
}

TEST(FailureModel, ShippedDefaultLoads) {
  const auto m = FailureModel::load(SYNMEM_DATA_DIR "/failure_model_default.json");
  EXPECT_EQ(m.vnom, 0.95);
  EXPECT_EQ(m.probability(BitcellKind::SixT, FailureType::ReadAccess, 0.95), 0.0);
  EXPECT_GT(m.probability(BitcellKind::SixT, FailureType::ReadAccess, 0.65),
            m.probability(BitcellKind::SixT, FailureType::Write, 0.65));
  const auto again = FailureModel::from_json(m.to_json());
  EXPECT_EQ(again.probability(BitcellKind::SixT, FailureType::Write, 0.62),
            m.probability(BitcellKind::SixT, FailureType::Write, 0.62));
}

TEST(MemoryLayout, ProtectedPositions) {
  EXPECT_EQ(protected_positions(MemoryLayout::hybrid_uniform(3), 0), (std::vector<unsigned>{7, 6, 5}));
  EXPECT_TRUE(protected_positions(MemoryLayout::all_six_t(), 2).empty());
  const auto banks = MemoryLayout::sensitivity_banks({2, 4, 2, 2, 3});
  EXPECT_EQ(protected_positions(banks, 1), (std::vector<unsigned>{7, 6, 5, 4}));
  EXPECT_EQ(banks.protected_mask(1), 0xF0);
  EXPECT_EQ(banks.six_t_mask(1), 0x0F);
  EXPECT_EQ(MemoryLayout::hybrid_uniform(8).six_t_mask(0), 0);
}

TEST(MemoryLayout, ParseAndLabel) {
  EXPECT_EQ(MemoryLayout::parse("all6t").label(), "all6t");
  EXPECT_EQ(MemoryLayout::parse("hybrid:3").label(), "hybrid:3");
  EXPECT_EQ(MemoryLayout::parse("banks:2,4,2,2,3").label(), "banks:2-4-2-2-3");
  EXPECT_EQ(MemoryLayout::parse("banks:2-4-2-2-3").profile(5), (std::vector<unsigned>{2, 4, 2, 2, 3}));
  EXPECT_EQ(MemoryLayout::parse("hybrid:0").profile(3), MemoryLayout::all_six_t().profile(3));
  EXPECT_THROW(MemoryLayout::parse("hybrid:9"), std::invalid_argument);
  EXPECT_THROW(MemoryLayout::parse("mixed"), std::invalid_argument);
  EXPECT_THROW(MemoryLayout::parse("banks:1-2").validate(3), std::invalid_argument);
}

TEST(SampleChip, ZeroProbabilityGivesEmptyMasks) {
  const std::vector<BankShape> shapes{{10, 10}, {10, 3}};
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 0), 0.6, shapes, 1);
  for (const auto& b : chip.banks) {
    EXPECT_EQ(popcount_all(b.read_mask), 0u);
    EXPECT_EQ(popcount_all(b.write_mask), 0u);
  }
}

TEST(SampleChip, AllEightTGivesEmptyMasksAtAnyVoltage) {
  const std::vector<BankShape> shapes{{30, 30}};
  FailureModel m;
  m.six_t.read_access = FailureCurve::table({{0.5, 0.4}, {1.0, 0.01}});
  m.six_t.write = FailureCurve::table({{0.5, 0.3}, {1.0, 0.01}});
  for (double v : {0.5, 0.6, 0.8, 1.0}) {
    const auto chip = sample_chip(MemoryLayout::hybrid_uniform(8), m, v, shapes, 5);
    EXPECT_EQ(popcount_all(chip.banks[0].read_mask), 0u);
    EXPECT_EQ(popcount_all(chip.banks[0].write_mask), 0u);
  }
}

TEST(SampleChip, ReadFaultRateWithinBinomialBound) {
  const std::vector<BankShape> shapes{{500, 250}};  // 10^6 bits
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0.01, 0), 0.6, shapes, 42);
  const double n = 1e6;
  EXPECT_NEAR(static_cast<double>(popcount_all(chip.banks[0].read_mask)), n * 0.01, three_sigma(n, 0.01));
  EXPECT_EQ(popcount_all(chip.banks[0].write_mask), 0u);
}

TEST(SampleChip, SameSeedIsBitIdentical) {
  const std::vector<BankShape> shapes{{40, 20}, {20, 5}};
  const auto m = flat_model(0.05, 0.02);
  const auto layout = MemoryLayout::sensitivity_banks({1, 3});
  EXPECT_EQ(sample_chip(layout, m, 0.6, shapes, 9), sample_chip(layout, m, 0.6, shapes, 9));
  EXPECT_NE(sample_chip(layout, m, 0.6, shapes, 9), sample_chip(layout, m, 0.6, shapes, 10));
}

TEST(SampleChip, RenormalizesWhenProbabilitiesExceedOne) {
  const std::vector<BankShape> shapes{{100, 100}};
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0.8, 0.6), 0.6, shapes, 3);
  EXPECT_TRUE(chip.renormalized);
  EXPECT_NEAR(chip.p_read + chip.p_write, 1.0, 1e-12);
  for (std::size_t w = 0; w < shapes[0].words(); ++w) {
    EXPECT_EQ(chip.banks[0].read_mask[w] | chip.banks[0].write_mask[w], 0xFF);
    EXPECT_EQ(chip.banks[0].read_mask[w] & chip.banks[0].write_mask[w], 0);
  }
}

TEST(SampleChip, VoltageOutsideSupportThrows) {
  const std::vector<BankShape> shapes{{2, 2}};
  EXPECT_THROW(sample_chip(MemoryLayout::all_six_t(), flat_model(0.1, 0.1), 0.3, shapes, 1), std::out_of_range);
}

TEST(WriteWeights, NoFaultsStoresIntendedPatterns) {
  const auto q = small_qnet();
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 0), 0.6, bank_shapes(q.arch), 1);
  const auto store = write_weights(chip, q, 3);
  for (std::size_t b = 0; b < q.qweights.size(); ++b) EXPECT_EQ(store.stored()[b], q.qweights[b]);
}

TEST(WriteWeights, FaultyBitsMatchIntendedHalfTheTime) {
  const auto q = small_qnet();
  const auto shapes = bank_shapes(q.arch);
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 1.0), 0.6, shapes, 1);
  std::size_t matches = 0, bits = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto store = write_weights(chip, q, seed);
    for (std::size_t b = 0; b < shapes.size(); ++b) {
      for (std::size_t i = 0; i < shapes[b].words(); ++i) {
        matches += 8 - std::popcount(static_cast<unsigned>((store.stored()[b].data[i] ^ q.qweights[b].data[i]) & 0xFF));
        bits += 8;
      }
    }
  }
  EXPECT_NEAR(static_cast<double>(matches), bits * 0.5, three_sigma(static_cast<double>(bits), 0.5));
}

TEST(WriteWeights, SameSeedSameStoredValues) {
  const auto q = small_qnet();
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 0.3), 0.6, bank_shapes(q.arch), 4);
  EXPECT_EQ(write_weights(chip, q, 8).stored(), write_weights(chip, q, 8).stored());
}

TEST(ReadWeight, StaticMaskFlipsBitsOfStoredWord) {
  const auto q = small_qnet();
  auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 0), 0.6, bank_shapes(q.arch), 1);
  auto stored = q.qweights;
  stored[0](0, 0) = 0x32;
  chip.banks[0].read_mask[0] = 0x80;
  const FaultyWeightStore store(chip, stored, AccessMode::StaticMask);
  EXPECT_EQ(read_weight(store, 0, 0, 0), 0xB2);
  EXPECT_EQ(q.format.decode(read_weight(store, 0, 0, 0)), -78);
  EXPECT_EQ(read_weight(store, 0, 0, 1), stored[0](0, 1));
}

TEST(ReadWeight, ProtectedMsbsNeverFlip) {
  const auto q = small_qnet();
  const auto chip =
      sample_chip(MemoryLayout::hybrid_uniform(3), flat_model(0.4, 0.2), 0.6, bank_shapes(q.arch), 6);
  for (const auto& b : chip.banks) {
    for (auto m : b.read_mask) EXPECT_EQ(m & 0xE0, 0);
  }
  const auto store = write_weights(chip, q, 6);
  for (std::size_t b = 0; b < q.qweights.size(); ++b) {
    for (std::size_t i = 0; i < q.qweights[b].size(); ++i) {
      const auto r = store.read(b, i / q.qweights[b].cols, i % q.qweights[b].cols);
      EXPECT_EQ(r & 0xE0, q.qweights[b].data[i] & 0xE0);
    }
  }
}

TEST(ReadWeight, BernoulliModeIsCounterBasedAndMatchesRate) {
  const auto q = quantize(init_network(NetworkArch{{200, 100, 4}}, 3), FixedPointFormat{8});
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0.05, 0), 0.6, bank_shapes(q.arch), 2);
  const auto store = write_weights(chip, q, 2, AccessMode::PerAccessBernoulli);
  EXPECT_FALSE(store.repeatable());
  std::vector<std::uint16_t> a(q.qweights[0].size()), b(a.size()), c(a.size());
  store.fetch_bank(0, 7, a);
  store.fetch_bank(0, 7, b);
  store.fetch_bank(0, 8, c);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < a.size(); ++i) flips += std::popcount(static_cast<unsigned>(a[i] ^ q.qweights[0].data[i]));
  const double n = 8.0 * a.size();
  EXPECT_NEAR(static_cast<double>(flips), n * 0.05, three_sigma(n, 0.05));
}

TEST(ReadWeight, EmptyMasksReadStoredPattern) {
  const auto q = small_qnet();
  const auto chip = sample_chip(MemoryLayout::all_six_t(), flat_model(0, 0), 0.6, bank_shapes(q.arch), 1);
  for (auto mode : {AccessMode::StaticMask, AccessMode::PerAccessBernoulli}) {
    const auto store = write_weights(chip, q, 1, mode);
    EXPECT_TRUE(store.repeatable());
    std::vector<std::uint16_t> out(q.qweights[1].size());
    store.fetch_bank(1, 3, out);
    EXPECT_EQ(out, q.qweights[1].data);
  }
}

TEST(AccessMode, ParseAndPrint) {
  EXPECT_EQ(parse_access_mode("static"), AccessMode::StaticMask);
  EXPECT_EQ(parse_access_mode("bernoulli"), AccessMode::PerAccessBernoulli);
  EXPECT_EQ(to_string(AccessMode::PerAccessBernoulli), "bernoulli");
  EXPECT_THROW(parse_access_mode("sometimes"), std::invalid_argument);
}
