#include "synmem/selftest.hpp"

#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "synmem/dataset.hpp"
#include "synmem/faultmem.hpp"
#include "synmem/powerarea.hpp"
#include "synmem/quantnet.hpp"

namespace synmem {

namespace {

struct Check {
  std::string name;
  std::function<std::string()> run;  // empty string on success
};

std::string gradient_check() {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NetworkArch arch{{3, 3, 2}};
    auto net = init_network(arch, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& b : net.biases) {
      for (auto& v : b) v = u(rng);
    }
    auto data = gen_synthetic(2, 3, 4, seed + 10);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto g = backprop_gradients(net, data, idx);
    for (std::size_t b = 0; b < net.weights.size(); ++b) {
      for (std::size_t i = 0; i < net.weights[b].size(); ++i) {
        auto plus = net, minus = net;
        plus.weights[b].data[i] += 1e-5;
        minus.weights[b].data[i] -= 1e-5;
        const double fd = (mse_loss(plus, data, idx) - mse_loss(minus, data, idx)) / 2e-5;
        const double an = g.weights[b].data[i];
        const double rel = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
        if (rel > 1e-4) return "relative error " + std::to_string(rel) + " in bank " + std::to_string(b);
      }
    }
  }
  return {};
}

std::string quantization_roundtrip() {
  const auto net = init_network(NetworkArch{{16, 8, 4}}, 3);
  const auto q = quantize(net, FixedPointFormat{8});
  for (std::size_t b = 0; b < net.weights.size(); ++b) {
    for (std::size_t i = 0; i < net.weights[b].size(); ++i) {
      const double err = std::abs(q.format.decode(q.qweights[b].data[i]) * q.scales[b] - net.weights[b].data[i]);
      if (err > q.scales[b] / 2 * (1 + 1e-12)) return "error exceeds half a step";
    }
  }
  return {};
}

std::string mask_invariants() {
  std::mt19937_64 rng(5);
  FailureModel model;
  model.six_t.read_access = FailureCurve::table({{0.6, 0.3}});
  model.six_t.write = FailureCurve::table({{0.6, 0.2}});
  const std::vector<BankShape> shapes{{8, 8}, {8, 4}, {4, 2}};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<unsigned> ks(3);
    for (auto& k : ks) k = static_cast<unsigned>(rng() % 9);
    const auto layout = MemoryLayout::sensitivity_banks(ks);
    const auto chip = sample_chip(layout, model, 0.6, shapes, rng());
    for (std::size_t b = 0; b < shapes.size(); ++b) {
      for (std::size_t w = 0; w < shapes[b].words(); ++w) {
        const auto r = chip.banks[b].read_mask[w], wr = chip.banks[b].write_mask[w];
        if (r & wr) return "read and write masks overlap";
        if ((r | wr) & layout.protected_mask(b)) return "fault at an 8T position";
      }
    }
  }
  return {};
}

std::string fault_rate() {
  FailureModel model;
  model.six_t.read_access = FailureCurve::table({{0.6, 0.01}});
  const std::vector<BankShape> shapes{{250, 100}};  // 200k 6T bits
  const auto chip = sample_chip(MemoryLayout::all_six_t(), model, 0.6, shapes, 11);
  std::size_t flips = 0;
  for (auto m : chip.banks[0].read_mask) flips += std::popcount(m);
  const double n = 2e5, p = 0.01;
  if (std::abs(flips - n * p) > 4 * std::sqrt(n * p * (1 - p))) return "popcount " + std::to_string(flips);
  return {};
}

std::string power_closed_forms() {
  const PowerParams params;
  const std::vector<BankShape> one_word{{1, 1}};
  const AccessTrace trace{{1, 0}};
  const auto six = aggregate(params, MemoryLayout::all_six_t(), one_word, trace, params.vnom);
  const auto hyb = aggregate(params, MemoryLayout::hybrid_uniform(3), one_word, trace, params.vnom);
  if (six.read_power != 8.0) return "all-6T read power " + std::to_string(six.read_power);
  if (hyb.read_power != 5.0 + 3 * 1.2) return "hybrid read power " + std::to_string(hyb.read_power);
  const auto a = area(params, MemoryLayout::hybrid_uniform(3), one_word);
  if (std::abs(a.overhead_fraction - 0.13875) > 1e-12) return "hybrid:3 area overhead";
  return {};
}

std::string write_identity() {
  const auto q = quantize(init_network(NetworkArch{{6, 4, 3}}, 2), FixedPointFormat{8});
  FailureModel model;
  const auto chip = sample_chip(MemoryLayout::all_six_t(), model, 0.7, bank_shapes(q.arch), 1);
  const auto store = write_weights(chip, q, 1);
  for (std::size_t b = 0; b < q.qweights.size(); ++b) {
    if (!(store.stored()[b] == q.qweights[b])) return "stored patterns differ without faults";
  }
  return {};
}

}  // namespace

int run_selftest(std::ostream& out) {
  const Check checks[] = {
      {"sigmoid", [] { return std::abs(sigmoid(2.0) - 0.88079707797788) < 1e-12 && sigmoid(0.0) == 0.5 ? "" : "value"; }},
      {"backprop matches finite differences", gradient_check},
      {"quantization round trip", quantization_roundtrip},
      {"fault masks disjoint and outside 8T bits", mask_invariants},
      {"read-fault rate within binomial bound", fault_rate},
      {"power and area closed forms", power_closed_forms},
      {"fault-free load is identity", write_identity},
  };
  int failures = 0;
  for (const auto& c : checks) {
    std::string err;
    try {
      err = c.run();
    } catch (const std::exception& e) {
      err = std::string("exception: ") + e.what();
    }
    if (err.empty()) {
      out << "[pass] " << c.name << '\n';
    } else {
      out << "[FAIL] " << c.name << ": " << err << '\n';
      ++failures;
    }
  }
  return failures;
}

}  // namespace synmem
