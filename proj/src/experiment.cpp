#include "synmem/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "synmem/seeding.hpp"

namespace synmem {

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, jobs);
  if (jobs == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto threads = std::min<std::size_t>(jobs, count);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double AccuracyStats::sem(std::size_t n) const { return n == 0 ? 0.0 : stddev / std::sqrt(static_cast<double>(n)); }

AccuracyStats summarize(const std::vector<double>& values) {
  AccuracyStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.min = *std::min_element(values.begin(), values.end());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::uint64_t chip_seed(std::uint64_t master, double volts, const std::vector<unsigned>& profile, std::size_t index) {
  std::string digest;
  for (auto k : profile) digest += std::to_string(k) + ",";
  return derive_seed({master, voltage_key(volts), fnv1a(digest), index});
}

// ---------------------------------------------------------------------------

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) { config_.validate(); }

namespace {

void load_datasets(const ExperimentConfig& cfg, Dataset& train, Dataset& test) {
  if (cfg.dataset.idx) {
    const auto& idx = *cfg.dataset.idx;
    train = load_idx(idx.train_images, idx.train_labels, Split::Train, idx.train_limit);
    test = load_idx(idx.test_images, idx.test_labels, Split::Test, idx.test_limit);
  } else {
    SyntheticSpec spec = cfg.dataset.synthetic.spec;
    spec.n = cfg.dataset.synthetic.train;
    train = gen_synthetic(spec, Split::Train);
    spec.n = cfg.dataset.synthetic.test;
    test = gen_synthetic(spec, Split::Test);
  }
  train.validate(cfg.arch);
  test.validate(cfg.arch);
  if (test.size() == 0) throw std::invalid_argument("test split is empty");
}

}  // namespace

void Experiment::prepare(const std::filesystem::path& cache_dir, std::ostream* log) {
  load_datasets(config_, train_, test_);
  const std::string key = config_.training_key();
  std::filesystem::path cache;
  if (!cache_dir.empty()) cache = cache_dir / ("float_net_" + key + ".json");

  if (!cache.empty() && std::filesystem::exists(cache)) {
    std::string cached_key;
    auto net = load_network(cache, &cached_key);
    if (cached_key == key && net.arch == config_.arch) {
      if (log) *log << "loaded cached network " << cache.string() << "\n";
      float_net_ = std::move(net);
      finish_prepare();
      return;
    }
  }

  if (log) {
    *log << "training " << config_.arch.to_string() << " on " << train_.size() << " samples for "
         << config_.training.epochs << " epochs\n";
  }
  float_net_ = train_backprop(init_network(config_.arch, derive_seed({config_.training.seed, 0x696e6974ull})), train_,
                              config_.training);
  if (!cache.empty()) {
    std::filesystem::create_directories(cache.parent_path());
    save_network(float_net_, cache, key);
    if (log) *log << "cached network at " << cache.string() << "\n";
  }
  finish_prepare();
}

void Experiment::prepare_with(FloatNetwork net) {
  if (!(net.arch == config_.arch)) throw std::invalid_argument("network architecture differs from the config");
  load_datasets(config_, train_, test_);
  float_net_ = std::move(net);
  finish_prepare();
}

void Experiment::finish_prepare() {
  qnet_ = quantize(float_net_, config_.format);
  float_accuracy_ = evaluate(float_net_, test_).accuracy();
  reference_accuracy_ = evaluate(qnet_, test_, PassThroughSource(qnet_)).accuracy();
  baseline_power_ = power_report(layout(config_.baseline.layout), config_.baseline.voltage);
  prepared_ = true;
}

MemoryLayout Experiment::layout(const std::string& text) const {
  auto l = MemoryLayout::parse(text, config_.format.total_bits);
  l.validate(config_.arch.bank_count());
  return l;
}

PowerAreaReport Experiment::power_report(const MemoryLayout& layout, double volts) const {
  const auto s = shapes();
  return aggregate(config_.power, layout, s, uniform_trace(s, config_.reads_per_word, config_.writes_per_word), volts);
}

double Experiment::chip_accuracy(const MemoryLayout& layout, double volts, std::uint64_t seed) const {
  if (!prepared_) throw std::logic_error("Experiment::prepare must run before evaluating chips");
  const auto s = shapes();
  const auto chip = sample_chip(layout, config_.failure_model, volts, s, seed);
  const auto store = write_weights(chip, qnet_, derive_seed({seed, 0x6c6f6164ull}), config_.access_mode);
  return evaluate(qnet_, test_, store).accuracy();
}

RunRow Experiment::run_point(double volts, const MemoryLayout& layout, unsigned jobs) const {
  if (!prepared_) throw std::logic_error("Experiment::prepare must run before run_point");
  RunRow row;
  row.voltage = volts;
  row.layout = layout.label();
  row.chips = config_.chips_per_point;
  const auto profile = layout.profile(config_.arch.bank_count());
  row.chip_seeds.resize(row.chips);
  for (std::size_t i = 0; i < row.chips; ++i) row.chip_seeds[i] = chip_seed(config_.master_seed, volts, profile, i);

  row.chip_accuracy.assign(row.chips, 0.0);
  parallel_for(row.chips, jobs, [&](std::size_t i) { row.chip_accuracy[i] = chip_accuracy(layout, volts, row.chip_seeds[i]); });
  row.accuracy = summarize(row.chip_accuracy);

  const auto& m = config_.failure_model;
  row.renormalized = m.probability(BitcellKind::SixT, FailureType::ReadAccess, volts) +
                         m.probability(BitcellKind::SixT, FailureType::Write, volts) +
                         m.probability(BitcellKind::SixT, FailureType::ReadDisturb, volts) >
                     1.0;
  row.power = power_report(layout, volts);
  row.savings = savings(row.power, baseline_power_);
  return row;
}

SweepResult Experiment::sweep(unsigned jobs, std::ostream* csv) const {
  SweepResult result;
  result.config_hash = config_.hash();
  result.master_seed = config_.master_seed;
  result.float_accuracy = float_accuracy_;
  result.reference_accuracy = reference_accuracy_;
  if (csv) *csv << csv_header() << '\n' << std::flush;
  for (double v : config_.voltages) {
    for (const auto& text : config_.layouts) {
      RunRow row;
      try {
        row = run_point(v, layout(text), jobs);
      } catch (const std::exception& e) {
        row = RunRow{};
        row.voltage = v;
        row.layout = text;
        row.error = e.what();
      }
      if (csv) *csv << csv_row(row, config_.master_seed) << '\n' << std::flush;
      result.rows.push_back(std::move(row));
      if (!result.rows.back().error.empty()) return result;
    }
  }
  return result;
}

ProfileReport Experiment::compare_sensitivity_profiles(const std::vector<std::vector<unsigned>>& profiles,
                                                       unsigned jobs) const {
  const std::size_t banks = config_.arch.bank_count();
  for (const auto& p : profiles) {
    if (p.size() != banks) {
      throw std::invalid_argument(fmt::format("profile has {} entries, network has {} banks", p.size(), banks));
    }
  }
  ProfileReport report;
  report.voltage = config_.profile_voltage;
  report.reference_accuracy = reference_accuracy_;
  for (const auto& p : profiles) {
    const auto l = MemoryLayout::sensitivity_banks(p, config_.format.total_bits);
    report.rows.push_back({run_point(report.voltage, l, jobs), p, false, false});
  }
  for (const auto& text : config_.profile_references) {
    const auto l = layout(text);
    report.rows.push_back({run_point(report.voltage, l, jobs), l.profile(banks), true, false});
  }

  auto& rows = report.rows;
  for (auto& r : rows) {
    r.pareto = std::none_of(rows.begin(), rows.end(), [&](const ProfileRow& o) {
      const bool no_worse = o.run.accuracy.mean >= r.run.accuracy.mean &&
                            o.run.savings.total_pct >= r.run.savings.total_pct &&
                            o.run.power.area_overhead <= r.run.power.area_overhead;
      const bool better = o.run.accuracy.mean > r.run.accuracy.mean ||
                          o.run.savings.total_pct > r.run.savings.total_pct ||
                          o.run.power.area_overhead < r.run.power.area_overhead;
      return no_worse && better;
    });
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ProfileRow& a, const ProfileRow& b) {
    return a.run.power.area_overhead < b.run.power.area_overhead;
  });
  return report;
}

// ---------------------------------------------------------------------------
// Output

std::string csv_header() {
  return "voltage_v,layout,chips,acc_mean,acc_std,acc_min,read_pw,write_pw,leak_pw,total_pw,savings_total_pct,"
         "area_units,area_overhead_pct,seed";
}

std::string csv_row(const RunRow& row, std::uint64_t seed) {
  if (!row.error.empty()) {
    return fmt::format("{},{},0,nan,nan,nan,nan,nan,nan,nan,nan,nan,nan,{}", row.voltage, row.layout, seed);
  }
  return fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.4f},{:.4f},{:.4f},{}", row.voltage,
                     row.layout, row.chips, row.accuracy.mean, row.accuracy.stddev, row.accuracy.min,
                     row.power.read_power, row.power.write_power, row.power.leakage_power, row.power.total,
                     row.savings.total_pct, row.power.area_units, 100.0 * row.power.area_overhead, seed);
}

std::string power_csv_row(double volts, const std::string& layout, const PowerAreaReport& report,
                          const Savings& savings, std::uint64_t seed) {
  return fmt::format("{},{},0,,,,{:.6f},{:.6f},{:.6f},{:.6f},{:.4f},{:.4f},{:.4f},{}", volts, layout,
                     report.read_power, report.write_power, report.leakage_power, report.total, savings.total_pct,
                     report.area_units, 100.0 * report.area_overhead, seed);
}

nlohmann::json to_json(const RunRow& row) {
  nlohmann::json j = {{"voltage_v", row.voltage},
                      {"layout", row.layout},
                      {"chips", row.chips},
                      {"acc_mean", row.accuracy.mean},
                      {"acc_std", row.accuracy.stddev},
                      {"acc_min", row.accuracy.min},
                      {"chip_accuracy", row.chip_accuracy},
                      {"chip_seeds", row.chip_seeds},
                      {"power",
                       {{"read", row.power.read_power},
                        {"write", row.power.write_power},
                        {"leakage", row.power.leakage_power},
                        {"total", row.power.total}}},
                      {"savings_pct",
                       {{"read", row.savings.read_pct},
                        {"write", row.savings.write_pct},
                        {"leakage", row.savings.leakage_pct},
                        {"total", row.savings.total_pct}}},
                      {"area_units", row.power.area_units},
                      {"area_overhead_pct", 100.0 * row.power.area_overhead},
                      {"renormalized", row.renormalized}};
  if (!row.error.empty()) j["error"] = row.error;
  return j;
}

nlohmann::json to_json(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) rows.push_back(to_json(r));
  return {{"config_hash", result.config_hash},
          {"master_seed", result.master_seed},
          {"float_accuracy", result.float_accuracy},
          {"reference_accuracy", result.reference_accuracy},
          {"rows", rows}};
}

nlohmann::json to_json(const ProfileReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    auto j = to_json(r.run);
    j["k_per_bank"] = r.k_per_bank;
    j["reference"] = r.reference;
    j["pareto"] = r.pareto;
    rows.push_back(std::move(j));
  }
  return {{"voltage_v", report.voltage}, {"reference_accuracy", report.reference_accuracy}, {"rows", rows}};
}

void save_network(const FloatNetwork& net, const std::filesystem::path& path, const std::string& key) {
  nlohmann::json j;
  j["format"] = "synmem-float-network";
  j["key"] = key;
  j["arch"] = net.arch.layer_sizes;
  j["weights"] = nlohmann::json::array();
  for (const auto& w : net.weights) j["weights"].push_back(w.data);
  j["biases"] = net.biases;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

FloatNetwork load_network(const std::filesystem::path& path, std::string* key) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "synmem-float-network") throw std::runtime_error(path.string() + ": not a network file");
  FloatNetwork net;
  net.arch.layer_sizes = j.at("arch").get<std::vector<std::size_t>>();
  net.arch.validate();
  const auto& weights = j.at("weights");
  for (std::size_t b = 0; b < net.arch.bank_count(); ++b) {
    Matrix<double> w(net.arch.fan_in(b), net.arch.fan_out(b));
    w.data = weights.at(b).get<std::vector<double>>();
    if (w.data.size() != w.rows * w.cols) throw std::runtime_error(path.string() + ": weight bank size mismatch");
    net.weights.push_back(std::move(w));
  }
  net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  net.validate();
  if (key) *key = j.value("key", "");
  return net;
}

void save_quantized(const QuantizedNetwork& net, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "synmem-quantized-network";
  j["arch"] = net.arch.layer_sizes;
  j["word_bits"] = net.format.total_bits;
  j["scales"] = net.scales;
  j["weights"] = nlohmann::json::array();
  for (const auto& q : net.qweights) {
    std::vector<std::int32_t> values(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) values[i] = net.format.decode(q.data[i]);
    j["weights"].push_back(std::move(values));
  }
  j["biases"] = net.biases;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace synmem
