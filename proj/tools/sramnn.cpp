// sramnn: train, quantize and stress a feedforward network stored in
// voltage-scaled hybrid 8T-6T SRAM.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "synmem/experiment.hpp"
#include "synmem/selftest.hpp"

namespace fs = std::filesystem;
using namespace synmem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned jobs = 1;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "override the master seed");
  cmd->add_option("--out", opt.out, "output directory (also caches the trained network)");
  cmd->add_option("--jobs", opt.jobs, "worker threads for Monte Carlo chips")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", opt.mode, "read-failure semantics")->check(CLI::IsMember({"static", "bernoulli"}));
}

ExperimentConfig load_config(const Options& opt) {
  auto cfg = ExperimentConfig::load(opt.config);
  if (opt.seed) cfg.master_seed = *opt.seed;
  if (opt.mode) cfg.access_mode = parse_access_mode(*opt.mode);
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

Experiment prepared(const Options& opt) {
  Experiment exp(load_config(opt));
  exp.prepare(opt.out, &std::cerr);
  std::cout << std::fixed << std::setprecision(4) << "float accuracy     " << exp.float_accuracy() << "\n"
            << "quantized accuracy " << exp.reference_accuracy() << " (" << exp.config().format.total_bits
            << "-bit)\n";
  return exp;
}

int cmd_quantize(const Options& opt) {
  const auto exp = prepared(opt);
  const fs::path path = fs::path(opt.out) / "quantized_net.json";
  fs::create_directories(opt.out);
  save_quantized(exp.network(), path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_sweep(const Options& opt) {
  const auto exp = prepared(opt);
  const fs::path dir(opt.out);
  auto csv = open_out(dir / "sweep.csv");
  const auto result = exp.sweep(opt.jobs, &csv);
  open_out(dir / "sweep.json") << to_json(result).dump(2) << '\n';
  for (const auto& r : result.rows) {
    if (!r.error.empty()) {
      std::cerr << "error at " << r.voltage << " V, " << r.layout << ": " << r.error << "\n";
      return 1;
    }
    if (r.renormalized) std::cerr << "warning: failure probabilities renormalized at " << r.voltage << " V\n";
  }
  std::cout << "wrote " << (dir / "sweep.csv").string() << " (" << result.rows.size() << " points)\n";
  return 0;
}

int cmd_profiles(const Options& opt) {
  const auto exp = prepared(opt);
  const auto report = exp.compare_sensitivity_profiles(exp.config().profiles, opt.jobs);
  const fs::path dir(opt.out);
  auto csv = open_out(dir / "profiles.csv");
  csv << csv_header() << ",kind,pareto\n";
  for (const auto& r : report.rows) {
    csv << csv_row(r.run, exp.config().master_seed) << ',' << (r.reference ? "reference" : "profile") << ','
        << (r.pareto ? 1 : 0) << '\n';
  }
  open_out(dir / "profiles.json") << to_json(report).dump(2) << '\n';

  std::cout << "at " << report.voltage << " V (fault-free " << report.reference_accuracy << "):\n";
  for (const auto& r : report.rows) {
    std::cout << "  " << std::left << std::setw(18) << r.run.layout << std::right << " acc " << r.run.accuracy.mean
              << "  savings " << std::setprecision(2) << r.run.savings.total_pct << "%  area +"
              << 100.0 * r.run.power.area_overhead << "%" << (r.pareto ? "  *" : "") << std::setprecision(4) << "\n";
  }
  return 0;
}

int cmd_power(const Options& opt) {
  const Experiment exp(load_config(opt));
  const auto& cfg = exp.config();
  const auto baseline = exp.power_report(exp.layout(cfg.baseline.layout), cfg.baseline.voltage);
  auto csv = open_out(fs::path(opt.out) / "power.csv");
  csv << csv_header() << '\n';
  for (double v : cfg.voltages) {
    for (const auto& text : cfg.layouts) {
      const auto report = exp.power_report(exp.layout(text), v);
      const auto line = power_csv_row(v, text, report, savings(report, baseline), cfg.master_seed);
      csv << line << '\n';
      std::cout << line << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid 8T-6T SRAM synaptic storage simulator"};
  app.require_subcommand(1);
  Options opt;

  auto* train = app.add_subcommand("train", "train the float network and cache it in --out");
  auto* quant = app.add_subcommand("quantize", "train (or load) and write the fixed-point network");
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo accuracy/power/area over voltages x layouts");
  auto* profiles = app.add_subcommand("profiles", "compare per-bank sensitivity profiles");
  auto* power = app.add_subcommand("power", "closed-form power and area only");
  auto* selftest = app.add_subcommand("selftest", "run the fast property checks");
  for (auto* cmd : {train, quant, sweep, profiles, power}) add_common(cmd, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      prepared(opt);
      return 0;
    }
    if (*quant) return cmd_quantize(opt);
    if (*sweep) return cmd_sweep(opt);
    if (*profiles) return cmd_profiles(opt);
    if (*power) return cmd_power(opt);
    if (*selftest) return run_selftest(std::cout) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
