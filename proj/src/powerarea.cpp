#include "synmem/powerarea.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace synmem {

void PowerParams::validate() const {
  const double positives[] = {vnom,          read_power,      write_power,  leakage_power, dynamic_exponent, v_leak,
                              eight_t_read, eight_t_write, eight_t_leakage, six_t_area,  eight_t_area,    leakage_weight};
  for (double v : positives) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("power parameters must be positive and finite");
  }
}

PowerParams PowerParams::from_json(const nlohmann::json& j) {
  PowerParams p;
  p.vnom = j.value("vnom", p.vnom);
  p.read_power = j.value("read_power", p.read_power);
  p.write_power = j.value("write_power", p.write_power);
  p.leakage_power = j.value("leakage_power", p.leakage_power);
  p.dynamic_exponent = j.value("dynamic_exponent", p.dynamic_exponent);
  p.v_leak = j.value("v_leak", p.v_leak);
  p.eight_t_read = j.value("eight_t_read", p.eight_t_read);
  p.eight_t_write = j.value("eight_t_write", p.eight_t_write);
  p.eight_t_leakage = j.value("eight_t_leakage", p.eight_t_leakage);
  p.six_t_area = j.value("six_t_area", p.six_t_area);
  p.eight_t_area = j.value("eight_t_area", p.eight_t_area);
  p.leakage_weight = j.value("leakage_weight", p.leakage_weight);
  p.validate();
  return p;
}

PowerParams PowerParams::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open power parameters " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

nlohmann::json PowerParams::to_json() const {
  return {{"vnom", vnom},
          {"read_power", read_power},
          {"write_power", write_power},
          {"leakage_power", leakage_power},
          {"dynamic_exponent", dynamic_exponent},
          {"v_leak", v_leak},
          {"eight_t_read", eight_t_read},
          {"eight_t_write", eight_t_write},
          {"eight_t_leakage", eight_t_leakage},
          {"six_t_area", six_t_area},
          {"eight_t_area", eight_t_area},
          {"leakage_weight", leakage_weight}};
}

double cell_power(const PowerParams& params, BitcellKind kind, PowerOp op, double volts) {
  if (!(volts > 0.0)) throw std::invalid_argument("supply voltage must be positive");
  const double ratio = volts / params.vnom;
  const bool eight = kind == BitcellKind::EightT;
  switch (op) {
    case PowerOp::Read:
      return params.read_power * std::pow(ratio, params.dynamic_exponent) * (eight ? params.eight_t_read : 1.0);
    case PowerOp::Write:
      return params.write_power * std::pow(ratio, params.dynamic_exponent) * (eight ? params.eight_t_write : 1.0);
    case PowerOp::Leak:
      return params.leakage_power * ratio * std::exp((volts - params.vnom) / params.v_leak) *
             (eight ? params.eight_t_leakage : 1.0);
  }
  throw std::invalid_argument("unknown power operation");
}

AccessTrace uniform_trace(std::span<const BankShape> shapes, std::uint64_t reads_per_word,
                          std::uint64_t writes_per_word) {
  AccessTrace trace;
  for (const auto& s : shapes) trace.push_back({s.words() * reads_per_word, s.words() * writes_per_word});
  return trace;
}

AreaReport area(const PowerParams& params, const MemoryLayout& layout, std::span<const BankShape> shapes) {
  layout.validate(shapes.size());
  AreaReport r;
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    const double words = static_cast<double>(shapes[b].words());
    const unsigned eight = layout.protected_count(b);
    const unsigned six = static_cast<unsigned>(layout.word_bits()) - eight;
    r.area_units += words * (six * params.six_t_area + eight * params.eight_t_area);
    r.all_six_t_units += words * layout.word_bits() * params.six_t_area;
  }
  r.overhead_fraction = r.all_six_t_units > 0.0 ? r.area_units / r.all_six_t_units - 1.0 : 0.0;
  return r;
}

PowerAreaReport aggregate(const PowerParams& params, const MemoryLayout& layout, std::span<const BankShape> shapes,
                          const AccessTrace& trace, double volts) {
  if (trace.size() != shapes.size()) {
    throw std::invalid_argument("access trace has " + std::to_string(trace.size()) + " banks, layout has " +
                                std::to_string(shapes.size()));
  }
  layout.validate(shapes.size());
  const double read6 = cell_power(params, BitcellKind::SixT, PowerOp::Read, volts);
  const double read8 = cell_power(params, BitcellKind::EightT, PowerOp::Read, volts);
  const double write6 = cell_power(params, BitcellKind::SixT, PowerOp::Write, volts);
  const double write8 = cell_power(params, BitcellKind::EightT, PowerOp::Write, volts);
  const double leak6 = cell_power(params, BitcellKind::SixT, PowerOp::Leak, volts);
  const double leak8 = cell_power(params, BitcellKind::EightT, PowerOp::Leak, volts);

  PowerAreaReport r;
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    const double eight = layout.protected_count(b);
    const double six = layout.word_bits() - eight;
    const double words = static_cast<double>(shapes[b].words());
    r.read_power += static_cast<double>(trace[b].reads) * (six * read6 + eight * read8);
    r.write_power += static_cast<double>(trace[b].writes) * (six * write6 + eight * write8);
    r.leakage_power += words * (six * leak6 + eight * leak8);
  }
  r.leakage_power *= params.leakage_weight;
  r.total = r.read_power + r.write_power + r.leakage_power;
  const auto a = area(params, layout, shapes);
  r.area_units = a.area_units;
  r.area_overhead = a.overhead_fraction;
  return r;
}

namespace {

double reduction_pct(double candidate, double baseline, const char* what) {
  if (baseline == 0.0) {
    if (candidate == 0.0) return 0.0;
    throw std::domain_error(std::string("baseline ") + what + " power is zero");
  }
  return 100.0 * (1.0 - candidate / baseline);
}

}  // namespace

Savings savings(const PowerAreaReport& candidate, const PowerAreaReport& baseline) {
  return {reduction_pct(candidate.read_power, baseline.read_power, "read"),
          reduction_pct(candidate.write_power, baseline.write_power, "write"),
          reduction_pct(candidate.leakage_power, baseline.leakage_power, "leakage"),
          reduction_pct(candidate.total, baseline.total, "total")};
}

}  // namespace synmem
