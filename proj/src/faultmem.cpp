#include "synmem/faultmem.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "synmem/seeding.hpp"

namespace synmem {

double sigma_vt(const VtVariationParams& p) {
  if (!(p.sigma_vt0 > 0.0 && p.length > 0.0 && p.width > 0.0 && p.min_length > 0.0 && p.min_width > 0.0)) {
    throw std::invalid_argument("sigma_vt: all sizes and sigma_vt0 must be strictly positive");
  }
  if (p.length < p.min_length || p.width < p.min_width) {
    throw std::invalid_argument("sigma_vt: device is smaller than the technology minimum");
  }
  return p.sigma_vt0 * std::sqrt((p.min_length / p.length) * (p.min_width / p.width));
}

// ---------------------------------------------------------------------------
// FailureCurve

FailureCurve FailureCurve::table(std::vector<std::pair<double, double>> points) {
  if (points.empty()) throw std::invalid_argument("failure table is empty");
  std::sort(points.begin(), points.end());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [v, p] = points[i];
    if (!std::isfinite(v) || !(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("failure table entry " + std::to_string(i) + " is out of range");
    }
    if (i > 0) {
      if (v == points[i - 1].first) throw std::invalid_argument("failure table repeats voltage " + std::to_string(v));
      if (p > points[i - 1].second) {
        throw std::invalid_argument("failure table must be non-increasing in voltage (at " + std::to_string(v) + " V)");
      }
    }
  }
  return FailureCurve{Table{std::move(points)}};
}

FailureCurve FailureCurve::analytic(double mu0, double slope, double sigma_m) {
  if (!(sigma_m > 0.0) || !std::isfinite(mu0)) throw std::invalid_argument("analytic margin needs sigma_m > 0");
  if (!(slope >= 0.0)) throw std::invalid_argument("analytic margin slope must be >= 0 for a monotone curve");
  return FailureCurve{AnalyticMargin{mu0, slope, sigma_m}};
}

double FailureCurve::probability(double volts, double vnom) const {
  if (const auto* t = std::get_if<Table>(&curve_)) {
    const auto& pts = t->points;
    if (volts <= pts.front().first) return pts.front().second;
    if (volts >= pts.back().first) return pts.back().second;
    const auto hi = std::upper_bound(pts.begin(), pts.end(), volts,
                                     [](double v, const auto& pt) { return v < pt.first; });
    const auto lo = hi - 1;
    if (volts == lo->first) return lo->second;
    const double frac = (volts - lo->first) / (hi->first - lo->first);
    if (lo->second > 0.0 && hi->second > 0.0) {
      return std::exp(std::log(lo->second) + frac * (std::log(hi->second) - std::log(lo->second)));
    }
    return lo->second + frac * (hi->second - lo->second);
  }
  if (const auto* a = std::get_if<AnalyticMargin>(&curve_)) {
    const double margin = a->mu0 + a->slope * (volts - vnom);
    // Phi(-m/s) = erfc(m / (s * sqrt 2)) / 2
    return 0.5 * std::erfc(margin / (a->sigma_m * std::sqrt(2.0)));
  }
  return 0.0;
}

FailureCurve FailureCurve::from_json(const nlohmann::json& j) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "zero")) return zero();
  if (!j.is_object()) throw std::invalid_argument("failure curve must be an object or \"zero\"");
  if (j.contains("table")) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : j.at("table")) {
      if (!row.is_array() || row.size() != 2) throw std::invalid_argument("table rows are [volts, probability]");
      pts.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    return table(std::move(pts));
  }
  if (j.contains("analytic")) {
    const auto& a = j.at("analytic");
    return analytic(a.at("mu0").get<double>(), a.at("slope").get<double>(), a.at("sigma_m").get<double>());
  }
  if (j.value("zero", false)) return zero();
  throw std::invalid_argument("failure curve needs one of: table, analytic, zero");
}

nlohmann::json FailureCurve::to_json() const {
  if (const auto* t = std::get_if<Table>(&curve_)) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [v, p] : t->points) rows.push_back({v, p});
    return {{"table", rows}};
  }
  if (const auto* a = std::get_if<AnalyticMargin>(&curve_)) {
    return {{"analytic", {{"mu0", a->mu0}, {"slope", a->slope}, {"sigma_m", a->sigma_m}}}};
  }
  return "zero";
}

const FailureCurve& CellFailureCurves::get(FailureType type) const {
  switch (type) {
    case FailureType::ReadAccess: return read_access;
    case FailureType::Write: return write;
    case FailureType::ReadDisturb: return read_disturb;
  }
  throw std::invalid_argument("unknown failure type");
}

// ---------------------------------------------------------------------------
// FailureModel

double FailureModel::probability(BitcellKind kind, FailureType type, double volts) const {
  if (!(volts >= v_min && volts <= v_max)) {
    std::ostringstream os;
    os << "voltage " << volts << " V outside the failure model support [" << v_min << ", " << v_max << "]";
    throw std::out_of_range(os.str());
  }
  const auto& cells = kind == BitcellKind::SixT ? six_t : eight_t;
  return cells.get(type).probability(volts, vnom);
}

namespace {

CellFailureCurves cell_curves_from_json(const nlohmann::json& j) {
  CellFailureCurves c;
  if (j.is_null()) return c;
  c.read_access = FailureCurve::from_json(j.value("read_access", nlohmann::json()));
  c.write = FailureCurve::from_json(j.value("write", nlohmann::json()));
  c.read_disturb = FailureCurve::from_json(j.value("read_disturb", nlohmann::json()));
  return c;
}

nlohmann::json cell_curves_to_json(const CellFailureCurves& c) {
  return {{"read_access", c.read_access.to_json()},
          {"write", c.write.to_json()},
          {"read_disturb", c.read_disturb.to_json()}};
}

}  // namespace

FailureModel FailureModel::from_json(const nlohmann::json& j) {
  FailureModel m;
  m.vnom = j.value("vnom", 0.95);
  if (j.contains("support")) {
    const auto& s = j.at("support");
    m.v_min = s.at(0).get<double>();
    m.v_max = s.at(1).get<double>();
  }
  if (!(m.vnom > 0.0) || !(m.v_min > 0.0) || !(m.v_min <= m.v_max)) {
    throw std::invalid_argument("failure model needs vnom > 0 and 0 < support min <= support max");
  }
  const auto& cells = j.at("cells");
  m.six_t = cell_curves_from_json(cells.value("sixT", nlohmann::json()));
  m.eight_t = cell_curves_from_json(cells.value("eightT", nlohmann::json()));
  return m;
}

FailureModel FailureModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open failure model " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

nlohmann::json FailureModel::to_json() const {
  return {{"schema_version", 1},
          {"vnom", vnom},
          {"support", {v_min, v_max}},
          {"cells", {{"sixT", cell_curves_to_json(six_t)}, {"eightT", cell_curves_to_json(eight_t)}}}};
}

// ---------------------------------------------------------------------------
// MemoryLayout

MemoryLayout::MemoryLayout(Variant v, int word_bits) : layout_(std::move(v)), word_bits_(word_bits) {
  if (word_bits < 2 || word_bits > 16) throw std::invalid_argument("word width must be in [2,16]");
  auto check = [&](unsigned k) {
    if (k > static_cast<unsigned>(word_bits)) {
      throw std::invalid_argument("cannot protect " + std::to_string(k) + " bits of a " + std::to_string(word_bits) +
                                  "-bit word");
    }
  };
  if (const auto* h = std::get_if<HybridUniform>(&layout_)) check(h->k);
  if (const auto* s = std::get_if<SensitivityBanks>(&layout_)) {
    if (s->k_per_bank.empty()) throw std::invalid_argument("sensitivity layout needs at least one bank");
    for (auto k : s->k_per_bank) check(k);
  }
}

MemoryLayout MemoryLayout::all_six_t(int word_bits) { return MemoryLayout(AllSixT{}, word_bits); }
MemoryLayout MemoryLayout::hybrid_uniform(unsigned k, int word_bits) {
  return MemoryLayout(HybridUniform{k}, word_bits);
}
MemoryLayout MemoryLayout::sensitivity_banks(std::vector<unsigned> k_per_bank, int word_bits) {
  return MemoryLayout(SensitivityBanks{std::move(k_per_bank)}, word_bits);
}

MemoryLayout MemoryLayout::parse(const std::string& text, int word_bits) {
  auto parse_uint = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw std::invalid_argument("bad layout \"" + text + "\"");
    return static_cast<unsigned>(v);
  };
  if (text == "all6t") return all_six_t(word_bits);
  if (text.starts_with("hybrid:")) return hybrid_uniform(parse_uint(text.substr(7)), word_bits);
  if (text.starts_with("banks:")) {
    std::vector<unsigned> ks;
    std::string item;
    std::string rest = text.substr(6);
    std::replace(rest.begin(), rest.end(), '-', ',');
    std::istringstream items(rest);
    while (std::getline(items, item, ',')) ks.push_back(parse_uint(item));
    return sensitivity_banks(std::move(ks), word_bits);
  }
  throw std::invalid_argument("unknown layout \"" + text + "\" (expected all6t, hybrid:<k> or banks:<k0>,<k1>,...)");
}

void MemoryLayout::validate(std::size_t banks) const {
  if (const auto* s = std::get_if<SensitivityBanks>(&layout_)) {
    if (s->k_per_bank.size() != banks) {
      throw std::invalid_argument("layout " + label() + " lists " + std::to_string(s->k_per_bank.size()) +
                                  " banks, network has " + std::to_string(banks));
    }
  }
}

unsigned MemoryLayout::protected_count(std::size_t bank) const {
  return std::visit(
      [&](const auto& v) -> unsigned {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AllSixT>) {
          return 0;
        } else if constexpr (std::is_same_v<T, HybridUniform>) {
          return v.k;
        } else {
          return v.k_per_bank.at(bank);
        }
      },
      layout_);
}

std::uint16_t MemoryLayout::protected_mask(std::size_t bank) const {
  const unsigned k = protected_count(bank);
  const std::uint32_t word = (1u << word_bits_) - 1u;
  const std::uint32_t low = (1u << (word_bits_ - k)) - 1u;
  return static_cast<std::uint16_t>(word & ~low);
}

std::uint16_t MemoryLayout::six_t_mask(std::size_t bank) const {
  return static_cast<std::uint16_t>(((1u << word_bits_) - 1u) & ~static_cast<std::uint32_t>(protected_mask(bank)));
}

std::vector<unsigned> MemoryLayout::profile(std::size_t banks) const {
  validate(banks);
  std::vector<unsigned> ks(banks);
  for (std::size_t b = 0; b < banks; ++b) ks[b] = protected_count(b);
  return ks;
}

std::string MemoryLayout::label() const {
  if (std::holds_alternative<AllSixT>(layout_)) return "all6t";
  if (const auto* h = std::get_if<HybridUniform>(&layout_)) return "hybrid:" + std::to_string(h->k);
  const auto& ks = std::get<SensitivityBanks>(layout_).k_per_bank;
  std::string s = "banks:";
  for (std::size_t i = 0; i < ks.size(); ++i) s += (i ? "-" : "") + std::to_string(ks[i]);
  return s;
}

std::vector<unsigned> protected_positions(const MemoryLayout& layout, std::size_t bank) {
  std::vector<unsigned> pos;
  const unsigned k = layout.protected_count(bank);
  for (unsigned i = 0; i < k; ++i) pos.push_back(static_cast<unsigned>(layout.word_bits()) - 1 - i);
  return pos;
}

std::vector<BankShape> bank_shapes(const NetworkArch& arch) {
  std::vector<BankShape> shapes;
  for (std::size_t b = 0; b < arch.bank_count(); ++b) shapes.push_back({arch.fan_in(b), arch.fan_out(b)});
  return shapes;
}

// ---------------------------------------------------------------------------
// Chip sampling

ChipInstance sample_chip(const MemoryLayout& layout, const FailureModel& model, double volts,
                         std::span<const BankShape> shapes, std::uint64_t seed) {
  layout.validate(shapes.size());
  ChipInstance chip;
  chip.voltage = volts;
  chip.seed = seed;
  chip.word_bits = layout.word_bits();
  chip.shapes.assign(shapes.begin(), shapes.end());

  double p_read = model.probability(BitcellKind::SixT, FailureType::ReadAccess, volts);
  double p_write = model.probability(BitcellKind::SixT, FailureType::Write, volts);
  double p_disturb = model.probability(BitcellKind::SixT, FailureType::ReadDisturb, volts);
  const double sum = p_read + p_write + p_disturb;
  if (sum > 1.0) {
    p_read /= sum;
    p_write /= sum;
    p_disturb /= sum;
    chip.renormalized = true;
  }
  chip.p_read = p_read;
  chip.p_write = p_write;
  const double p_fault = std::min(1.0, p_read + p_write + p_disturb);

  for (std::size_t b = 0; b < shapes.size(); ++b) {
    const std::uint16_t six = layout.six_t_mask(b);
    chip.six_t_masks.push_back(six);
    BankFaults faults;
    faults.read_mask.assign(shapes[b].words(), 0);
    faults.write_mask.assign(shapes[b].words(), 0);
    faults.disturb_mask.assign(shapes[b].words(), 0);

    std::vector<unsigned> bits;
    for (unsigned i = 0; i < 16; ++i) {
      if (six & (1u << i)) bits.push_back(i);
    }
    const std::uint64_t cells = shapes[b].words() * bits.size();
    if (cells == 0 || p_fault <= 0.0) {
      chip.banks.push_back(std::move(faults));
      continue;
    }

    // Walk the 6T cells of the bank jumping straight to the next faulty one.
    std::mt19937_64 rng(derive_seed({seed, b}));
    std::geometric_distribution<std::uint64_t> gap(p_fault < 1.0 ? p_fault : 0.5);
    std::uint64_t cell = 0;
    for (;;) {
      if (p_fault < 1.0) {
        const std::uint64_t skip = gap(rng);
        if (skip >= cells - cell) break;
        cell += skip;
      }
      if (cell >= cells) break;
      const std::size_t word = cell / bits.size();
      const auto bit = static_cast<std::uint16_t>(1u << bits[cell % bits.size()]);
      const double u = unit_interval(rng()) * p_fault;
      if (u < p_read) {
        faults.read_mask[word] |= bit;
      } else if (u < p_read + p_write) {
        faults.write_mask[word] |= bit;
      } else {
        faults.disturb_mask[word] |= bit;
      }
      ++cell;
    }
    chip.banks.push_back(std::move(faults));
  }
  return chip;
}

// ---------------------------------------------------------------------------
// Weight store

std::string to_string(AccessMode mode) { return mode == AccessMode::StaticMask ? "static" : "bernoulli"; }

AccessMode parse_access_mode(const std::string& text) {
  if (text == "static") return AccessMode::StaticMask;
  if (text == "bernoulli") return AccessMode::PerAccessBernoulli;
  throw std::invalid_argument("access mode must be static or bernoulli, got \"" + text + "\"");
}

FaultyWeightStore::FaultyWeightStore(ChipInstance chip, std::vector<Matrix<std::uint16_t>> stored, AccessMode mode)
    : chip_(std::move(chip)), stored_(std::move(stored)), mode_(mode) {
  any_flip_.resize(17);
  for (int m = 0; m <= 16; ++m) any_flip_[m] = 1.0 - std::pow(1.0 - chip_.p_read, m);
}

std::uint16_t FaultyWeightStore::read_word(std::size_t bank, std::size_t index, std::uint64_t pass) const {
  const std::uint16_t value = stored_[bank].data[index];
  const auto& faults = chip_.banks[bank];
  const std::uint16_t wm = faults.write_mask[index];
  if (mode_ == AccessMode::StaticMask) return value ^ faults.read_mask[index];

  const auto candidates =
      static_cast<std::uint16_t>(chip_.six_t_masks[bank] & ~wm & ~faults.disturb_mask[index]);
  const int m = std::popcount(candidates);
  if (m == 0 || chip_.p_read == 0.0) return value;
  std::uint64_t h = derive_seed({chip_.seed, pass, bank, index});
  const double u = unit_interval(h);
  if (u >= any_flip_[m]) return value;

  // Conditioned on at least one flip: the first flipped candidate j satisfies
  // u < 1 - (1-p)^(j+1); later candidates flip independently.
  std::uint16_t flips = 0;
  int seen = 0;
  bool first_found = false;
  for (unsigned bit = 0; bit < 16; ++bit) {
    if (!(candidates & (1u << bit))) continue;
    ++seen;
    if (!first_found) {
      if (u < any_flip_[seen]) {
        flips |= static_cast<std::uint16_t>(1u << bit);
        first_found = true;
      }
    } else {
      h = mix64(h);
      if (unit_interval(h) < chip_.p_read) flips |= static_cast<std::uint16_t>(1u << bit);
    }
  }
  return value ^ flips;
}

std::uint16_t FaultyWeightStore::read(std::size_t bank, std::size_t row, std::size_t col, std::uint64_t pass) const {
  const auto& shape = chip_.shapes.at(bank);
  if (row >= shape.rows || col >= shape.cols) throw std::out_of_range("weight index outside bank");
  return read_word(bank, row * shape.cols + col, pass);
}

void FaultyWeightStore::fetch_bank(std::size_t bank, std::uint64_t pass, std::span<std::uint16_t> out) const {
  const auto& src = stored_.at(bank).data;
  if (out.size() != src.size()) throw std::invalid_argument("fetch buffer does not match bank size");
  if (mode_ == AccessMode::StaticMask) {
    const auto& rm = chip_.banks[bank].read_mask;
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] ^ rm[i];
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = read_word(bank, i, pass);
}

FaultyWeightStore write_weights(const ChipInstance& chip, const QuantizedNetwork& net, std::uint64_t seed,
                                AccessMode mode) {
  if (net.qweights.size() != chip.shapes.size()) throw std::invalid_argument("chip and network bank counts differ");
  if (net.format.total_bits != chip.word_bits) throw std::invalid_argument("chip and network word widths differ");
  std::vector<Matrix<std::uint16_t>> stored;
  stored.reserve(net.qweights.size());
  for (std::size_t b = 0; b < net.qweights.size(); ++b) {
    const auto& q = net.qweights[b];
    if (q.rows != chip.shapes[b].rows || q.cols != chip.shapes[b].cols) {
      throw std::invalid_argument("bank " + std::to_string(b) + " shape differs between chip and network");
    }
    Matrix<std::uint16_t> s = q;
    const auto& faults = chip.banks[b];
    std::mt19937_64 rng(derive_seed({seed, b, 0x77726974ull}));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::uint16_t wm = faults.write_mask[i];
      if (wm != 0) {
        const auto powerup = static_cast<std::uint16_t>(rng());
        s.data[i] = static_cast<std::uint16_t>((s.data[i] & ~wm) | (powerup & wm));
      }
      // A read-disturbed cell has flipped by the time its word is read back.
      s.data[i] ^= faults.disturb_mask[i];
    }
    stored.push_back(std::move(s));
  }
  return FaultyWeightStore(chip, std::move(stored), mode);
}

}  // namespace synmem
