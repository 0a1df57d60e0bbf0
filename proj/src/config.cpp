#include "synmem/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "synmem/seeding.hpp"

namespace synmem {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// An entry is either inline JSON or a path to a JSON file.
json inline_or_file(const json& entry, const std::filesystem::path& base) {
  if (entry.is_string()) return load_json_file(resolve(base, entry.get<std::string>()));
  return entry;
}

void check_voltage(const FailureModel& m, double v, const std::string& what) {
  if (!(v >= m.v_min && v <= m.v_max)) {
    throw std::invalid_argument(fmt::format("{} {} V is outside the failure model support [{}, {}]", what, v, m.v_min,
                                            m.v_max));
  }
}

json dataset_json(const DatasetSource& d) {
  if (d.idx) {
    return {{"kind", "idx"},
            {"train_images", d.idx->train_images.string()},
            {"train_labels", d.idx->train_labels.string()},
            {"test_images", d.idx->test_images.string()},
            {"test_labels", d.idx->test_labels.string()},
            {"train_limit", d.idx->train_limit},
            {"test_limit", d.idx->test_limit}};
  }
  const auto& s = d.synthetic;
  return {{"kind", "synthetic"},
          {"classes", s.spec.classes},
          {"dim", s.spec.dim},
          {"train", s.train},
          {"test", s.test},
          {"seed", s.spec.seed},
          {"support_fraction", s.spec.support_fraction},
          {"on_fraction", s.spec.on_fraction},
          {"on_level", s.spec.on_level},
          {"noise", s.spec.noise}};
}

json training_json(const TrainParams& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs}, {"batch", t.batch}, {"seed", t.seed}};
}

std::string digest(const json& j) { return fmt::format("{:016x}", fnv1a(j.dump())); }

}  // namespace

void ExperimentConfig::validate() const {
  arch.validate();
  format.validate();
  power.validate();
  const std::size_t banks = arch.bank_count();
  if (!dataset.idx) {
    const auto& s = dataset.synthetic;
    if (s.spec.classes != arch.output_size() || s.spec.dim != arch.input_size()) {
      throw std::invalid_argument("synthetic dataset shape does not match the network input/output layers");
    }
    if (s.train == 0 || s.test == 0) throw std::invalid_argument("synthetic train and test sizes must be positive");
  }
  if (training.batch == 0) throw std::invalid_argument("training batch must be positive");
  if (chips_per_point < 1) throw std::invalid_argument("chips_per_point must be at least 1");
  if (voltages.empty()) throw std::invalid_argument("voltage grid is empty");
  for (double v : voltages) check_voltage(failure_model, v, "grid voltage");
  if (layouts.empty()) throw std::invalid_argument("layout list is empty");
  for (const auto& l : layouts) MemoryLayout::parse(l, format.total_bits).validate(banks);
  for (const auto& l : profile_references) MemoryLayout::parse(l, format.total_bits).validate(banks);
  MemoryLayout::parse(baseline.layout, format.total_bits).validate(banks);
  check_voltage(failure_model, baseline.voltage, "baseline voltage");
  check_voltage(failure_model, profile_voltage, "profile voltage");
  for (const auto& p : profiles) MemoryLayout::sensitivity_banks(p, format.total_bits).validate(banks);
}

json ExperimentConfig::to_json() const {
  json layouts_j = layouts;
  return {{"schema_version", kConfigSchemaVersion},
          {"arch", arch.layer_sizes},
          {"word_bits", format.total_bits},
          {"dataset", dataset_json(dataset)},
          {"training", training_json(training)},
          {"failure_model", failure_model.to_json()},
          {"power_params", power.to_json()},
          {"layouts", layouts_j},
          {"voltages", voltages},
          {"chips_per_point", chips_per_point},
          {"master_seed", master_seed},
          {"access_mode", synmem::to_string(access_mode)},
          {"baseline", {{"layout", baseline.layout}, {"voltage", baseline.voltage}}},
          {"trace", {{"reads_per_word", reads_per_word}, {"writes_per_word", writes_per_word}}},
          {"profiles", profiles},
          {"profile_references", profile_references},
          {"profile_voltage", profile_voltage}};
}

std::string ExperimentConfig::hash() const { return digest(to_json()); }

std::string ExperimentConfig::training_key() const {
  return digest({{"arch", arch.layer_sizes}, {"dataset", dataset_json(dataset)}, {"training", training_json(training)}});
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  const int version = j.value("schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    throw std::invalid_argument(fmt::format("unsupported config schema_version {} (expected {})", version,
                                            kConfigSchemaVersion));
  }
  ExperimentConfig c;
  if (j.contains("arch")) c.arch.layer_sizes = j.at("arch").get<std::vector<std::size_t>>();
  c.arch.validate();
  c.format.total_bits = j.value("word_bits", 8);

  auto& syn = c.dataset.synthetic;
  syn.spec.classes = c.arch.output_size();
  syn.spec.dim = c.arch.input_size();
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    const std::string kind = d.value("kind", "synthetic");
    if (kind == "idx") {
      IdxSource idx;
      idx.train_images = resolve(base_dir, d.at("train_images").get<std::string>());
      idx.train_labels = resolve(base_dir, d.at("train_labels").get<std::string>());
      idx.test_images = resolve(base_dir, d.at("test_images").get<std::string>());
      idx.test_labels = resolve(base_dir, d.at("test_labels").get<std::string>());
      idx.train_limit = d.value("train_limit", std::size_t{0});
      idx.test_limit = d.value("test_limit", std::size_t{0});
      c.dataset.idx = idx;
    } else if (kind == "synthetic") {
      syn.spec.classes = d.value("classes", syn.spec.classes);
      syn.spec.dim = d.value("dim", syn.spec.dim);
      syn.train = d.value("train", syn.train);
      syn.test = d.value("test", syn.test);
      syn.spec.seed = d.value("seed", syn.spec.seed);
      syn.spec.support_fraction = d.value("support_fraction", syn.spec.support_fraction);
      syn.spec.on_fraction = d.value("on_fraction", syn.spec.on_fraction);
      syn.spec.on_level = d.value("on_level", syn.spec.on_level);
      syn.spec.noise = d.value("noise", syn.spec.noise);
    } else {
      throw std::invalid_argument("dataset kind must be synthetic or idx, got \"" + kind + "\"");
    }
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
    c.training.epochs = t.value("epochs", c.training.epochs);
    c.training.batch = t.value("batch", c.training.batch);
    c.training.seed = t.value("seed", c.training.seed);
  }

  if (!j.contains("failure_model")) throw std::invalid_argument("config needs a failure_model (file path or object)");
  c.failure_model = FailureModel::from_json(inline_or_file(j.at("failure_model"), base_dir));
  if (j.contains("power_params")) c.power = PowerParams::from_json(inline_or_file(j.at("power_params"), base_dir));

  if (j.contains("layouts")) c.layouts = j.at("layouts").get<std::vector<std::string>>();
  if (j.contains("voltages")) c.voltages = j.at("voltages").get<std::vector<double>>();
  c.chips_per_point = j.value("chips_per_point", c.chips_per_point);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.access_mode = parse_access_mode(j.value("access_mode", std::string("static")));
  if (j.contains("baseline")) {
    c.baseline.layout = j.at("baseline").value("layout", c.baseline.layout);
    c.baseline.voltage = j.at("baseline").value("voltage", c.baseline.voltage);
  }
  if (j.contains("trace")) {
    c.reads_per_word = j.at("trace").value("reads_per_word", c.reads_per_word);
    c.writes_per_word = j.at("trace").value("writes_per_word", c.writes_per_word);
  }
  if (j.contains("profiles")) c.profiles = j.at("profiles").get<std::vector<std::vector<unsigned>>>();
  if (j.contains("profile_references")) {
    c.profile_references = j.at("profile_references").get<std::vector<std::string>>();
  }
  c.profile_voltage = j.value("profile_voltage", c.profile_voltage);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  try {
    return from_json(j, path.parent_path());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace synmem
