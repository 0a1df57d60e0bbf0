#include "synmem/quantnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace synmem {

void NetworkArch::validate() const {
  if (layer_sizes.size() < 3) {
    throw std::invalid_argument("network needs an input, at least one hidden and an output layer, got " +
                                std::to_string(layer_sizes.size()) + " layers");
  }
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] == 0) throw std::invalid_argument("layer " + std::to_string(i) + " has no neurons");
  }
}

std::size_t NetworkArch::synapse_count() const {
  std::size_t n = 0;
  for (std::size_t b = 0; b < bank_count(); ++b) n += fan_in(b) * fan_out(b);
  return n;
}

std::string NetworkArch::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) os << (i ? "-" : "") << layer_sizes[i];
  return os.str();
}

void FloatNetwork::validate() const {
  arch.validate();
  if (weights.size() != arch.bank_count() || biases.size() != arch.bank_count()) {
    throw std::invalid_argument("network has " + std::to_string(weights.size()) + " weight banks, arch wants " +
                                std::to_string(arch.bank_count()));
  }
  for (std::size_t b = 0; b < weights.size(); ++b) {
    if (weights[b].rows != arch.fan_in(b) || weights[b].cols != arch.fan_out(b) ||
        biases[b].size() != arch.fan_out(b)) {
      throw std::invalid_argument("bank " + std::to_string(b) + " shape does not match arch");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(weights[b].data.begin(), weights[b].data.end(), finite) ||
        !std::all_of(biases[b].begin(), biases[b].end(), finite)) {
      throw std::invalid_argument("bank " + std::to_string(b) + " holds a non-finite value");
    }
  }
}

void FixedPointFormat::validate() const {
  if (total_bits < 2 || total_bits > 16) {
    throw std::invalid_argument("fixed-point width must be in [2,16], got " + std::to_string(total_bits));
  }
}

std::uint16_t FixedPointFormat::encode(std::int32_t value) const {
  if (value < min_value() || value > max_value()) {
    throw std::out_of_range("value " + std::to_string(value) + " outside " + std::to_string(total_bits) + "-bit range");
  }
  return static_cast<std::uint16_t>(static_cast<std::uint32_t>(value) & word_mask());
}

std::int32_t FixedPointFormat::decode(std::uint16_t pattern) const {
  const std::uint32_t p = pattern & word_mask();
  const std::uint32_t sign = 1u << (total_bits - 1);
  return static_cast<std::int32_t>(p ^ sign) - static_cast<std::int32_t>(sign);
}

FloatNetwork QuantizedNetwork::dequantize() const {
  FloatNetwork out;
  out.arch = arch;
  out.biases = biases;
  out.weights.reserve(qweights.size());
  for (std::size_t b = 0; b < qweights.size(); ++b) {
    Matrix<double> w(qweights[b].rows, qweights[b].cols);
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = format.decode(qweights[b].data[i]) * scales[b];
    out.weights.push_back(std::move(w));
  }
  return out;
}

void Dataset::validate(const NetworkArch& arch) const {
  if (inputs.rows != labels.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(inputs.rows) + " inputs but " +
                                std::to_string(labels.size()) + " labels");
  }
  if (dim() != arch.input_size()) {
    throw std::invalid_argument("dataset dimension " + std::to_string(dim()) + " does not match input layer " +
                                std::to_string(arch.input_size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= arch.output_size()) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                                  " exceeds output layer");
    }
  }
}

std::vector<std::size_t> Dataset::class_counts(std::size_t classes) const {
  std::vector<std::size_t> counts(classes, 0);
  for (auto l : labels) {
    if (l < classes) ++counts[l];
  }
  return counts;
}

void PassThroughSource::fetch_bank(std::size_t bank, std::uint64_t, std::span<std::uint16_t> out) const {
  const auto& src = net_->qweights.at(bank).data;
  if (out.size() != src.size()) throw std::invalid_argument("fetch buffer does not match bank size");
  std::copy(src.begin(), src.end(), out.begin());
}

namespace {

// One dense sigmoid layer over a block of samples (rows of `in`). Sums run over
// the fan-in in ascending order so every entry point produces identical bits.
Matrix<double> layer_forward(const Matrix<double>& in, const Matrix<double>& w, const std::vector<double>& bias) {
  Matrix<double> out(in.rows, w.cols);
  for (std::size_t s = 0; s < in.rows; ++s) std::copy(bias.begin(), bias.end(), out.row(s).begin());
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* wr = w.row(i).data();
    for (std::size_t s = 0; s < in.rows; ++s) {
      const double a = in(s, i);
      if (a == 0.0) continue;
      double* o = out.row(s).data();
      for (std::size_t j = 0; j < w.cols; ++j) o[j] += a * wr[j];
    }
  }
  for (auto& v : out.data) v = sigmoid(v);
  return out;
}

Matrix<double> network_forward(const std::vector<Matrix<double>>& weights,
                               const std::vector<std::vector<double>>& biases, Matrix<double> act) {
  for (std::size_t b = 0; b < weights.size(); ++b) act = layer_forward(act, weights[b], biases[b]);
  return act;
}

Matrix<double> single_row(std::span<const double> input) {
  Matrix<double> m(1, input.size());
  std::copy(input.begin(), input.end(), m.data.begin());
  return m;
}

std::vector<Matrix<double>> fetch_dequantized(const QuantizedNetwork& net, const WeightSource& store,
                                              std::uint64_t pass) {
  std::vector<Matrix<double>> weights;
  weights.reserve(net.qweights.size());
  std::vector<std::uint16_t> buf;
  for (std::size_t b = 0; b < net.qweights.size(); ++b) {
    const auto& q = net.qweights[b];
    buf.resize(q.size());
    store.fetch_bank(b, pass, buf);
    Matrix<double> w(q.rows, q.cols);
    for (std::size_t i = 0; i < buf.size(); ++i) w.data[i] = net.format.decode(buf[i]) * net.scales[b];
    weights.push_back(std::move(w));
  }
  return weights;
}

std::uint32_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return static_cast<std::uint32_t>(best);
}

EvalResult tally(const Dataset& data, std::size_t classes, std::vector<std::uint32_t> predictions) {
  EvalResult r;
  r.total = data.size();
  r.per_class_correct.assign(classes, 0);
  r.per_class_total.assign(classes, 0);
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto label = data.labels[s];
    ++r.per_class_total[label];
    if (predictions[s] == label) {
      ++r.correct;
      ++r.per_class_correct[label];
    }
  }
  r.predictions = std::move(predictions);
  return r;
}

constexpr std::size_t kEvalBlock = 32;

std::vector<std::uint32_t> predict_all(const std::vector<Matrix<double>>& weights,
                                       const std::vector<std::vector<double>>& biases, const Dataset& data) {
  std::vector<std::uint32_t> pred(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalBlock) {
    const std::size_t n = std::min(kEvalBlock, data.size() - start);
    Matrix<double> block(n, data.dim());
    std::copy_n(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(start * data.dim()), n * data.dim(),
                block.data.begin());
    const auto out = network_forward(weights, biases, std::move(block));
    for (std::size_t s = 0; s < n; ++s) pred[start + s] = argmax(out.row(s));
  }
  return pred;
}

void check_input(const NetworkArch& arch, std::span<const double> input) {
  if (input.size() != arch.input_size()) {
    throw std::invalid_argument("input has " + std::to_string(input.size()) + " values, network expects " +
                                std::to_string(arch.input_size()));
  }
}

std::vector<double> onehot_residual(std::span<const double> y, std::uint32_t label) {
  std::vector<double> r(y.begin(), y.end());
  r[label] -= 1.0;
  return r;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

FloatNetwork init_network(const NetworkArch& arch, std::uint64_t seed) {
  arch.validate();
  FloatNetwork net;
  net.arch = arch;
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < arch.bank_count(); ++b) {
    const double r = std::sqrt(6.0 / static_cast<double>(arch.fan_in(b) + arch.fan_out(b)));
    std::uniform_real_distribution<double> dist(-r, r);
    Matrix<double> w(arch.fan_in(b), arch.fan_out(b));
    for (auto& v : w.data) v = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(arch.fan_out(b), 0.0);
  }
  return net;
}

std::vector<double> forward(const FloatNetwork& net, std::span<const double> input) {
  check_input(net.arch, input);
  const auto out = network_forward(net.weights, net.biases, single_row(input));
  return out.data;
}

std::vector<double> forward(const QuantizedNetwork& net, std::span<const double> input, const WeightSource& store,
                            std::uint64_t pass) {
  check_input(net.arch, input);
  const auto weights = fetch_dequantized(net, store, pass);
  return network_forward(weights, net.biases, single_row(input)).data;
}

double mse_loss(const FloatNetwork& net, const Dataset& data, std::span<const std::size_t> samples) {
  double total = 0.0;
  for (auto s : samples) {
    const auto y = forward(net, data.inputs.row(s));
    for (auto r : onehot_residual(y, data.labels[s])) total += r * r;
  }
  return 0.5 * total / static_cast<double>(samples.size());
}

Gradients backprop_gradients(const FloatNetwork& net, const Dataset& data, std::span<const std::size_t> samples) {
  const std::size_t banks = net.weights.size();
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("gradient over an empty batch");

  // acts[l] holds layer l activations, one sample per row.
  std::vector<Matrix<double>> acts;
  acts.reserve(banks + 1);
  Matrix<double> in(n, data.dim());
  for (std::size_t s = 0; s < n; ++s) {
    const auto src = data.inputs.row(samples[s]);
    std::copy(src.begin(), src.end(), in.row(s).begin());
  }
  acts.push_back(std::move(in));
  for (std::size_t b = 0; b < banks; ++b) acts.push_back(layer_forward(acts[b], net.weights[b], net.biases[b]));

  Gradients g;
  g.weights.resize(banks);
  g.biases.resize(banks);

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix<double> delta = acts[banks];
  for (std::size_t s = 0; s < n; ++s) {
    auto row = delta.row(s);
    const auto label = data.labels[samples[s]];
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double y = row[k];
      const double t = (k == label) ? 1.0 : 0.0;
      row[k] = (y - t) * y * (1.0 - y) * inv_n;
    }
  }

  for (std::size_t b = banks; b-- > 0;) {
    const auto& a = acts[b];
    const auto& w = net.weights[b];
    Matrix<double> gw(w.rows, w.cols);
    std::vector<double> gb(w.cols, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* d = delta.row(s).data();
      for (std::size_t j = 0; j < w.cols; ++j) gb[j] += d[j];
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double ai = a(s, i);
        if (ai == 0.0) continue;
        double* gr = gw.row(i).data();
        for (std::size_t j = 0; j < w.cols; ++j) gr[j] += ai * d[j];
      }
    }
    if (b > 0) {
      Matrix<double> prev(n, w.rows);
      for (std::size_t s = 0; s < n; ++s) {
        const double* d = delta.row(s).data();
        for (std::size_t i = 0; i < w.rows; ++i) {
          const double* wr = w.row(i).data();
          double acc = 0.0;
          for (std::size_t j = 0; j < w.cols; ++j) acc += wr[j] * d[j];
          const double ai = a(s, i);
          prev(s, i) = acc * ai * (1.0 - ai);
        }
      }
      delta = std::move(prev);
    }
    g.weights[b] = std::move(gw);
    g.biases[b] = std::move(gb);
  }
  return g;
}

FloatNetwork train_backprop(FloatNetwork net, const Dataset& data, const TrainParams& params) {
  net.validate();
  data.validate(net.arch);
  if (data.size() == 0) throw std::invalid_argument("training split is empty");
  if (params.batch == 0) throw std::invalid_argument("batch size must be positive");

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += params.batch) {
      const std::size_t n = std::min(params.batch, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, n);
      const auto g = backprop_gradients(net, data, batch);
      for (std::size_t b = 0; b < net.weights.size(); ++b) {
        auto& w = net.weights[b].data;
        const auto& gw = g.weights[b].data;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= params.learning_rate * gw[i];
        for (std::size_t j = 0; j < net.biases[b].size(); ++j) net.biases[b][j] -= params.learning_rate * g.biases[b][j];
      }
      const double probe = net.weights.back().data.front() + net.biases.back().front();
      if (!std::isfinite(probe)) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                                 std::to_string(start) + "; lower the learning rate");
      }
    }
    const double loss = mse_loss(net, data, std::span<const std::size_t>(order.data(), std::min<std::size_t>(order.size(), 256)));
    if (!std::isfinite(loss)) {
      throw std::runtime_error("non-finite loss after epoch " + std::to_string(epoch));
    }
  }
  return net;
}

QuantizedNetwork quantize(const FloatNetwork& net, const FixedPointFormat& format) {
  net.validate();
  format.validate();
  QuantizedNetwork q;
  q.arch = net.arch;
  q.format = format;
  q.biases = net.biases;
  const std::int32_t limit = format.max_value();
  for (const auto& w : net.weights) {
    double max_abs = 0.0;
    for (double v : w.data) max_abs = std::max(max_abs, std::abs(v));
    const double scale = max_abs > 0.0 ? max_abs / limit : 1.0;
    Matrix<std::uint16_t> qw(w.rows, w.cols);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto level = static_cast<std::int32_t>(std::clamp(std::round(w.data[i] / scale), -double(limit), double(limit)));
      qw.data[i] = format.encode(level);
    }
    q.qweights.push_back(std::move(qw));
    q.scales.push_back(scale);
  }
  return q;
}

EvalResult evaluate(const FloatNetwork& net, const Dataset& data) {
  data.validate(net.arch);
  return tally(data, net.arch.output_size(), predict_all(net.weights, net.biases, data));
}

EvalResult evaluate(const QuantizedNetwork& net, const Dataset& data, const WeightSource& store) {
  data.validate(net.arch);
  if (data.size() == 0) throw std::invalid_argument("evaluation split is empty");
  if (store.repeatable()) {
    // Every pass would read identical patterns, so one fetch serves all samples.
    const auto weights = fetch_dequantized(net, store, 0);
    return tally(data, net.arch.output_size(), predict_all(weights, net.biases, data));
  }
  std::vector<std::uint32_t> pred(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto weights = fetch_dequantized(net, store, s);
    const auto out = network_forward(weights, net.biases, single_row(data.inputs.row(s)));
    pred[s] = argmax(out.row(0));
  }
  return tally(data, net.arch.output_size(), std::move(pred));
}

}  // namespace synmem
