#pragma once

// Feedforward sigmoid networks: float training, fixed-point quantization and
// inference through a pluggable weight source.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace synmem {

/// Dense row-major matrix.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

/// Neurons per layer, input first, output last.
struct NetworkArch {
  std::vector<std::size_t> layer_sizes;

  /// Throws std::invalid_argument unless there are >= 3 layers, all non-empty.
  void validate() const;
  std::size_t layer_count() const { return layer_sizes.size(); }
  std::size_t bank_count() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t fan_in(std::size_t bank) const { return layer_sizes.at(bank); }
  std::size_t fan_out(std::size_t bank) const { return layer_sizes.at(bank + 1); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t synapse_count() const;
  std::string to_string() const;

  bool operator==(const NetworkArch&) const = default;
};

/// Weight bank b is fan_in(b) x fan_out(b); biases[b] belongs to layer b+1.
struct FloatNetwork {
  NetworkArch arch;
  std::vector<Matrix<double>> weights;
  std::vector<std::vector<double>> biases;

  void validate() const;
  bool operator==(const FloatNetwork&) const = default;
};

/// Two's-complement word, sign bit in the MSB.
struct FixedPointFormat {
  int total_bits = 8;

  void validate() const;
  std::int32_t min_value() const { return -(std::int32_t{1} << (total_bits - 1)); }
  std::int32_t max_value() const { return (std::int32_t{1} << (total_bits - 1)) - 1; }
  std::uint16_t word_mask() const { return static_cast<std::uint16_t>((1u << total_bits) - 1u); }
  /// Bit pattern of an in-range integer.
  std::uint16_t encode(std::int32_t value) const;
  /// Sign-extends a word_bits-wide pattern.
  std::int32_t decode(std::uint16_t pattern) const;

  bool operator==(const FixedPointFormat&) const = default;
};

/// Stored weight patterns plus per-bank scale: value = decode(pattern) * scale.
/// Biases stay in floating point and are never routed through a weight source.
struct QuantizedNetwork {
  NetworkArch arch;
  FixedPointFormat format;
  std::vector<Matrix<std::uint16_t>> qweights;
  std::vector<double> scales;
  std::vector<std::vector<double>> biases;

  double weight(std::size_t bank, std::size_t r, std::size_t c) const {
    return format.decode(qweights[bank](r, c)) * scales[bank];
  }
  /// Float network carrying the dequantized weights.
  FloatNetwork dequantize() const;
};

enum class Split { Train, Test };

struct Dataset {
  Matrix<double> inputs;  // one sample per row, values in [0,1]
  std::vector<std::uint32_t> labels;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols; }
  /// Throws std::invalid_argument on a shape or label mismatch with arch.
  void validate(const NetworkArch& arch) const;
  std::vector<std::size_t> class_counts(std::size_t classes) const;
};

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> per_class_correct;
  std::vector<std::size_t> per_class_total;
  std::vector<std::uint32_t> predictions;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  bool operator==(const EvalResult&) const = default;
};

/// Source of stored weight patterns for inference.
///
/// A forward pass fetches every bank once through fetch_bank. `pass` identifies
/// the access so sources with per-access randomness stay pure functions of
/// their inputs.
class WeightSource {
 public:
  virtual ~WeightSource() = default;
  /// Writes the rows*cols patterns of `bank`, row-major, into `out`.
  virtual void fetch_bank(std::size_t bank, std::uint64_t pass, std::span<std::uint16_t> out) const = 0;
  /// True when every pass returns the same patterns, so a fetched bank may be reused.
  virtual bool repeatable() const = 0;
};

/// Returns the stored patterns untouched.
class PassThroughSource final : public WeightSource {
 public:
  explicit PassThroughSource(const QuantizedNetwork& net) : net_(&net) {}
  void fetch_bank(std::size_t bank, std::uint64_t pass, std::span<std::uint16_t> out) const override;
  bool repeatable() const override { return true; }

 private:
  const QuantizedNetwork* net_;
};

/// Glorot-uniform weights in [-r, r], r = sqrt(6 / (fan_in + fan_out)); zero biases.
FloatNetwork init_network(const NetworkArch& arch, std::uint64_t seed);

double sigmoid(double x);

/// Activations of the output layer.
std::vector<double> forward(const FloatNetwork& net, std::span<const double> input);
std::vector<double> forward(const QuantizedNetwork& net, std::span<const double> input, const WeightSource& store,
                            std::uint64_t pass = 0);

struct TrainParams {
  double learning_rate = 0.5;
  std::size_t epochs = 10;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
};

/// Per-bank gradients of the mean-squared-error loss.
struct Gradients {
  std::vector<Matrix<double>> weights;
  std::vector<std::vector<double>> biases;
};

/// 0.5 * mean over samples of sum_k (y_k - onehot_k)^2.
double mse_loss(const FloatNetwork& net, const Dataset& data, std::span<const std::size_t> samples);
Gradients backprop_gradients(const FloatNetwork& net, const Dataset& data, std::span<const std::size_t> samples);

/// Mini-batch gradient descent on the MSE loss. Throws std::runtime_error if the
/// loss becomes non-finite.
FloatNetwork train_backprop(FloatNetwork net, const Dataset& data, const TrainParams& params);

/// Per-bank symmetric scale max|w| / (2^(n-1) - 1), round half away from zero.
/// An all-zero bank gets scale 1.
QuantizedNetwork quantize(const FloatNetwork& net, const FixedPointFormat& format);

EvalResult evaluate(const FloatNetwork& net, const Dataset& data);
/// Argmax classification, ties to the lowest class index.
EvalResult evaluate(const QuantizedNetwork& net, const Dataset& data, const WeightSource& store);

}  // namespace synmem
