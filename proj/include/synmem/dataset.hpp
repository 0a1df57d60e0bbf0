#pragma once

// Dataset ingestion: IDX files (plain or gzip) and synthetic class blobs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "synmem/quantnet.hpp"

namespace synmem {

/// IDX parse failure; offset is the byte position where parsing stopped.
class IdxError : public std::runtime_error {
 public:
  IdxError(const std::string& file, std::size_t offset, const std::string& what)
      : std::runtime_error(file + " @ byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Reads an image file (magic 0x00000803) and a label file (0x00000801).
/// Pixels are scaled by 1/255. `limit` > 0 keeps only the first `limit` samples.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                 std::size_t limit = 0);

/// Shape of the synthetic benchmark.
///
/// Each class owns a prototype over a central support window (the whole vector
/// when `dim` is not a perfect square): a pixel is "on" with probability
/// `on_fraction`. A sample is clamp(prototype + N(0, noise^2), 0, 1) on the
/// support and exactly 0 outside it, like the blank border of a digit image.
struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t dim = 784;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double support_fraction = 1.0;  // of the image side
  double on_fraction = 0.2;
  double on_level = 0.9;
  double noise = 0.5;
};

Dataset gen_synthetic(const SyntheticSpec& spec, Split split = Split::Train);
inline Dataset gen_synthetic(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.dim = dim;
  spec.n = n;
  spec.seed = seed;
  return gen_synthetic(spec);
}

}  // namespace synmem
