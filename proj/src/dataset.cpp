#include "synmem/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "synmem/seeding.hpp"

namespace synmem {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// gzread passes uncompressed files through unchanged.
std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IdxError(path.string(), 0, "cannot open file");
  std::vector<unsigned char> bytes;
  unsigned char chunk[1 << 16];
  for (;;) {
    const int got = gzread(f, chunk, sizeof(chunk));
    if (got < 0) {
      int err = 0;
      const std::string msg = gzerror(f, &err);
      const std::size_t at = bytes.size();
      gzclose(f);
      throw IdxError(path.string(), at, "read error: " + msg);
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), chunk, chunk + got);
  }
  gzclose(f);
  return bytes;
}

class Reader {
 public:
  Reader(std::string name, std::vector<unsigned char> bytes) : name_(std::move(name)), bytes_(std::move(bytes)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  const unsigned char* take(std::size_t n, const char* field) {
    need(n, field);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  const std::string& name() const { return name_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw IdxError(name_, bytes_.size(),
                     std::string("truncated while reading ") + field + " (needed " + std::to_string(n) +
                         " bytes at offset " + std::to_string(pos_) + ")");
    }
  }

  std::string name_;
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

void expect_magic(Reader& r, std::uint32_t want) {
  const std::uint32_t magic = r.u32("magic number");
  if (magic != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x, expected 0x%08x", magic, want);
    throw IdxError(r.name(), 0, buf);
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                 std::size_t limit) {
  Reader img(images.string(), slurp(images));
  Reader lab(labels.string(), slurp(labels));

  expect_magic(img, kImageMagic);
  const std::uint32_t n_images = img.u32("image count");
  const std::uint32_t rows = img.u32("row count");
  const std::uint32_t cols = img.u32("column count");
  expect_magic(lab, kLabelMagic);
  const std::uint32_t n_labels = lab.u32("label count");
  if (n_images != n_labels) {
    throw IdxError(labels.string(), 4,
                   "label count " + std::to_string(n_labels) + " differs from image count " + std::to_string(n_images));
  }

  std::size_t n = n_images;
  if (limit > 0) n = std::min<std::size_t>(n, limit);
  const std::size_t dim = std::size_t{rows} * cols;

  Dataset d;
  d.split = split;
  d.inputs = Matrix<double>(n, dim);
  const unsigned char* pixels = img.take(std::size_t{n_images} * dim, "pixel data");
  const unsigned char* tags = lab.take(n_labels, "label data");
  for (std::size_t i = 0; i < n * dim; ++i) d.inputs.data[i] = pixels[i] / 255.0;
  d.labels.assign(tags, tags + n);
  return d;
}

Dataset gen_synthetic(const SyntheticSpec& spec, Split split) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least two classes");
  if (spec.dim == 0) throw std::invalid_argument("synthetic data needs a positive dimension");
  if (spec.n == 0) throw std::invalid_argument("synthetic dataset must not be empty");

  // Support window: centred square when dim is a square, else everything.
  std::vector<std::size_t> support;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(spec.dim))));
  if (side * side == spec.dim && spec.support_fraction < 1.0) {
    const auto inner = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(side * spec.support_fraction)));
    const std::size_t lo = (side - inner) / 2;
    for (std::size_t r = lo; r < lo + inner; ++r) {
      for (std::size_t c = lo; c < lo + inner; ++c) support.push_back(r * side + c);
    }
  } else {
    for (std::size_t i = 0; i < spec.dim; ++i) support.push_back(i);
  }

  std::mt19937_64 proto_rng(derive_seed({spec.seed, 0x70726f746full}));
  std::bernoulli_distribution on(spec.on_fraction);
  Matrix<double> prototypes(spec.classes, spec.dim, 0.0);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (auto i : support) prototypes(c, i) = on(proto_rng) ? spec.on_level : 0.0;
  }

  std::mt19937_64 rng(derive_seed({spec.seed, split == Split::Train ? 1ull : 2ull}));
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(spec.classes - 1));
  std::normal_distribution<double> noise(0.0, spec.noise);

  Dataset d;
  d.split = split;
  d.inputs = Matrix<double>(spec.n, spec.dim, 0.0);
  d.labels.resize(spec.n);
  for (std::size_t s = 0; s < spec.n; ++s) {
    const std::uint32_t c = pick(rng);
    d.labels[s] = c;
    for (auto i : support) d.inputs(s, i) = std::clamp(prototypes(c, i) + noise(rng), 0.0, 1.0);
  }
  return d;
}

}  // namespace synmem
