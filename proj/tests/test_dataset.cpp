#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>

#include "synmem/dataset.hpp"

using namespace synmem;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

std::vector<unsigned char> image_file(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<unsigned char> out;
  put_u32(out, 0x803);
  put_u32(out, n);
  put_u32(out, rows);
  put_u32(out, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) out.push_back(static_cast<unsigned char>((i * 37) % 256));
  return out;
}

std::vector<unsigned char> label_file(std::uint32_t n) {
  std::vector<unsigned char> out;
  put_u32(out, 0x801);
  put_u32(out, n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(static_cast<unsigned char>(i % 10));
  return out;
}

class IdxTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("synmem_idx_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                             static_cast<std::streamsize>(bytes.size()));
    return p;
  }
  fs::path write_gz(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto p = dir_ / name;
    gzFile f = gzopen(p.string().c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(IdxTest, ParsesImagesAndLabels) {
  const auto d = load_idx(write("img", image_file(5, 4, 3)), write("lab", label_file(5)), Split::Test);
  EXPECT_EQ(d.size(), 5u);
  EXPECT_EQ(d.dim(), 12u);
  EXPECT_EQ(d.split, Split::Test);
  EXPECT_EQ(d.labels[3], 3u);
  EXPECT_DOUBLE_EQ(d.inputs(1, 0), ((12 * 37) % 256) / 255.0);
}

TEST_F(IdxTest, Pixel255IsExactlyOne) {
  auto img = image_file(1, 1, 1);
  img.back() = 255;
  const auto d = load_idx(write("img", img), write("lab", label_file(1)), Split::Train);
  EXPECT_EQ(d.inputs(0, 0), 1.0);
}

TEST_F(IdxTest, ReadsGzipTransparently) {
  const auto plain = load_idx(write("img", image_file(6, 2, 2)), write("lab", label_file(6)), Split::Train);
  const auto gz = load_idx(write_gz("img.gz", image_file(6, 2, 2)), write_gz("lab.gz", label_file(6)), Split::Train);
  EXPECT_EQ(plain.inputs, gz.inputs);
  EXPECT_EQ(plain.labels, gz.labels);
}

TEST_F(IdxTest, LimitKeepsLeadingSamples) {
  const auto d = load_idx(write("img", image_file(8, 2, 2)), write("lab", label_file(8)), Split::Train, 3);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.labels, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST_F(IdxTest, TruncatedPixelsReportOffset) {
  auto img = image_file(4, 3, 3);
  img.resize(img.size() - 5);
  try {
    load_idx(write("img", img), write("lab", label_file(4)), Split::Train);
    FAIL() << "expected IdxError";
  } catch (const IdxError& e) {
    EXPECT_EQ(e.offset(), img.size());
    EXPECT_NE(std::string(e.what()).find("pixel data"), std::string::npos);
  }
}

TEST_F(IdxTest, TruncatedHeaderReportsOffset) {
  std::vector<unsigned char> img{0, 0, 8, 3, 0, 0};
  try {
    load_idx(write("img", img), write("lab", label_file(1)), Split::Train);
    FAIL() << "expected IdxError";
  } catch (const IdxError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
}

TEST_F(IdxTest, RejectsBadMagicAndCountMismatch) {
  auto img = image_file(2, 2, 2);
  img[3] = 0x01;
  EXPECT_THROW(load_idx(write("img", img), write("lab", label_file(2)), Split::Train), IdxError);
  EXPECT_THROW(load_idx(write("img2", image_file(2, 2, 2)), write("lab", label_file(3)), Split::Train), IdxError);
  EXPECT_THROW(load_idx(dir_ / "missing", dir_ / "missing", Split::Train), IdxError);
}

TEST(Synthetic, SameSeedSameData) {
  SyntheticSpec s;
  s.dim = 49;
  s.n = 50;
  const auto a = gen_synthetic(s, Split::Train);
  const auto b = gen_synthetic(s, Split::Train);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  const auto t = gen_synthetic(s, Split::Test);
  EXPECT_NE(a.inputs, t.inputs);
}

TEST(Synthetic, RejectsEmptyAndDegenerateSpecs) {
  EXPECT_THROW(gen_synthetic(10, 16, 0, 1), std::invalid_argument);
  EXPECT_THROW(gen_synthetic(1, 16, 10, 1), std::invalid_argument);
  EXPECT_THROW(gen_synthetic(3, 0, 10, 1), std::invalid_argument);
}

TEST(Synthetic, ValuesInUnitIntervalAndZeroOutsideSupport) {
  SyntheticSpec s;
  s.dim = 100;
  s.n = 40;
  s.support_fraction = 0.4;
  const auto d = gen_synthetic(s, Split::Train);
  for (double v : d.inputs.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // 10x10 image, 4x4 support window starting at (3,3).
  for (std::size_t r = 0; r < d.size(); ++r) {
    EXPECT_EQ(d.inputs(r, 0), 0.0);
    EXPECT_EQ(d.inputs(r, 2 * 10 + 5), 0.0);
    EXPECT_EQ(d.inputs(r, 99), 0.0);
  }
}

TEST(Synthetic, DefaultBlobsAreLearnable) {
  SyntheticSpec s;
  s.classes = 5;
  s.dim = 64;
  s.n = 500;
  const auto train = gen_synthetic(s, Split::Train);
  s.n = 300;
  const auto test = gen_synthetic(s, Split::Test);
  TrainParams p;
  p.learning_rate = 2.0;
  p.epochs = 15;
  p.batch = 8;
  const auto net = train_backprop(init_network(NetworkArch{{64, 32, 16, 5}}, 1), train, p);
  EXPECT_GT(evaluate(net, test).accuracy(), 0.95);
}
