#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/dataset.hpp"

namespace fs = std::filesystem;
using forcelr::BlobConfig;
using forcelr::Dataset;
using forcelr::IdxData;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "forcelr_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_raw(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

std::vector<std::uint8_t> read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

TEST(Idx, RoundTripPreservesDimsAndPayload) {
  const fs::path dir = fresh_dir("idx_roundtrip");
  IdxData d;
  d.dims = {2, 3, 4};
  d.payload.resize(24);
  for (std::size_t i = 0; i < 24; ++i) d.payload[i] = std::uint8_t(i);
  forcelr::write_idx(dir / "t.idx", d);
  const IdxData back = forcelr::read_idx(dir / "t.idx");
  EXPECT_EQ(back.dtype, 0x08);
  EXPECT_EQ(back.dims, d.dims);
  EXPECT_EQ(back.payload, d.payload);
}

TEST(Idx, HeaderIsBigEndian) {
  const fs::path dir = fresh_dir("idx_header");
  IdxData d;
  d.dims = {258};  // 0x0102 exercises byte order
  d.payload.assign(258, 7);
  forcelr::write_idx(dir / "t.idx", d);
  const auto bytes = read_raw(dir / "t.idx");
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes[0], 0x00);
  EXPECT_EQ(bytes[1], 0x00);
  EXPECT_EQ(bytes[2], 0x08);  // dtype
  EXPECT_EQ(bytes[3], 0x01);  // rank
  EXPECT_EQ(bytes[4], 0x00);
  EXPECT_EQ(bytes[5], 0x00);
  EXPECT_EQ(bytes[6], 0x01);
  EXPECT_EQ(bytes[7], 0x02);
}

TEST(Idx, RejectsMalformedFiles) {
  const fs::path dir = fresh_dir("idx_bad");
  // nonzero leading magic bytes
  write_raw(dir / "magic.idx", {1, 0, 8, 1, 0, 0, 0, 1, 42});
  EXPECT_THROW(forcelr::read_idx(dir / "magic.idx"), std::runtime_error);
  // float dtype is not supported
  write_raw(dir / "dtype.idx", {0, 0, 0x0D, 1, 0, 0, 0, 1, 42});
  EXPECT_THROW(forcelr::read_idx(dir / "dtype.idx"), std::runtime_error);
  // header promises more payload than the file holds
  write_raw(dir / "trunc.idx", {0, 0, 8, 1, 0, 0, 0, 9, 1, 2, 3});
  EXPECT_THROW(forcelr::read_idx(dir / "trunc.idx"), std::runtime_error);
  // truncated header
  write_raw(dir / "short.idx", {0, 0, 8});
  EXPECT_THROW(forcelr::read_idx(dir / "short.idx"), std::runtime_error);
  EXPECT_THROW(forcelr::read_idx(dir / "missing.idx"), std::runtime_error);
}

TEST(Idx, WriteValidatesShape) {
  const fs::path dir = fresh_dir("idx_write");
  IdxData d;
  d.dims = {2, 2};
  d.payload.assign(3, 0);  // 3 != 4
  EXPECT_THROW(forcelr::write_idx(dir / "t.idx", d), std::invalid_argument);
  d.dims = {1, 1, 1, 1, 1};
  d.payload.assign(1, 0);
  EXPECT_THROW(forcelr::write_idx(dir / "t.idx", d), std::invalid_argument);
}

TEST(Idx, DatasetLoaderScalesAndValidates) {
  const fs::path dir = fresh_dir("idx_load");
  IdxData imgs;
  imgs.dims = {2, 4, 4};
  imgs.payload.assign(32, 0);
  imgs.payload[0] = 255;
  imgs.payload[1] = 51;
  IdxData labs;
  labs.dims = {2};
  labs.payload = {0, 1};
  forcelr::write_idx(dir / "imgs.idx", imgs);
  forcelr::write_idx(dir / "labs.idx", labs);

  const Dataset ds = forcelr::load_idx_dataset(dir / "imgs.idx", dir / "labs.idx", 2);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.c, 1u);
  EXPECT_EQ(ds.h, 4u);
  EXPECT_EQ(ds.w, 4u);
  EXPECT_FLOAT_EQ(ds.images[0], 1.0f);
  EXPECT_FLOAT_EQ(ds.images[1], 51.0f / 255.0f);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));

  // count mismatch between the two files
  IdxData labs3;
  labs3.dims = {3};
  labs3.payload = {0, 1, 0};
  forcelr::write_idx(dir / "labs3.idx", labs3);
  EXPECT_THROW(forcelr::load_idx_dataset(dir / "imgs.idx", dir / "labs3.idx", 2),
               std::runtime_error);
  // labels must be rank 1
  EXPECT_THROW(forcelr::load_idx_dataset(dir / "imgs.idx", dir / "imgs.idx", 2),
               std::runtime_error);
  // label value outside the class range
  EXPECT_THROW(forcelr::load_idx_dataset(dir / "imgs.idx", dir / "labs.idx", 1),
               std::invalid_argument);
}

TEST(Blobs, DeterministicAndBalanced) {
  BlobConfig cfg;
  cfg.classes = 3;
  cfg.samples = 31;
  cfg.seed = 42;
  const Dataset a = forcelr::make_blobs(cfg);
  const Dataset b = forcelr::make_blobs(cfg);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 31u);
  EXPECT_EQ(a.c, 1u);
  EXPECT_EQ(a.h, 8u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.labels[i], int(i % 3));

  cfg.seed = 43;
  const Dataset c = forcelr::make_blobs(cfg);
  EXPECT_NE(a.images, c.images);
}

TEST(Blobs, NoiselessImagesAreBumps) {
  BlobConfig cfg;
  cfg.noise = 0.0;
  cfg.samples = 8;
  const Dataset ds = forcelr::make_blobs(cfg);
  for (float v : ds.images) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Blobs, ConfigValidation) {
  BlobConfig cfg;
  cfg.classes = 1;
  EXPECT_THROW(forcelr::make_blobs(cfg), std::invalid_argument);
  cfg.classes = 2;
  cfg.noise = -0.1;
  EXPECT_THROW(forcelr::make_blobs(cfg), std::invalid_argument);
  cfg.noise = 0.1;
  cfg.samples = 0;
  EXPECT_THROW(forcelr::make_blobs(cfg), std::invalid_argument);
}

TEST(Dataset, GatherCopiesSelectedSamples) {
  BlobConfig cfg;
  cfg.samples = 10;
  const Dataset ds = forcelr::make_blobs(cfg);
  const auto batch = ds.gather<double>({3, 7});
  EXPECT_EQ(batch.b, 2u);
  EXPECT_EQ(batch.features(), ds.sample_len());
  for (std::size_t k = 0; k < ds.sample_len(); ++k) {
    EXPECT_EQ(batch.v[k], double(ds.images[3 * ds.sample_len() + k]));
    EXPECT_EQ(batch.v[ds.sample_len() + k],
              double(ds.images[7 * ds.sample_len() + k]));
  }
  EXPECT_THROW(ds.gather<float>({10}), std::out_of_range);
}

TEST(Dataset, ValidateCatchesInconsistencies) {
  Dataset ds;
  ds.classes = 2;
  ds.c = ds.h = ds.w = 2;
  ds.images.assign(2 * 8, 0.0f);
  ds.labels = {0, 1};
  EXPECT_NO_THROW(ds.validate());
  ds.labels = {0, 2};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.labels = {0};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}
