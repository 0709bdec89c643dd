#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/archive.hpp"
#include "forcelr/experiment.hpp"
#include "forcelr/net.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using forcelr::Conv2D;
using forcelr::Dense;
using forcelr::MicroNet;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "forcelr_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MicroNet<float> sample_net(std::uint64_t seed) {
  MicroNet<float> net =
      forcelr::build_net<float>(forcelr::tiny_convnet_arch(2), 1, 8, 8, 2);
  forcelr::init_net(net, seed);
  return net;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST(Archive, SaveLoadSaveIsByteIdentical) {
  const fs::path a = fresh_dir("archive_a"), b = fresh_dir("archive_b");
  const MicroNet<float> net = sample_net(5);
  forcelr::save_archive(a, net, 5);
  const forcelr::ModelArchive loaded = forcelr::load_archive(a);
  forcelr::save_archive(b, loaded.net, 5);
  EXPECT_EQ(forcelr::hash_archive(a), forcelr::hash_archive(b));
}

TEST(Archive, LoadRestoresExactParameters) {
  const fs::path dir = fresh_dir("archive_exact");
  const MicroNet<float> net = sample_net(9);
  forcelr::save_archive(dir, net, 9);
  const MicroNet<float> back = forcelr::load_archive(dir).net;
  for (const std::size_t li : net.conv_indices()) {
    const auto& orig = std::get<Conv2D<float>>(net.layers[li]);
    const auto& got = std::get<Conv2D<float>>(back.layers[li]);
    EXPECT_EQ(orig.weight, got.weight);
    EXPECT_EQ(orig.bias, got.bias);
  }
  EXPECT_EQ(std::get<Dense<float>>(net.layers[6]).weight,
            std::get<Dense<float>>(back.layers[6]).weight);
  EXPECT_EQ(back.in_h, 8u);
  EXPECT_EQ(back.classes, 2u);
}

TEST(Archive, ExpectedFilesOnDiskAndNoLeftoverTemps) {
  const fs::path dir = fresh_dir("archive_files");
  forcelr::save_archive(dir, sample_net(2), 2, {{"phase", "baseline"}});
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  for (const char* name :
       {"layer0.weight", "layer0.bias", "layer3.weight", "layer3.bias",
        "layer6.weight", "layer6.bias"})
    EXPECT_TRUE(fs::exists(dir / "blobs" / (std::string(name) + ".bin"))) << name;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    EXPECT_NE(e.path().extension(), ".tmp") << e.path();
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("format_version"), "forcelr/1");
  EXPECT_EQ(manifest.at("provenance").at("phase"), "baseline");
  // float32 little-endian payload: 8 filters x 1 channel x 3 x 3
  EXPECT_EQ(fs::file_size(dir / "blobs" / "layer0.weight.bin"), 8u * 9 * 4);
}

TEST(Archive, RejectsUnknownFormatVersion) {
  const fs::path dir = fresh_dir("archive_version");
  forcelr::save_archive(dir, sample_net(3), 3);
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  manifest["format_version"] = "forcelr/2";
  spit(dir / "manifest.json", manifest.dump(2));
  EXPECT_THROW(forcelr::load_archive(dir), std::runtime_error);
}

TEST(Archive, RejectsCorruptManifest) {
  const fs::path dir = fresh_dir("archive_corrupt");
  forcelr::save_archive(dir, sample_net(3), 3);
  spit(dir / "manifest.json", "{not json");
  try {
    forcelr::load_archive(dir);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("corrupt manifest"), std::string::npos);
  }
  EXPECT_THROW(forcelr::load_archive(fresh_dir("archive_empty")), std::runtime_error);
}

TEST(Archive, RejectsTruncatedBlob) {
  const fs::path dir = fresh_dir("archive_trunc");
  forcelr::save_archive(dir, sample_net(4), 4);
  const fs::path blob = dir / "blobs" / "layer3.weight.bin";
  const std::string bytes = slurp(blob);
  spit(blob, bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(forcelr::load_archive(dir), std::runtime_error);
}

TEST(Archive, RejectsShapeMismatch) {
  const fs::path dir = fresh_dir("archive_shape");
  forcelr::save_archive(dir, sample_net(4), 4);
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  manifest["tensors"][0]["shape"] = {4, 1, 3, 3};
  spit(dir / "manifest.json", manifest.dump(2));
  EXPECT_THROW(forcelr::load_archive(dir), std::runtime_error);
}

TEST(Archive, RejectsRenamedTensor) {
  const fs::path dir = fresh_dir("archive_rename");
  forcelr::save_archive(dir, sample_net(4), 4);
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  manifest["tensors"][0]["name"] = "layer1.weight";
  spit(dir / "manifest.json", manifest.dump(2));
  EXPECT_THROW(forcelr::load_archive(dir), std::runtime_error);
}

TEST(Archive, HashTracksContent) {
  const fs::path a = fresh_dir("archive_hash_a"), b = fresh_dir("archive_hash_b");
  forcelr::save_archive(a, sample_net(6), 6);
  forcelr::save_archive(b, sample_net(6), 6);
  EXPECT_EQ(forcelr::hash_archive(a), forcelr::hash_archive(b));

  const fs::path blob = b / "blobs" / "layer0.bias.bin";
  std::string bytes = slurp(blob);
  bytes[0] = char(bytes[0] ^ 0x01);
  spit(blob, bytes);
  EXPECT_NE(forcelr::hash_archive(a), forcelr::hash_archive(b));
}

TEST(Archive, DecomposedNetsRoundTrip) {
  // split stacks have two convs per original conv; the positional tensor
  // names must still line up after a load
  MicroNet<float> net = sample_net(8);
  forcelr::MicroNet<float> copy = net;
  forcelr::DecomposeOptions opt;
  opt.ranks = {4, 6};
  forcelr::decompose_net(copy, opt);
  const fs::path dir = fresh_dir("archive_decomposed");
  forcelr::save_archive(dir, copy, 8);
  const MicroNet<float> back = forcelr::load_archive(dir).net;
  ASSERT_EQ(back.conv_indices().size(), 4u);
  EXPECT_EQ(std::get<Conv2D<float>>(back.layers[0]).n_filters, 4u);
  EXPECT_EQ(std::get<Conv2D<float>>(back.layers[1]).kernel, 1u);
}
