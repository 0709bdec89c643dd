#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/net.hpp"
#include "forcelr/rng.hpp"
#include "json.hpp"

namespace forcelr {

inline constexpr const char* kArchiveFormat = "forcelr/1";

namespace detail {

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("archive: cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("archive: write failed " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string float_blob_le(const std::vector<float>& v) {
  std::string bytes(v.size() * 4, '\0');
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &v[i], 4);
    bytes[4 * i + 0] = char(u & 0xFF);
    bytes[4 * i + 1] = char((u >> 8) & 0xFF);
    bytes[4 * i + 2] = char((u >> 16) & 0xFF);
    bytes[4 * i + 3] = char((u >> 24) & 0xFF);
  }
  return bytes;
}

inline std::vector<float> floats_from_le(const std::string& bytes) {
  if (bytes.size() % 4 != 0) throw std::runtime_error("archive: blob not float32");
  std::vector<float> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::uint32_t u = std::uint32_t(std::uint8_t(bytes[4 * i + 0])) |
                            (std::uint32_t(std::uint8_t(bytes[4 * i + 1])) << 8) |
                            (std::uint32_t(std::uint8_t(bytes[4 * i + 2])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[4 * i + 3])) << 24);
    std::memcpy(&v[i], &u, 4);
  }
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("archive: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// Parameter tensors in layer order; names are positional so a manifest can
/// be matched back to the stack without guessing.
template <class S>
std::vector<TensorRef> collect_tensors(const MicroNet<S>& net) {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          const std::string base = "layer" + std::to_string(i);
          if constexpr (std::is_same_v<L, Conv2D<S>>) {
            TensorRef w{base + ".weight", {l.n_filters, l.in_c, l.kernel, l.kernel}, {}};
            w.data.assign(l.weight.begin(), l.weight.end());
            out.push_back(std::move(w));
            TensorRef b{base + ".bias", {l.n_filters}, {}};
            b.data.assign(l.bias.begin(), l.bias.end());
            out.push_back(std::move(b));
          } else if constexpr (std::is_same_v<L, Dense<S>>) {
            TensorRef w{base + ".weight", {l.out_dim, l.in_dim}, {}};
            w.data.assign(l.weight.begin(), l.weight.end());
            out.push_back(std::move(w));
            TensorRef b{base + ".bias", {l.out_dim}, {}};
            b.data.assign(l.bias.begin(), l.bias.end());
            out.push_back(std::move(b));
          }
        },
        net.layers[i]);
  }
  return out;
}

}  // namespace detail

/// Writes dir/manifest.json plus dir/blobs/<tensor>.bin. Every file lands via
/// write-temp-rename and the manifest goes last, so a reader never sees a
/// manifest that references half-written blobs. Provenance is caller-supplied
/// and must itself be deterministic for archives to be rerun-identical.
template <class S>
void save_archive(const std::filesystem::path& dir, const MicroNet<S>& net,
                  std::uint64_t seed, const nlohmann::json& provenance = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "blobs");

  nlohmann::json manifest;
  manifest["format_version"] = kArchiveFormat;
  manifest["arch"] = describe_arch(net);
  manifest["input"] = {{"c", net.in_c}, {"h", net.in_h}, {"w", net.in_w}};
  manifest["classes"] = net.classes;
  manifest["seed"] = seed;
  manifest["provenance"] = provenance;

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : detail::collect_tensors(net)) {
    const std::string rel = "blobs/" + t.name + ".bin";
    const std::string bytes = detail::float_blob_le(t.data);
    detail::write_file_atomic(dir / rel, bytes);
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"file", rel},
                       {"bytes", bytes.size()}});
  }
  manifest["tensors"] = tensors;
  detail::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct ModelArchive {
  nlohmann::json manifest;
  MicroNet<float> net;
};

inline ModelArchive load_archive(const std::filesystem::path& dir) {
  const std::filesystem::path mpath = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(mpath));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("archive: corrupt manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<std::string>() != kArchiveFormat)
    throw std::runtime_error("archive: unknown format version");

  const auto& input = manifest.at("input");
  ModelArchive ar{manifest,
                  build_net<float>(manifest.at("arch"), input.at("c").get<std::size_t>(),
                                   input.at("h").get<std::size_t>(),
                                   input.at("w").get<std::size_t>(),
                                   manifest.at("classes").get<std::size_t>())};

  auto expected = detail::collect_tensors(ar.net);
  const auto& tensors = manifest.at("tensors");
  if (!tensors.is_array() || tensors.size() != expected.size())
    throw std::runtime_error("archive: tensor list does not match architecture");

  for (std::size_t ti = 0; ti < expected.size(); ++ti) {
    const auto& entry = tensors[ti];
    const std::string name = entry.at("name").get<std::string>();
    if (name != expected[ti].name)
      throw std::runtime_error("archive: unexpected tensor '" + name + "'");
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != expected[ti].shape)
      throw std::runtime_error("archive: shape mismatch for '" + name + "'");
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    const std::string bytes = detail::read_file(dir / entry.at("file").get<std::string>());
    if (bytes.size() != entry.at("bytes").get<std::size_t>() || bytes.size() != count * 4)
      throw std::runtime_error("archive: blob length mismatch for '" + name + "'");
    const std::vector<float> data = detail::floats_from_le(bytes);

    const std::size_t li = std::stoul(name.substr(5));  // "layer<idx>.<which>"
    const bool is_weight = name.substr(name.find('.') + 1) == "weight";
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<float>> || std::is_same_v<L, Dense<float>>) {
            auto& dst = is_weight ? l.weight : l.bias;
            if (dst.size() != data.size())
              throw std::runtime_error("archive: size mismatch for '" + name + "'");
            dst = data;
          } else {
            throw std::runtime_error("archive: tensor for parameterless layer");
          }
        },
        ar.net.layers[li]);
  }
  return ar;
}

/// Order-stable content hash of manifest plus blobs (rerun-determinism checks).
inline std::uint64_t hash_archive(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files{dir / "manifest.json"};
  if (fs::exists(dir / "blobs"))
    for (const auto& e : fs::directory_iterator(dir / "blobs"))
      files.push_back(e.path());
  std::sort(files.begin() + 1, files.end());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& f : files) {
    h = fnv1a64(fs::relative(f, dir).generic_string(), h);
    h = fnv1a64(detail::read_file(f), h);
  }
  return h;
}

}  // namespace forcelr
