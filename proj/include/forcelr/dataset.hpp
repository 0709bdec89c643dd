#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/rng.hpp"
#include "forcelr/tensor.hpp"

namespace forcelr {

struct Dataset {
  std::size_t classes = 0, c = 0, h = 0, w = 0;
  std::vector<float> images;  // sample-major, c*h*w floats each
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_len() const { return c * h * w; }

  void validate() const {
    if (classes == 0 || c == 0 || h == 0 || w == 0)
      throw std::invalid_argument("Dataset: empty shape");
    if (images.size() != labels.size() * sample_len())
      throw std::invalid_argument("Dataset: image/label count mismatch");
    for (int l : labels)
      if (l < 0 || std::size_t(l) >= classes)
        throw std::invalid_argument("Dataset: label out of range");
  }

  template <class S>
  Tensor4<S> gather(const std::vector<std::size_t>& idx) const {
    Tensor4<S> out(idx.size(), c, h, w);
    const std::size_t len = sample_len();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (idx[b] >= size()) throw std::out_of_range("Dataset: sample index");
      const float* src = images.data() + idx[b] * len;
      S* dst = out.v.data() + b * len;
      for (std::size_t k = 0; k < len; ++k) dst[k] = S(src[k]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// IDX container (big-endian header: magic 0x00 0x00 dtype ndims, then one
// 4-byte big-endian length per dimension, then the raw payload).

struct IdxData {
  std::uint8_t dtype = 0x08;  // unsigned byte
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> payload;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                             std::uint8_t(v >> 8), std::uint8_t(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline IdxData read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  const std::uint32_t magic = detail::read_be32(in);
  if ((magic >> 16) != 0) throw std::runtime_error("idx: bad magic");
  IdxData d;
  d.dtype = std::uint8_t(magic >> 8);
  if (d.dtype != 0x08) throw std::runtime_error("idx: only u8 payloads supported");
  const std::size_t ndims = magic & 0xFF;
  if (ndims == 0 || ndims > 4) throw std::runtime_error("idx: unsupported rank");
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    d.dims.push_back(detail::read_be32(in));
    total *= d.dims.back();
  }
  d.payload.resize(total);
  in.read(reinterpret_cast<char*>(d.payload.data()), std::streamsize(total));
  if (!in) throw std::runtime_error("idx: truncated payload");
  return d;
}

inline void write_idx(const std::filesystem::path& path, const IdxData& d) {
  if (d.dims.empty() || d.dims.size() > 4)
    throw std::invalid_argument("idx: unsupported rank");
  std::size_t total = 1;
  for (std::size_t x : d.dims) total *= x;
  if (total != d.payload.size())
    throw std::invalid_argument("idx: dims/payload mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("idx: cannot write " + path.string());
  detail::write_be32(out, 0x00000800u | std::uint32_t(d.dims.size()));
  for (std::size_t x : d.dims) detail::write_be32(out, std::uint32_t(x));
  out.write(reinterpret_cast<const char*>(d.payload.data()),
            std::streamsize(d.payload.size()));
  if (!out) throw std::runtime_error("idx: write failed");
}

/// Pairs an image file (rank 3: n,h,w or rank 4: n,c,h,w) with a rank-1 label
/// file. Pixels are scaled from u8 to [0,1].
inline Dataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                std::size_t classes) {
  const IdxData imgs = read_idx(images_path);
  const IdxData labs = read_idx(labels_path);
  if (labs.dims.size() != 1) throw std::runtime_error("idx: labels must be rank 1");
  Dataset ds;
  ds.classes = classes;
  if (imgs.dims.size() == 3) {
    ds.c = 1;
    ds.h = imgs.dims[1];
    ds.w = imgs.dims[2];
  } else if (imgs.dims.size() == 4) {
    ds.c = imgs.dims[1];
    ds.h = imgs.dims[2];
    ds.w = imgs.dims[3];
  } else {
    throw std::runtime_error("idx: images must be rank 3 or 4");
  }
  if (imgs.dims[0] != labs.dims[0])
    throw std::runtime_error("idx: image/label count mismatch");
  ds.images.resize(imgs.payload.size());
  for (std::size_t i = 0; i < imgs.payload.size(); ++i)
    ds.images[i] = float(imgs.payload[i]) / 255.0f;
  ds.labels.assign(labs.payload.begin(), labs.payload.end());
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic blobs: one Gaussian bump per image whose center depends on the
// class (centers spread on a circle), plus per-sample center jitter and
// per-pixel noise. Labels are balanced round-robin.

struct BlobConfig {
  std::size_t classes = 2;
  std::size_t samples = 256;
  std::size_t size = 8;  // square single-channel images
  double noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (classes < 2) throw std::invalid_argument("blobs: need >= 2 classes");
    if (samples == 0 || size == 0) throw std::invalid_argument("blobs: empty config");
    if (noise < 0) throw std::invalid_argument("blobs: negative noise");
  }
};

inline Dataset make_blobs(const BlobConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.classes = cfg.classes;
  ds.c = 1;
  ds.h = cfg.size;
  ds.w = cfg.size;
  ds.images.resize(cfg.samples * cfg.size * cfg.size);
  ds.labels.resize(cfg.samples);

  SplitMix64 rng(derive_seed(cfg.seed, "blobs"));
  const double mid = (double(cfg.size) - 1.0) / 2.0;
  const double radius = double(cfg.size) / 4.0;
  const double bump_sigma = double(cfg.size) / 6.0;
  constexpr double kTau = 6.283185307179586;

  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::size_t cls = i % cfg.classes;
    ds.labels[i] = int(cls);
    const double angle = kTau * double(cls) / double(cfg.classes);
    const double cy = mid + radius * std::sin(angle) + 0.5 * rng.normal();
    const double cx = mid + radius * std::cos(angle) + 0.5 * rng.normal();
    float* img = ds.images.data() + i * cfg.size * cfg.size;
    for (std::size_t y = 0; y < cfg.size; ++y)
      for (std::size_t x = 0; x < cfg.size; ++x) {
        const double dy = double(y) - cy, dx = double(x) - cx;
        const double bump = std::exp(-(dx * dx + dy * dy) / (2 * bump_sigma * bump_sigma));
        img[y * cfg.size + x] = float(bump + cfg.noise * rng.normal());
      }
  }
  ds.validate();
  return ds;
}

}  // namespace forcelr
