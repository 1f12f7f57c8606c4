#include "prunekit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "container.hpp"
#include "prunekit/errors.hpp"

namespace prunekit {
namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;
constexpr std::string_view kRawTag = "PKDS";
constexpr std::uint32_t kRawVersion = 1;

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

float uniform01(std::mt19937_64& rng) {
  return static_cast<float>(static_cast<double>(rng() >> 40) / static_cast<double>(1ull << 24));
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

Shape LabeledDataset::sample_shape() const {
  if (images.rank() != 4) return {};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

void LabeledDataset::validate() const {
  if (images.rank() != 4) {
    throw FormatError("dataset images must be (N, C, H, W), got " +
                      shape_to_string(images.shape()));
  }
  if (images.dim(0) != labels.size()) {
    throw FormatError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw FormatError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                        " out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

LabeledDataset load_idx(const fs::path& images_path, const fs::path& labels_path,
                        std::size_t num_classes) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);
  const std::string iw = "'" + images_path.string() + "'";
  const std::string lw = "'" + labels_path.string() + "'";
  if (img.size() < 16) throw FormatError(iw + ": truncated IDX header");
  if (read_be32(img, 0) != kIdxImagesMagic) throw FormatError(iw + ": bad IDX image magic");
  if (lab.size() < 8) throw FormatError(lw + ": truncated IDX header");
  if (read_be32(lab, 0) != kIdxLabelsMagic) throw FormatError(lw + ": bad IDX label magic");
  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::size_t nl = read_be32(lab, 4);
  const std::size_t pixels = n * rows * cols;
  if (img.size() - 16 < pixels) {
    throw FormatError(iw + ": truncated payload (" + std::to_string(img.size() - 16) + " of " +
                      std::to_string(pixels) + " bytes)");
  }
  if (img.size() - 16 > pixels) throw FormatError(iw + ": trailing bytes after payload");
  if (lab.size() - 8 < nl) throw FormatError(lw + ": truncated payload");
  if (lab.size() - 8 > nl) throw FormatError(lw + ": trailing bytes after payload");
  if (n != nl) {
    throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                      std::to_string(nl));
  }
  if (n == 0) throw FormatError(iw + ": no images");
  LabeledDataset ds;
  ds.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < pixels; ++i) ds.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
  ds.num_classes = num_classes;
  ds.validate();
  return ds;
}

LabeledDataset load_idx_dir(const fs::path& dir, Split split) {
  const std::string prefix = split == Split::Test ? "t10k" : "train";
  LabeledDataset ds = load_idx(dir / (prefix + "-images-idx3-ubyte"),
                               dir / (prefix + "-labels-idx1-ubyte"));
  ds.split = split;
  return ds;
}

void write_idx(const LabeledDataset& ds, const fs::path& images_path,
               const fs::path& labels_path) {
  ds.validate();
  if (ds.images.dim(1) != 1) throw FormatError("IDX images must have one channel");
  std::vector<unsigned char> img, lab;
  put_be32(img, kIdxImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(ds.images.dim(2)));
  put_be32(img, static_cast<std::uint32_t>(ds.images.dim(3)));
  for (float v : ds.images.data()) img.push_back(to_byte(v));
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) lab.push_back(static_cast<unsigned char>(l));
  write_bytes(images_path, img);
  write_bytes(labels_path, lab);
}

LabeledDataset load_cifar10_file(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string where = "'" + path.string() + "'";
  if (bytes.empty()) throw FormatError(where + ": empty CIFAR-10 batch");
  if (bytes.size() % kCifarRecord != 0) {
    throw FormatError(where + ": length " + std::to_string(bytes.size()) +
                      " is not a multiple of the 3073-byte record size");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  LabeledDataset ds;
  ds.num_classes = 10;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] >= ds.num_classes) {
      throw FormatError(where + ": record " + std::to_string(r) + " has label " +
                        std::to_string(rec[0]) + " (>= 10 classes)");
    }
    ds.labels[r] = rec[0];
    float* dst = ds.images.ptr() + r * kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) dst[i] = static_cast<float>(rec[1 + i]) / 255.0f;
  }
  return ds;
}

LabeledDataset load_cifar10_bin(const fs::path& dir, Split split) {
  std::vector<fs::path> files;
  if (split == Split::Test) {
    files.push_back(dir / "test_batch.bin");
  } else {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  }
  std::vector<LabeledDataset> parts;
  std::size_t total = 0;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw FormatError("missing CIFAR-10 batch '" + f.string() + "'");
    parts.push_back(load_cifar10_file(f));
    total += parts.back().size();
  }
  LabeledDataset ds;
  ds.num_classes = 10;
  ds.split = split;
  ds.images = Tensor({total, 3, 32, 32});
  ds.labels.reserve(total);
  float* dst = ds.images.ptr();
  for (const auto& p : parts) {
    dst = std::copy(p.images.ptr(), p.images.ptr() + p.images.numel(), dst);
    ds.labels.insert(ds.labels.end(), p.labels.begin(), p.labels.end());
  }
  return ds;
}

void write_cifar10_file(const LabeledDataset& ds, const fs::path& path) {
  ds.validate();
  if (ds.sample_shape() != Shape{3, 32, 32}) {
    throw FormatError("CIFAR-10 records must be 3x32x32, got " +
                      shape_to_string(ds.sample_shape()));
  }
  std::vector<unsigned char> bytes;
  bytes.reserve(ds.size() * kCifarRecord);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    bytes.push_back(static_cast<unsigned char>(ds.labels[r]));
    const float* src = ds.images.ptr() + r * kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) bytes.push_back(to_byte(src[i]));
  }
  write_bytes(path, bytes);
}

void save_raw_split(const LabeledDataset& ds, const fs::path& path) {
  ds.validate();
  const nlohmann::json header = {{"images_shape", ds.images.shape()},
                                 {"num_classes", ds.num_classes},
                                 {"split", std::string(to_string(ds.split))}};
  std::vector<unsigned char> payload;
  detail::append_f32_le(payload, ds.images.data());
  detail::append_i32_le(payload, ds.labels);
  detail::write_container(path, kRawTag, kRawVersion, header, payload);
}

LabeledDataset load_raw_split(const fs::path& path) {
  const detail::Container c = detail::read_container(path, kRawTag, kRawVersion);
  const std::string where = "'" + path.string() + "'";
  LabeledDataset ds;
  Shape shape;
  try {
    shape = c.header.at("images_shape").get<Shape>();
    ds.num_classes = c.header.at("num_classes").get<std::size_t>();
    const std::string s = c.header.at("split").get<std::string>();
    ds.split = s == "val" ? Split::Val : s == "test" ? Split::Test : Split::Train;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  }
  if (shape.size() != 4) throw FormatError(where + ": images_shape must have 4 dims");
  const std::size_t n = shape[0];
  const std::size_t numel = shape_numel(shape);
  if (c.payload.size() != 4 * (numel + n)) {
    throw FormatError(where + ": payload of " + std::to_string(c.payload.size()) +
                      " bytes, header implies " + std::to_string(4 * (numel + n)));
  }
  ds.images = Tensor(shape);
  detail::read_f32_le(c.payload.data(), numel, ds.images.ptr());
  ds.labels.resize(n);
  detail::read_i32_le(c.payload.data() + 4 * numel, n, ds.labels.data());
  ds.validate();
  return ds;
}

LabeledDataset load_raw_dir(const fs::path& dir, Split split) {
  return load_raw_split(dir / (std::string(to_string(split)) + ".pkds"));
}

DataFormat data_format_from_string(std::string_view name) {
  if (name == "idx") return DataFormat::Idx;
  if (name == "cifar10") return DataFormat::Cifar10;
  if (name == "raw") return DataFormat::Raw;
  throw std::invalid_argument("unknown data format '" + std::string(name) + "'");
}

LabeledDataset load_dataset(const fs::path& dir, DataFormat format, Split split) {
  switch (format) {
    case DataFormat::Idx:
      return load_idx_dir(dir, split);
    case DataFormat::Cifar10:
      return load_cifar10_bin(dir, split);
    case DataFormat::Raw:
      return load_raw_dir(dir, split);
  }
  throw std::invalid_argument("unknown data format");
}

std::vector<fs::path> dataset_files(const fs::path& dir, DataFormat format, Split split) {
  switch (format) {
    case DataFormat::Idx: {
      const std::string prefix = split == Split::Test ? "t10k" : "train";
      return {dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte")};
    }
    case DataFormat::Cifar10: {
      if (split == Split::Test) return {dir / "test_batch.bin"};
      std::vector<fs::path> files;
      for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
      return files;
    }
    case DataFormat::Raw:
      return {dir / (std::string(to_string(split)) + ".pkds")};
  }
  throw std::invalid_argument("unknown data format");
}

DataFormat detect_data_format(const fs::path& dir) {
  for (DataFormat f : {DataFormat::Idx, DataFormat::Cifar10, DataFormat::Raw}) {
    if (fs::exists(dataset_files(dir, f, Split::Train).front())) return f;
  }
  throw FormatError("no IDX, CIFAR-10 or raw training files found in '" + dir.string() + "'");
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  const Shape s = ds.sample_shape();
  const std::size_t per = shape_numel(s);
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.images = Tensor({indices.size(), s[0], s[1], s[2]});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw std::out_of_range("subset index out of range");
    const float* src = ds.images.ptr() + indices[i] * per;
    std::copy(src, src + per, out.images.ptr() + i * per);
    out.labels.push_back(ds.labels[indices[i]]);
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double val_fraction,
                                                std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must be in (0, 1)");
  }
  const std::size_t n = ds.size();
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) {
    throw std::invalid_argument("val_fraction " + std::to_string(val_fraction) + " on " +
                                std::to_string(n) + " samples leaves an empty split");
  }
  auto order = permutation(n, seed);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  auto result = std::make_pair(subset(ds, train_idx), subset(ds, val_idx));
  result.first.split = Split::Train;
  result.second.split = Split::Val;
  return result;
}

LabeledDataset subsample(const LabeledDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n >= ds.size()) return ds;
  auto order = permutation(ds.size(), seed);
  order.resize(n);
  std::sort(order.begin(), order.end());
  return subset(ds, order);
}

void standardize_per_channel(LabeledDataset& ds, const LabeledDataset& reference) {
  const Shape s = reference.sample_shape();
  if (ds.sample_shape() != s) throw ShapeError("standardize: sample shapes differ");
  const std::size_t c = s[0], hw = s[1] * s[2];
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const float* p = reference.images.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum += p[k];
        sq += static_cast<double>(p[k]) * p[k];
      }
    }
    const double count = static_cast<double>(reference.size() * hw);
    const double mean = sum / count;
    const double sd = std::sqrt(std::max(sq / count - mean * mean, 1e-12));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      float* p = ds.images.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) p[k] = static_cast<float>((p[k] - mean) / sd);
    }
  }
}

LabeledDataset adapt_to_shape(const LabeledDataset& ds, const Shape& chw) {
  const Shape s = ds.sample_shape();
  if (chw.size() != 3) throw ShapeError("target shape must be (C, H, W)");
  if (s[0] != chw[0] && s[0] != 1) {
    throw ShapeError("cannot map " + std::to_string(s[0]) + " channels to " +
                     std::to_string(chw[0]));
  }
  if (s[1] > chw[1] || s[2] > chw[2]) {
    throw ShapeError("cannot pad " + shape_to_string(s) + " down to " + shape_to_string(chw));
  }
  const std::size_t top = (chw[1] - s[1]) / 2, left = (chw[2] - s[2]) / 2;
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.labels = ds.labels;
  out.images = Tensor({ds.size(), chw[0], chw[1], chw[2]});
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t c = 0; c < chw[0]; ++c) {
      const std::size_t src_c = s[0] == 1 ? 0 : c;
      for (std::size_t h = 0; h < s[1]; ++h) {
        for (std::size_t w = 0; w < s[2]; ++w) {
          out.images.at(n, c, h + top, w + left) = ds.images.at(n, src_c, h, w);
        }
      }
    }
  }
  return out;
}

Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices,
                 std::span<const bool> flip_mask) {
  const Shape s = ds.sample_shape();
  const std::size_t per = shape_numel(s);
  Batch b{Tensor({indices.size(), s[0], s[1], s[2]}), {}};
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* src = ds.images.ptr() + indices[i] * per;
    float* dst = b.images.ptr() + i * per;
    if (!flip_mask.empty() && flip_mask[i]) {
      for (std::size_t row = 0; row < s[0] * s[1]; ++row) {
        std::reverse_copy(src + row * s[2], src + (row + 1) * s[2], dst + row * s[2]);
      }
    } else {
      std::copy(src, src + per, dst);
    }
    b.labels.push_back(ds.labels[indices[i]]);
  }
  return b;
}

LabeledDataset make_pattern_dataset(std::size_t n, const Shape& chw, std::size_t num_classes,
                                    std::uint64_t seed, float noise) {
  if (chw.size() != 3 || num_classes < 2) throw std::invalid_argument("bad pattern dataset spec");
  std::mt19937_64 rng(seed);
  const std::size_t c = chw[0], h = chw[1], w = chw[2];
  // Templates: sum of a few random low-frequency waves per class and channel.
  std::vector<float> templates(num_classes * c * h * w);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float fy = 0.5f + 2.5f * uniform01(rng), fx = 0.5f + 2.5f * uniform01(rng);
      const float py = 6.2831853f * uniform01(rng), px = 6.2831853f * uniform01(rng);
      const float cy = uniform01(rng) * static_cast<float>(h), cx = uniform01(rng) * static_cast<float>(w);
      const float radius = 0.2f * static_cast<float>(std::max(h, w)) * (1.0f + uniform01(rng));
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const float wave = std::sin(fy * 6.2831853f * y / h + py) *
                             std::cos(fx * 6.2831853f * x / w + px);
          const float dy = static_cast<float>(y) - cy, dx = static_cast<float>(x) - cx;
          const float blob = std::exp(-(dy * dy + dx * dx) / (2.0f * radius * radius));
          templates[((k * c + ch) * h + y) * w + x] = 0.5f + 0.25f * wave + 0.35f * (blob - 0.3f);
        }
      }
    }
  }
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.images = Tensor({n, c, h, w});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = uniform_index(rng, num_classes);
    ds.labels[i] = static_cast<int>(k);
    const long sy = static_cast<long>(uniform_index(rng, 5)) - 2;
    const long sx = static_cast<long>(uniform_index(rng, 5)) - 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long ty = std::clamp<long>(static_cast<long>(y) + sy, 0, static_cast<long>(h) - 1);
          const long tx = std::clamp<long>(static_cast<long>(x) + sx, 0, static_cast<long>(w) - 1);
          const float base = templates[((k * c + ch) * h + static_cast<std::size_t>(ty)) * w +
                                       static_cast<std::size_t>(tx)];
          const float v = base + noise * (2.0f * uniform01(rng) - 1.0f);
          ds.images.at(i, ch, y, x) = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
  return ds;
}

LabeledDataset make_stripes_dataset(std::size_t n, const Shape& chw, std::uint64_t seed,
                                    float noise) {
  if (chw.size() != 3) throw std::invalid_argument("bad stripes dataset spec");
  std::mt19937_64 rng(seed);
  const std::size_t c = chw[0], h = chw[1], w = chw[2];
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.images = Tensor({n, c, h, w});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.labels[i] = label;
    const std::size_t phase = uniform_index(rng, 2);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t coord = label == 0 ? y : x;
          const float base = ((coord + phase) % 2 == 0) ? 0.8f : 0.2f;
          const float v = base + noise * (2.0f * uniform01(rng) - 1.0f);
          ds.images.at(i, ch, y, x) = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
  return ds;
}

}  // namespace prunekit
