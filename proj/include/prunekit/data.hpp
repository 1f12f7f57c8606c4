#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

enum class Split { Train, Val, Test };
std::string_view to_string(Split split);

// Images (N, C, H, W) with values in [0, 1] (unless standardized), labels < num_classes.
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;  // (C, H, W)
  // Throws FormatError when shapes or labels are inconsistent.
  void validate() const;
};

// MNIST IDX container pair (big-endian; magic 0x00000803 images, 0x00000801 labels).
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::size_t num_classes = 10);
// Canonical file names inside `dir`: {train,t10k}-{images-idx3,labels-idx1}-ubyte.
LabeledDataset load_idx_dir(const std::filesystem::path& dir, Split split);
void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// CIFAR-10 binary batches: 3073-byte records (label byte + 3072 channel-major pixels).
LabeledDataset load_cifar10_file(const std::filesystem::path& path);
// Train: data_batch_1.bin .. data_batch_5.bin; Test: test_batch.bin.
LabeledDataset load_cifar10_bin(const std::filesystem::path& dir, Split split = Split::Train);
void write_cifar10_file(const LabeledDataset& ds, const std::filesystem::path& path);

// Raw split file (.pkds): same framing as checkpoints; header {"images_shape", "num_classes",
// "split"}, payload float32 images then int32 labels, little-endian.
void save_raw_split(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_raw_split(const std::filesystem::path& path);
// <dir>/{train,val,test}.pkds
LabeledDataset load_raw_dir(const std::filesystem::path& dir, Split split);

enum class DataFormat { Idx, Cifar10, Raw };
DataFormat data_format_from_string(std::string_view name);
LabeledDataset load_dataset(const std::filesystem::path& dir, DataFormat format,
                            Split split = Split::Train);
// Files a loader reads for the split, in read order.
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir,
                                                 DataFormat format, Split split = Split::Train);
// Picks the format whose canonical training files exist in `dir`; FormatError if none.
DataFormat detect_data_format(const std::filesystem::path& dir);

// Deterministic disjoint partition; validation gets round(val_fraction * N) samples.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double val_fraction,
                                                std::uint64_t seed);
LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices);
// Seeded random subsample of at most n samples (identity when n >= size).
LabeledDataset subsample(const LabeledDataset& ds, std::size_t n, std::uint64_t seed);

// Seeded permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

// Per-channel zero-mean / unit-variance, statistics from `reference`.
void standardize_per_channel(LabeledDataset& ds, const LabeledDataset& reference);

// Replicates single-channel images to `channels` and zero-pads (centred) to h x w.
LabeledDataset adapt_to_shape(const LabeledDataset& ds, const Shape& chw);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};
// Gathers the given samples; `hflip` mirrors every other sample horizontally
// according to `flip_mask` (same length as indices) when provided.
Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices,
                 std::span<const bool> flip_mask = {});

// Class-conditional synthetic images: each class owns a smooth random template;
// samples are template + uniform noise + random integer shift, clipped to [0, 1].
LabeledDataset make_pattern_dataset(std::size_t n, const Shape& chw, std::size_t num_classes,
                                    std::uint64_t seed, float noise = 0.25f);
// Two classes: horizontal vs vertical stripes with random phase and noise.
LabeledDataset make_stripes_dataset(std::size_t n, const Shape& chw, std::uint64_t seed,
                                    float noise = 0.2f);

}  // namespace prunekit
