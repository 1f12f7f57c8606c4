#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "doctest.h"
#include "prunekit/data.hpp"
#include "prunekit/errors.hpp"
#include "tempdir.hpp"

using namespace prunekit;
using namespace prunekit::testing;

namespace {

std::vector<char> be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
          static_cast<char>(v)};
}

std::vector<char> cat(std::initializer_list<std::vector<char>> parts) {
  std::vector<char> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Hand-assembled IDX pair: n images of rows x cols with pixel value (i + p) % 256.
void write_idx_by_hand(const TempDir& d, std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<char> pixels;
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) pixels.push_back(static_cast<char>(i % 256));
  std::vector<char> labels;
  for (std::uint32_t i = 0; i < n; ++i) labels.push_back(static_cast<char>(i % 10));
  write_bytes(d / "img", cat({be32(0x803), be32(n), be32(rows), be32(cols), pixels}));
  write_bytes(d / "lbl", cat({be32(0x801), be32(n), labels}));
}

std::string load_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "accepted";
}

}  // namespace

TEST_CASE("idx parses big-endian headers and scales pixels") {
  TempDir d;
  write_idx_by_hand(d, 3, 16, 16);
  const LabeledDataset ds = load_idx(d / "img", d / "lbl");
  CHECK(ds.images.shape() == Shape{3, 1, 16, 16});
  CHECK(ds.labels == std::vector<int>{0, 1, 2});
  CHECK(ds.num_classes == 10);
  CHECK(ds.images[0] == 0.0f);
  CHECK(ds.images[255] == 1.0f);
  CHECK(ds.images[51] == doctest::Approx(0.2));
  for (float v : ds.images.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("idx corruption classes") {
  TempDir d;
  write_idx_by_hand(d, 2, 4, 4);
  const auto img = read_bytes(d / "img");
  const auto lbl = read_bytes(d / "lbl");
  auto with = [&](const std::vector<char>& i, const std::vector<char>& l) {
    write_bytes(d / "i2", i);
    write_bytes(d / "l2", l);
    return load_error([&] { load_idx(d / "i2", d / "l2"); });
  };
  auto bad_magic = img;
  bad_magic[3] = 0x04;
  CHECK(with(bad_magic, lbl).find("magic") != std::string::npos);
  auto bad_label_magic = lbl;
  bad_label_magic[3] = 0x03;
  CHECK(with(img, bad_label_magic).find("magic") != std::string::npos);
  CHECK(with(cat({be32(0x803), be32(1), be32(28), be32(28)}), lbl).find("truncated") !=
        std::string::npos);
  CHECK(with({img.begin(), img.begin() + 10}, lbl).find("truncated") != std::string::npos);
  CHECK(with(img, {lbl.begin(), lbl.end() - 1}).find("truncated") != std::string::npos);
  auto longer = img;
  longer.push_back(0);
  CHECK(with(longer, lbl).find("trailing") != std::string::npos);
  write_idx_by_hand(d, 3, 4, 4);
  const auto three_labels = read_bytes(d / "lbl");
  CHECK(with(img, three_labels).find("count") != std::string::npos);
  auto bad_label = lbl;
  bad_label.back() = 12;
  CHECK(with(img, bad_label).find("label") != std::string::npos);
}

TEST_CASE("idx writer round-trips") {
  TempDir d;
  LabeledDataset ds = make_pattern_dataset(20, {1, 28, 28}, 10, 3);
  write_idx(ds, d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
  const LabeledDataset back = load_idx_dir(d.path(), Split::Train);
  CHECK(back.labels == ds.labels);
  for (std::size_t i = 0; i < ds.images.numel(); ++i) {
    CHECK(std::abs(back.images[i] - ds.images[i]) <= 0.5f / 255.0f + 1e-6f);
  }
}

TEST_CASE("cifar10 records") {
  TempDir d;
  std::vector<char> rec(3073);
  rec[0] = 7;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<char>(i % 251);
  write_bytes(d / "one.bin", rec);
  const LabeledDataset ds = load_cifar10_file(d / "one.bin");
  CHECK(ds.images.shape() == Shape{1, 3, 32, 32});
  CHECK(ds.labels == std::vector<int>{7});
  CHECK(ds.images.at(0, 1, 0, 0) == doctest::Approx((1025 % 251) / 255.0));

  write_cifar10_file(ds, d / "again.bin");
  CHECK(read_bytes(d / "again.bin") == rec);

  auto bad = rec;
  bad[0] = 17;
  write_bytes(d / "bad.bin", bad);
  CHECK(load_error([&] { load_cifar10_file(d / "bad.bin"); }).find("label") != std::string::npos);
  bad = rec;
  bad.pop_back();
  write_bytes(d / "bad.bin", bad);
  CHECK(load_error([&] { load_cifar10_file(d / "bad.bin"); }).find("3073") != std::string::npos);
  write_bytes(d / "bad.bin", {});
  CHECK(load_error([&] { load_cifar10_file(d / "bad.bin"); }).find("empty") != std::string::npos);
  CHECK(load_error([&] { load_cifar10_bin(d.path(), Split::Train); }).find("data_batch_1") !=
        std::string::npos);
}

TEST_CASE("cifar10 directory concatenates the five training batches") {
  TempDir d;
  const LabeledDataset ds = make_pattern_dataset(4, {3, 32, 32}, 10, 1);
  for (int i = 1; i <= 5; ++i) write_cifar10_file(ds, d / ("data_batch_" + std::to_string(i) + ".bin"));
  write_cifar10_file(ds, d / "test_batch.bin");
  CHECK(load_cifar10_bin(d.path(), Split::Train).size() == 20);
  CHECK(load_cifar10_bin(d.path(), Split::Test).size() == 4);
  CHECK(load_dataset(d.path(), DataFormat::Cifar10, Split::Train).size() == 20);
}

TEST_CASE("raw split files") {
  TempDir d;
  LabeledDataset ds = make_pattern_dataset(9, {2, 5, 5}, 3, 4);
  ds.split = Split::Val;
  save_raw_split(ds, d / "val.pkds");
  const LabeledDataset back = load_raw_dir(d.path(), Split::Val);
  CHECK(back.images == ds.images);
  CHECK(back.labels == ds.labels);
  CHECK(back.split == Split::Val);
  auto bytes = read_bytes(d / "val.pkds");
  bytes.resize(bytes.size() - 4);
  write_bytes(d / "val.pkds", bytes);
  CHECK_THROWS_AS(load_raw_split(d / "val.pkds"), FormatError);
  CHECK_THROWS_AS(data_format_from_string("jpeg"), std::invalid_argument);
}

TEST_CASE("split is a deterministic partition") {
  LabeledDataset ds = make_pattern_dataset(100, {1, 4, 4}, 2, 1);
  const auto [train, val] = split(ds, 0.1, 7);
  CHECK(train.size() == 90);
  CHECK(val.size() == 10);
  CHECK(val.split == Split::Val);
  const auto [train2, val2] = split(ds, 0.1, 7);
  CHECK(val2.images == val.images);
  CHECK(train2.labels == train.labels);
  CHECK_THROWS_AS(split(ds, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(ds, 1.0, 1), std::invalid_argument);

  // Each sample gets a unique first pixel so membership can be traced.
  LabeledDataset tagged = make_pattern_dataset(1000, {1, 2, 2}, 2, 2);
  for (std::size_t i = 0; i < 1000; ++i) tagged.images[i * 4] = static_cast<float>(i);
  auto ids = [](const LabeledDataset& part) {
    std::set<int> s;
    for (std::size_t i = 0; i < part.size(); ++i) s.insert(static_cast<int>(part.images[i * 4]));
    return s;
  };
  const auto [ta, va] = split(tagged, 0.2, 1);
  const auto [tb, vb] = split(tagged, 0.2, 2);
  std::set<int> all = ids(ta);
  for (int v : ids(va)) CHECK(all.insert(v).second);
  CHECK(all.size() == 1000);
  CHECK(ids(va) != ids(vb));
}

TEST_CASE("permutation covers every index once") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = permutation(257, seed);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
  }
  CHECK(permutation(50, 1) == permutation(50, 1));
  CHECK(permutation(50, 1) != permutation(50, 2));
}

TEST_CASE("adapt_to_shape pads and replicates") {
  const LabeledDataset ds = make_pattern_dataset(2, {1, 28, 28}, 10, 5);
  const LabeledDataset a = adapt_to_shape(ds, {3, 32, 32});
  CHECK(a.images.shape() == Shape{2, 3, 32, 32});
  CHECK(a.images.at(1, 0, 0, 0) == 0.0f);
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.images.at(1, c, 10, 12) == ds.images.at(1, 0, 8, 10));
  CHECK_THROWS_AS(adapt_to_shape(ds, {3, 16, 16}), ShapeError);
}

TEST_CASE("batches gather and optionally flip") {
  const LabeledDataset ds = make_pattern_dataset(5, {1, 2, 3}, 2, 9);
  const std::vector<std::size_t> idx{4, 1};
  const bool flips[] = {true, false};
  const Batch b = make_batch(ds, idx, flips);
  CHECK(b.labels == std::vector<int>{ds.labels[4], ds.labels[1]});
  CHECK(b.images.at(0, 0, 1, 0) == ds.images.at(4, 0, 1, 2));
  CHECK(b.images.at(1, 0, 1, 0) == ds.images.at(1, 0, 1, 0));
}

TEST_CASE("standardization uses reference statistics") {
  LabeledDataset train = make_pattern_dataset(50, {3, 4, 4}, 2, 1);
  LabeledDataset val = make_pattern_dataset(10, {3, 4, 4}, 2, 2);
  standardize_per_channel(val, train);
  standardize_per_channel(train, train);
  double mean = 0.0;
  for (std::size_t n = 0; n < 50; ++n)
    for (std::size_t i = 0; i < 16; ++i) mean += train.images[n * 48 + i];
  CHECK(mean / 800.0 == doctest::Approx(0.0).epsilon(1e-4).scale(1.0));
}
