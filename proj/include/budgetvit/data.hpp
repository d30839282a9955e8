// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "budgetvit/tensor.hpp"

namespace budgetvit {

enum class DataFormat { ImageDirectory, BinaryRecord, Synthetic };
enum class Split { Train, Val };

DataFormat parse_data_format(const std::string& s);
std::string to_string(DataFormat f);
std::string to_string(Split s);

/// 8-bit RGB image in planar [3, H, W] order.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

class Dataset {
 public:
  Dataset() = default;

  /// In-memory dataset; used by the synthetic generator and tests.
  static Dataset from_images(std::vector<Image> images, std::vector<int> labels, int num_classes, Split split,
                             DataFormat source = DataFormat::Synthetic);

  std::size_t size() const noexcept { return entries_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  Split split() const noexcept { return split_; }
  DataFormat source() const noexcept { return source_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  int label(std::size_t i) const { return entries_.at(i).label; }
  /// Decoded pixels, or nullopt (with a logged warning) if the file cannot
  /// be decoded.
  std::optional<Image> image(std::size_t i) const;
  std::vector<std::size_t> label_histogram() const;

 private:
  friend Dataset load_dataset(const std::filesystem::path&, DataFormat, Split);

  struct Entry {
    int label = 0;
    std::int64_t image = -1;  // index into images_, or -1 for a file path
    std::string path;
  };

  std::shared_ptr<const std::vector<Image>> images_;
  std::vector<Entry> entries_;
  std::vector<std::string> class_names_;
  int num_classes_ = 0;
  Split split_ = Split::Train;
  DataFormat source_ = DataFormat::Synthetic;
};

/// image-directory: root/<class_name>/*.{png,jpg,jpeg,bmp}, classes sorted by name.
/// binary-record: a file of 3073-byte records (label byte + 32x32 planar RGB),
/// or a directory holding data_batch_*.bin (train) / test_batch.bin (val) and
/// an optional batches.meta.txt with one class name per line.
Dataset load_dataset(const std::filesystem::path& path, DataFormat format, Split split);

/// Class-conditional geometric patterns with random colors, placement, scale
/// and pixel noise. Bit-exact for a fixed seed.
Dataset synthetic_dataset(int num_classes, int samples_per_class, int base_size, std::uint64_t seed,
                          Split split = Split::Train);

/// Writes the dataset in binary-record layout, resizing to 32x32 if needed.
void write_binary_records(const Dataset& ds, const std::filesystem::path& path);

struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static Normalization natural_images() { return {}; }
  static Normalization half() { return {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}; }
  bool operator==(const Normalization&) const = default;
};

struct BatchOptions {
  int image_size = 224;
  int batch_size = 64;
  int epoch = 0;
  std::uint64_t seed = 0;
  bool augment = true;
  Normalization norm;
  int patch_size = 16;
};

template <typename T>
struct Batch {
  Tensor<T> images;  // [B, 3, S, S]
  std::vector<int> labels;
  int image_size = 0;
  std::vector<std::size_t> indices;  // dataset positions
};

/// One epoch of batches. Train-split order is a permutation seeded by
/// (seed, epoch); val order is the dataset order. Augmentation draws are
/// seeded per (seed, epoch, sample) so they do not depend on batching.
template <typename T>
class BatchStream {
 public:
  BatchStream(const Dataset& ds, const BatchOptions& options);

  std::optional<Batch<T>> next();
  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  std::size_t skipped() const noexcept { return skipped_; }

 private:
  const Dataset* ds_;
  BatchOptions opt_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t skipped_ = 0;
};

template <typename T>
BatchStream<T> epoch_batches(const Dataset& ds, const BatchOptions& options) {
  return BatchStream<T>(ds, options);
}

/// Deterministic permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// In place: x[c] = (x[c] - mean[c]) / std[c] for a [3, H, W] tensor.
template <typename T>
void normalize(Tensor<T>& x, const Normalization& norm);

/// Decodes, crops/resizes to S x S, and normalizes one image.
template <typename T>
Tensor<T> preprocess(const Image& img, int size, bool augment, const Normalization& norm, std::uint64_t aug_seed);

}  // namespace budgetvit
