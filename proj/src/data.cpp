// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>

#include "budgetvit/errors.hpp"
#include "budgetvit/numerics.hpp"
#include "budgetvit/random.hpp"

namespace fs = std::filesystem;

namespace budgetvit {
namespace {

constexpr std::size_t kRecordSide = 32;
constexpr std::size_t kRecordPixels = 3 * kRecordSide * kRecordSide;
constexpr std::size_t kRecordBytes = 1 + kRecordPixels;
constexpr int kBinaryClasses = 10;

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<Image> read_records(const fs::path& file, std::vector<int>& labels, int num_classes) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open binary-record file " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IngestionError(file.string() + ": file is empty");
  if (bytes.size() % kRecordBytes != 0) {
    throw IngestionError(file.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                         std::to_string(kRecordBytes) + "-byte record; truncated record at offset " +
                         std::to_string(bytes.size() / kRecordBytes * kRecordBytes));
  }
  const std::size_t n = bytes.size() / kRecordBytes;
  std::vector<Image> images;
  images.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data() + r * kRecordBytes);
    if (rec[0] >= num_classes) {
      throw IngestionError(file.string() + ": corrupt record " + std::to_string(r) + ", label " +
                           std::to_string(rec[0]) + " >= " + std::to_string(num_classes));
    }
    labels.push_back(rec[0]);
    Image img{static_cast<int>(kRecordSide), static_cast<int>(kRecordSide),
              std::vector<std::uint8_t>(rec + 1, rec + kRecordBytes)};
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<std::string> read_class_names(const fs::path& meta) {
  std::vector<std::string> names;
  std::ifstream in(meta);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

// Float image in [0, 1], planar.
template <typename T>
Tensor<T> to_unit_tensor(const Image& img) {
  Tensor<T> t({3, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(img.pixels[i]) / T(255);
  return t;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const std::size_t H = x.dim(1), W = x.dim(2);
  Tensor<T> out({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = x.data() + c * H * W + (y0 + i) * W + x0;
      std::copy(src, src + w, out.data() + c * h * w + i * w);
    }
  }
  return out;
}

}  // namespace

DataFormat parse_data_format(const std::string& s) {
  if (s == "image-directory") return DataFormat::ImageDirectory;
  if (s == "binary-record") return DataFormat::BinaryRecord;
  if (s == "synthetic") return DataFormat::Synthetic;
  throw ArgumentError("unknown data format '" + s + "' (expected image-directory, binary-record or synthetic)");
}

std::string to_string(DataFormat f) {
  switch (f) {
    case DataFormat::ImageDirectory:
      return "image-directory";
    case DataFormat::BinaryRecord:
      return "binary-record";
    case DataFormat::Synthetic:
      return "synthetic";
  }
  return "?";
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "val"; }

// ---- Dataset --------------------------------------------------------------

Dataset Dataset::from_images(std::vector<Image> images, std::vector<int> labels, int num_classes, Split split,
                             DataFormat source) {
  if (images.size() != labels.size()) throw IngestionError("image/label count mismatch");
  if (images.empty()) throw IngestionError("dataset has no samples");
  if (num_classes < 1) throw IngestionError("dataset needs at least one class");
  Dataset ds;
  ds.num_classes_ = num_classes;
  ds.split_ = split;
  ds.source_ = source;
  for (int c = 0; c < num_classes; ++c) ds.class_names_.push_back(std::to_string(c));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.pixels.size() != static_cast<std::size_t>(3 * img.height * img.width) || img.height < 1 ||
        img.width < 1) {
      throw IngestionError("image " + std::to_string(i) + " has inconsistent extents");
    }
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw IngestionError("sample " + std::to_string(i) + " label " + std::to_string(labels[i]) +
                           " outside [0, " + std::to_string(num_classes) + ")");
    }
    ds.entries_.push_back({labels[i], static_cast<std::int64_t>(i), {}});
  }
  ds.images_ = std::make_shared<const std::vector<Image>>(std::move(images));
  return ds;
}

std::optional<Image> Dataset::image(std::size_t i) const {
  const Entry& e = entries_.at(i);
  if (e.image >= 0) return (*images_)[static_cast<std::size_t>(e.image)];
  cv::Mat bgr = cv::imread(e.path, cv::IMREAD_COLOR);
  if (bgr.empty()) {
    spdlog::warn("skipping undecodable image {}", e.path);
    return std::nullopt;
  }
  Image img{bgr.rows, bgr.cols, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * bgr.rows * bgr.cols))};
  const std::size_t plane = static_cast<std::size_t>(bgr.rows * bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const std::size_t o = static_cast<std::size_t>(y * bgr.cols + x);
      img.pixels[o] = row[x][2];
      img.pixels[plane + o] = row[x][1];
      img.pixels[2 * plane + o] = row[x][0];
    }
  }
  return img;
}

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(num_classes_), 0);
  for (const auto& e : entries_) ++h[static_cast<std::size_t>(e.label)];
  return h;
}

Dataset load_dataset(const fs::path& path, DataFormat format, Split split) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw IngestionError("data path does not exist: " + path.string());
  if (format == DataFormat::Synthetic) {
    throw IngestionError("synthetic datasets are generated, not loaded (path " + path.string() + ")");
  }
  Dataset ds;
  ds.split_ = split;
  ds.source_ = format;

  if (format == DataFormat::ImageDirectory) {
    if (!fs::is_directory(path)) throw IngestionError("image-directory path is not a directory: " + path.string());
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw IngestionError("no class directories under " + path.string());
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
        if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
      }
      if (files.empty()) throw IngestionError("class directory has no images: " + class_dirs[c].string());
      std::sort(files.begin(), files.end());
      ds.class_names_.push_back(class_dirs[c].filename().string());
      for (const auto& f : files) ds.entries_.push_back({static_cast<int>(c), -1, f.string()});
    }
    ds.num_classes_ = static_cast<int>(class_dirs.size());
    return ds;
  }

  std::vector<fs::path> files;
  fs::path meta;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      const bool train_file = name.rfind("data_batch_", 0) == 0 && entry.path().extension() == ".bin";
      const bool val_file = name == "test_batch.bin";
      if ((split == Split::Train && train_file) || (split == Split::Val && val_file)) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    meta = path / "batches.meta.txt";
    if (files.empty()) throw IngestionError("no " + to_string(split) + " record files under " + path.string());
  } else {
    files.push_back(path);
    meta = path.parent_path() / "batches.meta.txt";
  }
  std::vector<std::string> names = fs::exists(meta, ec) ? read_class_names(meta) : std::vector<std::string>{};
  if (names.empty()) {
    for (int c = 0; c < kBinaryClasses; ++c) names.push_back(std::to_string(c));
  }
  std::vector<int> labels;
  std::vector<Image> images;
  for (const auto& f : files) {
    auto part = read_records(f, labels, static_cast<int>(names.size()));
    images.insert(images.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  Dataset out = Dataset::from_images(std::move(images), std::move(labels), static_cast<int>(names.size()), split,
                                     DataFormat::BinaryRecord);
  out.class_names_ = std::move(names);
  return out;
}

// ---- synthetic ------------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
  double luma() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
};

// Membership test for pattern `kind` at normalized coordinates (u, v).
struct Pattern {
  int kind;
  double cx, cy, radius, period, phase;

  bool inside(double u, double v) const {
    const double dx = u - cx, dy = v - cy;
    const double ax = std::abs(dx), ay = std::abs(dy);
    const double two_pi = 6.283185307179586;
    switch (kind) {
      case 0:  // disk
        return dx * dx + dy * dy < radius * radius;
      case 1:  // square
        return std::max(ax, ay) < 0.85 * radius;
      case 2: {  // upward triangle
        const double top = cy - radius, base = cy + 0.6 * radius;
        if (v < top || v > base) return false;
        const double half = (v - top) / (base - top) * radius;
        return ax < half;
      }
      case 3:  // plus
        return (ax < 0.3 * radius && ay < radius) || (ay < 0.3 * radius && ax < radius);
      case 4: {  // ring
        const double d2 = dx * dx + dy * dy;
        return d2 < radius * radius && d2 > 0.36 * radius * radius;
      }
      case 5:  // horizontal stripes
        return std::sin(two_pi * v / period + phase) > 0.0;
      case 6:  // vertical stripes
        return std::sin(two_pi * u / period + phase) > 0.0;
      case 7:  // checkerboard
        return (std::sin(two_pi * u / period + phase) > 0.0) != (std::sin(two_pi * v / period + phase) > 0.0);
      case 8:  // diagonal cross
        return std::max(ax, ay) < radius && (std::abs(dx - dy) < 0.25 * radius || std::abs(dx + dy) < 0.25 * radius);
      default:  // diamond
        return ax + ay < radius;
    }
  }
};

Image render_sample(int label, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u01 = [&] { return unit_uniform(rng); };
  auto color = [&] { return Rgb{u01(), u01(), u01()}; };

  const int kind = label % 10;
  const int band = label / 10;
  Rgb bg = color();
  Rgb fg = color();
  for (int tries = 0; tries < 64 && std::abs(fg.luma() - bg.luma()) < 0.3; ++tries) fg = color();
  if (band > 0) {
    // Beyond ten classes the foreground hue band disambiguates.
    const double t = std::fmod(0.37 * band, 1.0);
    fg = Rgb{0.5 + 0.5 * std::sin(6.2832 * t), 0.5 + 0.5 * std::sin(6.2832 * (t + 0.33)),
             0.5 + 0.5 * std::sin(6.2832 * (t + 0.67))};
  }
  Pattern pat{kind, 0.3 + 0.4 * u01(), 0.3 + 0.4 * u01(), 0.18 + 0.14 * u01(), 0.14 + 0.12 * u01(), 6.2832 * u01()};

  std::normal_distribution<double> noise(0.0, 0.06);
  Image img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * size * size))};
  const std::size_t plane = static_cast<std::size_t>(size * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      const Rgb& c = pat.inside(u, v) ? fg : bg;
      const double ch[3] = {c.r, c.g, c.b};
      for (int k = 0; k < 3; ++k) {
        const double val = std::clamp(ch[k] + noise(rng), 0.0, 1.0);
        img.pixels[static_cast<std::size_t>(k) * plane + static_cast<std::size_t>(y * size + x)] =
            static_cast<std::uint8_t>(std::lround(val * 255.0));
      }
    }
  }
  return img;
}

}  // namespace

Dataset synthetic_dataset(int num_classes, int samples_per_class, int base_size, std::uint64_t seed, Split split) {
  if (num_classes < 1 || samples_per_class < 1 || base_size < 1) {
    throw ArgumentError("synthetic_dataset: all arguments must be positive");
  }
  std::vector<Image> images;
  std::vector<int> labels;
  images.reserve(static_cast<std::size_t>(num_classes * samples_per_class));
  for (int i = 0; i < samples_per_class; ++i) {
    for (int c = 0; c < num_classes; ++c) {
      // The split lives in the top bit so train and val never share a draw.
      const std::uint64_t index = static_cast<std::uint64_t>(i) | (split == Split::Val ? 1ull << 63 : 0ull);
      const std::uint64_t s = derive_seed(seed, Stream::Synthetic, static_cast<std::uint64_t>(c), index);
      images.push_back(render_sample(c, base_size, s));
      labels.push_back(c);
    }
  }
  return Dataset::from_images(std::move(images), std::move(labels), num_classes, split, DataFormat::Synthetic);
}

void write_binary_records(const Dataset& ds, const fs::path& path) {
  if (ds.num_classes() > 256) throw ArgumentError("binary-record labels are a single byte");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto img = ds.image(i);
    if (!img) continue;
    std::vector<std::uint8_t> pixels = img->pixels;
    if (img->height != static_cast<int>(kRecordSide) || img->width != static_cast<int>(kRecordSide)) {
      Tensor<double> t = bilinear_resize(to_unit_tensor<double>(*img), kRecordSide, kRecordSide, false);
      pixels.resize(kRecordPixels);
      for (std::size_t k = 0; k < kRecordPixels; ++k) {
        pixels[k] = static_cast<std::uint8_t>(std::lround(std::clamp(t[k], 0.0, 1.0) * 255.0));
      }
    }
    out.put(static_cast<char>(ds.label(i)));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  }
  if (!out) throw IngestionError("failed writing " + path.string());
}

// ---- batching -------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, Stream::DataOrder, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

template <typename T>
Tensor<T> preprocess(const Image& img, int size, bool augment, const Normalization& norm, std::uint64_t aug_seed) {
  Tensor<T> x = to_unit_tensor<T>(img);
  const auto h = static_cast<std::size_t>(img.height), w = static_cast<std::size_t>(img.width);
  const auto s = static_cast<std::size_t>(size);
  Tensor<T> out;
  if (augment) {
    std::mt19937_64 rng(aug_seed);
    const double area = static_cast<double>(h * w);
    std::size_t ch = std::min(h, w), cw = ch;
    std::size_t y0 = (h - ch) / 2, x0 = (w - cw) / 2;
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double scale = 0.64 + 0.36 * unit_uniform(rng);
      const double log_ratio = std::log(3.0 / 4.0) + (std::log(4.0 / 3.0) - std::log(3.0 / 4.0)) * unit_uniform(rng);
      const double ratio = std::exp(log_ratio);
      const auto tw = static_cast<std::size_t>(std::lround(std::sqrt(scale * area * ratio)));
      const auto th = static_cast<std::size_t>(std::lround(std::sqrt(scale * area / ratio)));
      if (tw >= 1 && th >= 1 && tw <= w && th <= h) {
        cw = tw;
        ch = th;
        y0 = static_cast<std::size_t>(rng() % (h - ch + 1));
        x0 = static_cast<std::size_t>(rng() % (w - cw + 1));
        break;
      }
    }
    out = bilinear_resize(crop(x, y0, x0, ch, cw), size, size, false);
    if (unit_uniform(rng) < 0.5) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < s; ++i) {
          T* row = out.data() + c * s * s + i * s;
          std::reverse(row, row + s);
        }
      }
    }
  } else {
    // Shorter side to `size`, then center crop.
    std::size_t rh = s, rw = s;
    if (h < w) {
      rw = std::max<std::size_t>(s, static_cast<std::size_t>(std::lround(static_cast<double>(w) * s / h)));
    } else if (w < h) {
      rh = std::max<std::size_t>(s, static_cast<std::size_t>(std::lround(static_cast<double>(h) * s / w)));
    }
    Tensor<T> resized = bilinear_resize(x, static_cast<int>(rh), static_cast<int>(rw), false);
    out = (rh == s && rw == s) ? std::move(resized) : crop(resized, (rh - s) / 2, (rw - s) / 2, s, s);
  }
  normalize(out, norm);
  return out;
}

template <typename T>
void normalize(Tensor<T>& x, const Normalization& norm) {
  if (x.rank() != 3 || x.dim(0) != 3) throw DimensionError("normalize: expected [3, H, W], got " + shape_str(x.shape()));
  const std::size_t plane = x.dim(1) * x.dim(2);
  for (std::size_t c = 0; c < 3; ++c) {
    const T mean = static_cast<T>(norm.mean[c]);
    const T sd = static_cast<T>(norm.std[c]);
    T* p = x.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) / sd;
  }
}

template <typename T>
BatchStream<T>::BatchStream(const Dataset& ds, const BatchOptions& options) : ds_(&ds), opt_(options) {
  if (options.image_size < 1) throw ArgumentError("epoch_batches: image size must be positive");
  if (options.patch_size > 0 && options.image_size % options.patch_size != 0) {
    throw ShapeError("epoch_batches: image size " + std::to_string(options.image_size) +
                     " is not divisible by patch size " + std::to_string(options.patch_size));
  }
  if (options.batch_size < 1) throw ArgumentError("epoch_batches: batch size must be positive");
  if (ds.split() == Split::Train) {
    order_ = epoch_order(ds.size(), options.seed, options.epoch);
  } else {
    order_.resize(ds.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
}

template <typename T>
std::size_t BatchStream<T>::num_batches() const {
  const auto b = static_cast<std::size_t>(opt_.batch_size);
  return (order_.size() + b - 1) / b;
}

template <typename T>
std::optional<Batch<T>> BatchStream<T>::next() {
  const auto s = static_cast<std::size_t>(opt_.image_size);
  const std::size_t per_image = 3 * s * s;
  const bool augment = opt_.augment && ds_->split() == Split::Train;
  std::vector<Tensor<T>> items;
  Batch<T> batch;
  batch.image_size = opt_.image_size;
  while (cursor_ < order_.size() && items.size() < static_cast<std::size_t>(opt_.batch_size)) {
    const std::size_t idx = order_[cursor_++];
    auto img = ds_->image(idx);
    if (!img) {
      ++skipped_;
      continue;
    }
    const std::uint64_t aug_seed = derive_seed(opt_.seed, Stream::Augment, static_cast<std::uint64_t>(opt_.epoch), idx);
    items.push_back(preprocess<T>(*img, opt_.image_size, augment, opt_.norm, aug_seed));
    batch.labels.push_back(ds_->label(idx));
    batch.indices.push_back(idx);
  }
  if (items.empty()) return std::nullopt;
  batch.images = Tensor<T>({items.size(), 3, s, s});
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].data(), items[i].data() + per_image, batch.images.data() + i * per_image);
  }
  return batch;
}

template class BatchStream<float>;
template class BatchStream<double>;
template void normalize(Tensor<float>&, const Normalization&);
template void normalize(Tensor<double>&, const Normalization&);
template Tensor<float> preprocess(const Image&, int, bool, const Normalization&, std::uint64_t);
template Tensor<double> preprocess(const Image&, int, bool, const Normalization&, std::uint64_t);

}  // namespace budgetvit
