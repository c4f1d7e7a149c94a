#include "imbgan/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "imbgan/random.hpp"

namespace imbgan {

namespace {

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in,
                                       const std::filesystem::path& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw FormatError("zlib init failed for " + path.string());
  }
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw LengthError("corrupt or truncated gzip stream in " + path.string());
    }
    out.insert(out.end(), chunk.data(),
               chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw LengthError("truncated gzip stream in " + path.string());
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

void LabeledImageSet::validate() const {
  if (pixels.size() != size() * sample_size()) {
    throw ConsistencyError("image payload holds " +
                           std::to_string(pixels.size()) + " values, expected " +
                           std::to_string(size() * sample_size()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("pixel value outside [0, 1]");
    }
  }
}

Tensor LabeledImageSet::gather(std::span<const std::size_t> indices) const {
  const std::size_t hw = height * width;
  Tensor out({indices.size(), channels, height, width});
  double* dst = out.ptr();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const double* src = pixels.data() + indices[b] * sample_size();
    // (H, W, C) -> (C, H, W)
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < channels; ++c) {
        dst[(b * channels + c) * hw + p] = src[p * channels + c];
      }
    }
  }
  return out;
}

std::vector<int> LabeledImageSet::gather_labels(
    std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

LabeledImageSet LabeledImageSet::subset(
    std::span<const std::size_t> indices) const {
  LabeledImageSet out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.num_classes = num_classes;
  out.pixels.reserve(indices.size() * sample_size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    const auto s = sample(i);
    out.pixels.insert(out.pixels.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> class_histogram(std::span<const int> labels,
                                         std::size_t num_classes) {
  std::vector<std::size_t> hist(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    ++hist[static_cast<std::size_t>(y)];
  }
  return hist;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B) {
    return inflate_gzip(bytes, path);
  }
  return bytes;
}

LabeledImageSet parse_idx(std::span<const std::uint8_t> image_bytes,
                          std::span<const std::uint8_t> label_bytes,
                          std::size_t num_classes) {
  if (image_bytes.size() < 16) {
    throw LengthError("IDX image file shorter than its 16-byte header");
  }
  if (label_bytes.size() < 8) {
    throw LengthError("IDX label file shorter than its 8-byte header");
  }
  const std::uint32_t image_magic = read_be32(image_bytes, 0);
  if (image_magic != kIdxImageMagic) {
    throw FormatError("IDX image file: expected magic " + hex32(kIdxImageMagic) +
                      ", found " + hex32(image_magic));
  }
  const std::uint32_t label_magic = read_be32(label_bytes, 0);
  if (label_magic != kIdxLabelMagic) {
    throw FormatError("IDX label file: expected magic " + hex32(kIdxLabelMagic) +
                      ", found " + hex32(label_magic));
  }
  const std::size_t count = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t label_count = read_be32(label_bytes, 4);
  if (count != label_count) {
    throw ConsistencyError("IDX image file holds " + std::to_string(count) +
                           " images but label file holds " +
                           std::to_string(label_count) + " labels");
  }
  const std::size_t payload = count * rows * cols;
  if (image_bytes.size() - 16 < payload) {
    throw LengthError("IDX image payload truncated: need " +
                      std::to_string(payload) + " bytes, have " +
                      std::to_string(image_bytes.size() - 16));
  }
  if (label_bytes.size() - 8 < count) {
    throw LengthError("IDX label payload truncated: need " +
                      std::to_string(count) + " bytes, have " +
                      std::to_string(label_bytes.size() - 8));
  }

  LabeledImageSet set;
  set.height = rows;
  set.width = cols;
  set.channels = 1;
  set.num_classes = num_classes;
  set.pixels.resize(payload);
  for (std::size_t i = 0; i < payload; ++i) {
    set.pixels[i] = static_cast<double>(image_bytes[16 + i]) / 255.0;
  }
  set.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    set.labels[i] = label_bytes[8 + i];
    if (static_cast<std::size_t>(set.labels[i]) >= num_classes) {
      throw DomainError("IDX label " + std::to_string(set.labels[i]) +
                        " at position " + std::to_string(i) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
  return set;
}

LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path,
                         std::size_t num_classes) {
  const auto images = read_maybe_gzip(images_path);
  const auto labels = read_maybe_gzip(labels_path);
  return parse_idx(images, labels, num_classes);
}

void save_idx(const LabeledImageSet& set,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path, bool gzip) {
  if (set.channels != 1) {
    throw FormatError("IDX writer supports single-channel images only");
  }
  std::vector<std::uint8_t> images;
  write_be32(images, kIdxImageMagic);
  write_be32(images, static_cast<std::uint32_t>(set.size()));
  write_be32(images, static_cast<std::uint32_t>(set.height));
  write_be32(images, static_cast<std::uint32_t>(set.width));
  for (double v : set.pixels) {
    images.push_back(static_cast<std::uint8_t>(
        std::clamp(std::lround(v * 255.0), 0L, 255L)));
  }
  std::vector<std::uint8_t> labels;
  write_be32(labels, kIdxLabelMagic);
  write_be32(labels, static_cast<std::uint32_t>(set.size()));
  for (int y : set.labels) labels.push_back(static_cast<std::uint8_t>(y));

  auto write = [gzip](const std::filesystem::path& p,
                      const std::vector<std::uint8_t>& bytes) {
    if (gzip) {
      gzFile f = gzopen(p.string().c_str(), "wb");
      if (!f) throw std::runtime_error("cannot open " + p.string());
      const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
      gzclose(f);
      if (n != static_cast<int>(bytes.size())) {
        throw std::runtime_error("short write to " + p.string());
      }
    } else {
      std::ofstream out(p, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("cannot write " + p.string());
    }
  };
  write(images_path, images);
  write(labels_path, labels);
}

double ImbalancedDataset::imbalance_ratio() const {
  const auto [lo, hi] =
      std::minmax_element(per_class_counts.begin(), per_class_counts.end());
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

int ImbalancedDataset::majority_class() const {
  return static_cast<int>(
      std::max_element(per_class_counts.begin(), per_class_counts.end()) -
      per_class_counts.begin());
}

int ImbalancedDataset::minority_class() const {
  return static_cast<int>(
      std::min_element(per_class_counts.begin(), per_class_counts.end()) -
      per_class_counts.begin());
}

namespace {
std::vector<std::vector<std::size_t>> positions_by_class(
    std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> out(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return out;
}
}  // namespace

ImbalancedDataset make_imbalanced(const LabeledImageSet& src,
                                  std::span<const std::size_t> per_class_counts,
                                  std::uint64_t seed) {
  if (per_class_counts.size() != src.num_classes) {
    throw ConsistencyError(
        "per-class count list has " + std::to_string(per_class_counts.size()) +
        " entries but the source has " + std::to_string(src.num_classes) +
        " classes");
  }
  const auto by_class = positions_by_class(src.labels, src.num_classes);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < src.num_classes; ++c) {
    const std::size_t want = per_class_counts[c];
    if (want == 0) {
      throw CapacityError("class " + std::to_string(c) +
                          " needs at least one sample");
    }
    if (want > by_class[c].size()) {
      throw CapacityError("class " + std::to_string(c) + " has " +
                          std::to_string(by_class[c].size()) + " samples, " +
                          std::to_string(want) + " requested");
    }
    auto pool = by_class[c];
    Rng rng = make_rng(seed, {1, c});
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  Rng order_rng = make_rng(seed, {2});
  std::shuffle(chosen.begin(), chosen.end(), order_rng);

  ImbalancedDataset out;
  out.base = src.subset(chosen);
  out.per_class_counts.assign(per_class_counts.begin(), per_class_counts.end());
  out.seed = seed;
  out.source_indices = std::move(chosen);
  return out;
}

LabeledImageSet make_holdout(const LabeledImageSet& src,
                             const ImbalancedDataset& used,
                             std::size_t per_class, std::uint64_t seed) {
  std::vector<bool> taken(src.size(), false);
  for (auto i : used.source_indices) taken.at(i) = true;
  auto by_class = positions_by_class(src.labels, src.num_classes);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < src.num_classes; ++c) {
    std::vector<std::size_t> pool;
    for (auto i : by_class[c]) {
      if (!taken[i]) pool.push_back(i);
    }
    if (pool.size() < per_class) {
      throw CapacityError("class " + std::to_string(c) + " has only " +
                          std::to_string(pool.size()) +
                          " unused samples for a holdout of " +
                          std::to_string(per_class));
    }
    Rng rng = make_rng(seed, {3, c});
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.insert(chosen.end(), pool.begin(),
                  pool.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  return src.subset(chosen);
}

BalancedView make_balanced_by_repetition(const ImbalancedDataset& src,
                                         std::uint64_t seed) {
  if (src.base.size() == 0) {
    throw CapacityError("cannot balance an empty dataset");
  }
  const auto by_class = positions_by_class(src.base.labels, src.num_classes());
  std::size_t target = 0;
  for (const auto& list : by_class) target = std::max(target, list.size());

  BalancedView view;
  view.per_class = target;
  view.indices.reserve(target * by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& list = by_class[c];
    if (list.empty()) {
      throw CapacityError("class " + std::to_string(c) +
                          " has no samples to repeat");
    }
    const std::size_t full = target / list.size();
    const std::size_t rem = target % list.size();
    for (std::size_t r = 0; r < full; ++r) {
      view.indices.insert(view.indices.end(), list.begin(), list.end());
    }
    if (rem > 0) {
      auto extra = list;
      Rng rng = make_rng(seed, {4, c});
      std::shuffle(extra.begin(), extra.end(), rng);
      view.indices.insert(view.indices.end(), extra.begin(),
                          extra.begin() + static_cast<std::ptrdiff_t>(rem));
    }
  }
  return view;
}

BatchIterator::BatchIterator(const LabeledImageSet& set,
                             std::vector<std::size_t> order,
                             std::size_t batch_size)
    : set_(&set), order_(std::move(order)), batch_size_(batch_size) {
  if (batch_size_ == 0) throw DomainError("batch size must be at least 1");
}

Batch BatchIterator::next() {
  const std::size_t end = std::min(position_ + batch_size_, order_.size());
  std::span<const std::size_t> idx(order_.data() + position_, end - position_);
  position_ = end;
  return Batch{set_->gather(idx), set_->gather_labels(idx)};
}

std::size_t BatchIterator::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

BatchIterator batch_iter(const LabeledImageSet& set, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {5, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return BatchIterator(set, std::move(order), batch_size);
}

BatchIterator batch_iter(const ImbalancedDataset& data,
                         const BalancedView& view, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order = view.indices;
  Rng rng = make_rng(seed, {5, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return BatchIterator(data.base, std::move(order), batch_size);
}

LabeledImageSet synthetic_blobs(std::span<const std::size_t> per_class_counts,
                                std::uint64_t seed, const BlobOptions& options) {
  const std::size_t num_classes = per_class_counts.size();
  const std::size_t s = options.size;
  LabeledImageSet set;
  set.height = s;
  set.width = s;
  set.channels = 1;
  set.num_classes = num_classes;
  Rng rng = make_rng(seed, {6});
  std::normal_distribution<double> normal(0.0, 1.0);
  const double mid = (static_cast<double>(s) - 1.0) / 2.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(num_classes) +
                         std::numbers::pi / 4.0;
    const double cx = mid + options.radius * std::cos(angle);
    const double cy = mid + options.radius * std::sin(angle);
    for (std::size_t n = 0; n < per_class_counts[c]; ++n) {
      const double jx = cx + options.center_jitter * normal(rng);
      const double jy = cy + options.center_jitter * normal(rng);
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double dx = static_cast<double>(x) - jx;
          const double dy = static_cast<double>(y) - jy;
          const double v =
              std::exp(-(dx * dx + dy * dy) /
                       (2.0 * options.blob_sigma * options.blob_sigma)) +
              options.pixel_noise * normal(rng);
          set.pixels.push_back(std::clamp(v, 0.0, 1.0));
        }
      }
      set.labels.push_back(static_cast<int>(c));
    }
  }
  return set;
}

}  // namespace imbgan
