#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "imbgan/error.hpp"
#include "imbgan/tensor.hpp"

namespace imbgan {

// Truncated or short IDX payload.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Images stored sample-major as (N, H, W, channels) with pixels in [0, 1].
struct LabeledImageSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::size_t num_classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return height * width * channels; }
  Shape shape() const { return {size(), height, width, channels}; }
  std::span<const double> sample(std::size_t i) const {
    return {pixels.data() + i * sample_size(), sample_size()};
  }

  // Throws if the set violates its invariants (sizes, label range, pixel range).
  void validate() const;

  // Gather samples into a network batch (B, channels, H, W).
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;

  // Subset in the given order.
  LabeledImageSet subset(std::span<const std::size_t> indices) const;
};

std::vector<std::size_t> class_histogram(std::span<const int> labels,
                                         std::size_t num_classes);

// Parse IDX image + label files (optionally gzip-wrapped).
LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path,
                         std::size_t num_classes = 10);

// Parse already-read IDX byte buffers (after gzip detection/inflation).
LabeledImageSet parse_idx(std::span<const std::uint8_t> image_bytes,
                          std::span<const std::uint8_t> label_bytes,
                          std::size_t num_classes = 10);

// Read a whole file, inflating it when it starts with the gzip magic 1F 8B.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

// Write a set back as IDX files; pixels are stored as round(v * 255).
void save_idx(const LabeledImageSet& set,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path, bool gzip = false);

struct ImbalancedDataset {
  LabeledImageSet base;
  std::vector<std::size_t> per_class_counts;
  std::uint64_t seed = 0;
  // Position in the source set of every sample of `base`.
  std::vector<std::size_t> source_indices;

  std::size_t num_classes() const { return per_class_counts.size(); }
  double imbalance_ratio() const;
  // Class with the largest / smallest training count (first on ties).
  int majority_class() const;
  int minority_class() const;
};

ImbalancedDataset make_imbalanced(const LabeledImageSet& src,
                                  std::span<const std::size_t> per_class_counts,
                                  std::uint64_t seed);

// Balanced per-class sample drawn from the part of `src` not used by `used`,
// for model selection without touching the test set.
LabeledImageSet make_holdout(const LabeledImageSet& src,
                             const ImbalancedDataset& used,
                             std::size_t per_class, std::uint64_t seed);

// Index-level oversampled view of an ImbalancedDataset: every class appears
// `per_class` = max_c p_c times.
struct BalancedView {
  std::vector<std::size_t> indices;
  std::size_t per_class = 0;
};

BalancedView make_balanced_by_repetition(const ImbalancedDataset& src,
                                         std::uint64_t seed);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

// Seeded pass over a set (or an index view of it). Holds a reference to the
// set, which must outlive the iterator.
class BatchIterator {
 public:
  BatchIterator(const LabeledImageSet& set, std::vector<std::size_t> order,
                std::size_t batch_size);

  bool has_next() const { return position_ < order_.size(); }
  Batch next();
  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const LabeledImageSet* set_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t position_ = 0;
};

BatchIterator batch_iter(const LabeledImageSet& set, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch);
BatchIterator batch_iter(const ImbalancedDataset& data,
                         const BalancedView& view, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch);

// Gaussian-blob toy images: class c is a soft blob whose centre sits on a
// circle around the image centre at angle 2*pi*c/C + pi/4.
struct BlobOptions {
  std::size_t size = 8;
  double radius = 1.5;
  double blob_sigma = 1.2;
  double center_jitter = 0.5;
  double pixel_noise = 0.1;
};

LabeledImageSet synthetic_blobs(std::span<const std::size_t> per_class_counts,
                                std::uint64_t seed,
                                const BlobOptions& options = {});

}  // namespace imbgan
