#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "latent/numerics.hpp"

namespace latent {

struct LabeledDataset {
  std::vector<Vector> items;
  std::vector<int> labels;  // empty when the data is unlabeled
  Eigen::Index dim = 0;
  std::string source;

  bool has_labels() const { return !labels.empty(); }
  std::size_t size() const { return items.size(); }
};

struct TwoGaussianConfig {
  std::array<double, 2> mean_a{-3.0, 0.0};
  std::array<double, 2> mean_b{3.0, 0.0};
  double cov_scale = 0.5;
};

/// n points alternating between two isotropic Gaussians; label = component.
LabeledDataset gen_two_gaussian_toy(SeededRng& rng, std::size_t n,
                                    const TwoGaussianConfig& config = {});

/// Procedural 28x28 "0" (ring) and "1" (slanted stroke) images in [0, 1],
/// quantized to 8 bits; an offline stand-in for MNIST zeros and ones.
LabeledDataset gen_synthetic_digits(SeededRng& rng, std::size_t n);

/// MNIST IDX pair: images magic 2051 (count x 28 x 28 bytes), labels magic
/// 2049. Pixels scaled by 1/255. Throws BadMagic, TruncatedFile,
/// CountMismatch, IoError.
LabeledDataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path);

void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::vector<std::uint8_t>>& images, std::uint32_t rows,
                      std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// Writes the dataset as IDX (values rounded to bytes after scaling by 255).
void write_mnist_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

/// Order-preserving subset of items whose label is in `keep`. Throws NoLabels.
LabeledDataset filter_classes(const LabeledDataset& ds, const std::set<int>& keep);

/// Seeded shuffle split into (train, test); test gets round(n * fraction).
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double test_fraction,
                                                SeededRng& rng);

/// CSV cache: header x0..x{d-1}[,label], one row per item.
void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

/// Raw little-endian float64 rows (dim values, then the label when present)
/// plus a JSON sidecar `<path>.json` {"dim", "count", "labels_present"}.
void save_dataset_raw(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset_raw(const std::filesystem::path& path);

}  // namespace latent
