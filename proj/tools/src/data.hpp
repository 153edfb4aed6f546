#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bundle.hpp"
#include "latent/datasets.hpp"

namespace latent::cli {

// Where a training set comes from. Recorded in bundle manifests so that later
// stages rebuild exactly the same items.
struct DataSpec {
  std::string source;  // file | mnist | toy | digits
  std::string path;    // file: dataset cache; mnist: images
  std::string labels_path;
  std::size_t n = 0;   // synthetic sources
  std::vector<int> classes;
  double test_fraction = 0.0;
};

Json to_json(const DataSpec& spec);
DataSpec data_spec_from_json(const Json& j);

/// Loads or generates the items, filters classes and splits off the test
/// part. All randomness comes from the "data" sub-stream of `seed`.
std::pair<LabeledDataset, LabeledDataset> materialize(const DataSpec& spec, std::uint64_t seed);

/// Dataset cache by extension: .csv, otherwise raw float64 with sidecar.
LabeledDataset load_dataset_file(const std::string& path);

}  // namespace latent::cli
