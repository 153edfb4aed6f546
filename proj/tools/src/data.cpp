#include "data.hpp"

#include <filesystem>
#include <set>

namespace latent::cli {

Json to_json(const DataSpec& spec) {
  Json j;
  j["source"] = spec.source;
  if (!spec.path.empty()) j["path"] = spec.path;
  if (!spec.labels_path.empty()) j["labels_path"] = spec.labels_path;
  if (spec.n > 0) j["n"] = spec.n;
  j["classes"] = spec.classes;
  j["test_fraction"] = spec.test_fraction;
  return j;
}

DataSpec data_spec_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("source")) {
    throw Error(ErrorCode::kUnsupportedFormat, "bundle: data block is missing");
  }
  DataSpec spec;
  spec.source = j.at("source").get<std::string>();
  spec.path = j.value("path", std::string());
  spec.labels_path = j.value("labels_path", std::string());
  spec.n = j.value("n", std::size_t{0});
  spec.classes = j.value("classes", std::vector<int>{});
  spec.test_fraction = j.value("test_fraction", 0.0);
  return spec;
}

LabeledDataset load_dataset_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIoError, "no such file: " + path);
  if (std::filesystem::path(path).extension() == ".csv") return load_dataset_csv(path);
  return load_dataset_raw(path);
}

std::pair<LabeledDataset, LabeledDataset> materialize(const DataSpec& spec, std::uint64_t seed) {
  SeededRng rng = SeededRng(seed).substream("data");
  LabeledDataset ds;
  if (spec.source == "file") {
    ds = load_dataset_file(spec.path);
  } else if (spec.source == "mnist") {
    ds = load_mnist_idx(spec.path, spec.labels_path);
  } else if (spec.source == "toy") {
    ds = gen_two_gaussian_toy(rng, spec.n);
  } else if (spec.source == "digits") {
    ds = gen_synthetic_digits(rng, spec.n);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown data source '" + spec.source + "'");
  }
  if (!spec.classes.empty()) {
    ds = filter_classes(ds, std::set<int>(spec.classes.begin(), spec.classes.end()));
  }
  if (ds.size() == 0) throw Error(ErrorCode::kIoError, "dataset is empty");
  if (spec.test_fraction > 0.0) return split(ds, spec.test_fraction, rng);
  LabeledDataset empty;
  empty.dim = ds.dim;
  return {std::move(ds), std::move(empty)};
}

}  // namespace latent::cli
