#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "latent/implicit_likelihood.hpp"

namespace latent::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kBundleVersion = 1;

// A trained mapping, an optional fitted base and the bookkeeping blocks that
// travel with them ("seed", "data", "training", "base_training").
struct Bundle {
  Autoencoder mapping;
  std::optional<BaseDistribution> base;
  Json info = Json::object();
};

/// Writes manifest.json plus one <tensor>.f64 per parameter array into a
/// temporary sibling directory and swaps it into place.
void save_bundle(const Bundle& bundle, const std::filesystem::path& dir);

/// Throws Error(kIoError / kUnsupportedFormat) for a missing, malformed or
/// version-mismatched bundle.
Bundle load_bundle(const std::filesystem::path& dir);

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

}  // namespace latent::cli
