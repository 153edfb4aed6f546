#include "latent/datasets.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "latent/csv.hpp"

namespace latent {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t pos) {
  if (pos + 4 > b.size()) throw Error(ErrorCode::kTruncatedFile, "IDX header truncated");
  return (static_cast<std::uint32_t>(b[pos]) << 24) | (static_cast<std::uint32_t>(b[pos + 1]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 8) | static_cast<std::uint32_t>(b[pos + 3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  out.write(b, 4);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

LabeledDataset gen_two_gaussian_toy(SeededRng& rng, std::size_t n,
                                    const TwoGaussianConfig& config) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "toy dataset needs n >= 2");
  LabeledDataset ds;
  ds.dim = 2;
  ds.source = "two-gaussian-toy";
  const double sd = std::sqrt(config.cov_scale);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const auto& m = label == 0 ? config.mean_a : config.mean_b;
    Vector x(2);
    x[0] = m[0] + sd * rng.normal();
    x[1] = m[1] + sd * rng.normal();
    ds.items.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

LabeledDataset gen_synthetic_digits(SeededRng& rng, std::size_t n) {
  LabeledDataset ds;
  ds.dim = 784;
  ds.source = "synthetic-digits";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = 14.0 + rng.uniform(-1.5, 1.5);
    const double cy = 14.0 + rng.uniform(-1.5, 1.5);
    const double thickness = rng.uniform(1.6, 2.6);
    Vector img(784);
    if (label == 0) {
      const double a = rng.uniform(4.5, 6.5);
      const double b = rng.uniform(7.5, 9.5);
      const double angle = rng.uniform(-0.3, 0.3);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (int r = 0; r < 28; ++r) {
        for (int c = 0; c < 28; ++c) {
          const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
          const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
          const double rho = std::hypot(u / a, v / b);
          const double dist = std::abs(rho - 1.0) * 0.5 * (a + b);
          img[r * 28 + c] = std::clamp(1.0 - std::max(0.0, dist - 0.5 * thickness), 0.0, 1.0);
        }
      }
    } else {
      const double slant = rng.uniform(-0.25, 0.25);
      const double half = rng.uniform(8.0, 10.0);
      for (int r = 0; r < 28; ++r) {
        for (int c = 0; c < 28; ++c) {
          const double dist = segment_distance(c + 0.5, r + 0.5, cx + slant * half, cy - half,
                                               cx - slant * half, cy + half);
          img[r * 28 + c] = std::clamp(1.0 - std::max(0.0, dist - 0.5 * thickness), 0.0, 1.0);
        }
      }
    }
    for (Eigen::Index k = 0; k < img.size(); ++k) img[k] = std::round(img[k] * 255.0) / 255.0;
    ds.items.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

LabeledDataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);
  if (read_be32(img, 0) != kImageMagic) throw Error(ErrorCode::kBadMagic, "image file magic");
  if (read_be32(lab, 0) != kLabelMagic) throw Error(ErrorCode::kBadMagic, "label file magic");
  const std::uint32_t count = read_be32(img, 4);
  const std::uint32_t rows = read_be32(img, 8);
  const std::uint32_t cols = read_be32(img, 12);
  const std::uint32_t label_count = read_be32(lab, 4);
  if (count != label_count) {
    throw Error(ErrorCode::kCountMismatch, std::to_string(count) + " images vs " +
                                               std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + pixels * count) throw Error(ErrorCode::kTruncatedFile, "image data");
  if (lab.size() < 8 + static_cast<std::size_t>(count)) throw Error(ErrorCode::kTruncatedFile, "label data");

  LabeledDataset ds;
  ds.dim = static_cast<Eigen::Index>(pixels);
  ds.source = images_path.filename().string();
  for (std::uint32_t i = 0; i < count; ++i) {
    Vector x(static_cast<Eigen::Index>(pixels));
    const std::size_t base = 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) x[static_cast<Eigen::Index>(p)] = img[base + p] / 255.0;
    ds.items.push_back(std::move(x));
    ds.labels.push_back(lab[8 + i]);
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::vector<std::uint8_t>>& images, std::uint32_t rows,
                      std::uint32_t cols) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, rows);
  write_be32(out, cols);
  for (const auto& im : images) {
    if (im.size() != static_cast<std::size_t>(rows) * cols) {
      throw Error(ErrorCode::kDimensionMismatch, "IDX image size");
    }
    out.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
  }
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void write_mnist_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  if (ds.dim != 784) throw Error(ErrorCode::kDimensionMismatch, "IDX export expects 28x28 items");
  if (!ds.has_labels()) throw Error(ErrorCode::kNoLabels, "IDX export needs labels");
  std::vector<std::vector<std::uint8_t>> images;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::uint8_t> im(784);
    for (Eigen::Index p = 0; p < 784; ++p) {
      im[static_cast<std::size_t>(p)] =
          static_cast<std::uint8_t>(std::clamp(std::round(ds.items[i][p] * 255.0), 0.0, 255.0));
    }
    images.push_back(std::move(im));
    labels.push_back(static_cast<std::uint8_t>(ds.labels[i]));
  }
  write_idx_images(images_path, images, 28, 28);
  write_idx_labels(labels_path, labels);
}

LabeledDataset filter_classes(const LabeledDataset& ds, const std::set<int>& keep) {
  if (!ds.has_labels()) throw Error(ErrorCode::kNoLabels, "filter_classes needs labels");
  LabeledDataset out;
  out.dim = ds.dim;
  out.source = ds.source;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (keep.contains(ds.labels[i])) {
      out.items.push_back(ds.items[i]);
      out.labels.push_back(ds.labels[i]);
    }
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double test_fraction,
                                                SeededRng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  LabeledDataset train, test;
  for (auto* part : {&train, &test}) {
    part->dim = ds.dim;
    part->source = ds.source;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    LabeledDataset& part = i < n_test ? test : train;
    part.items.push_back(ds.items[order[i]]);
    if (ds.has_labels()) part.labels.push_back(ds.labels[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < ds.dim; ++j) header.push_back("x" + std::to_string(j));
  if (ds.has_labels()) header.emplace_back("label");
  std::vector<long> labels(ds.labels.begin(), ds.labels.end());
  write_matrix_csv(out, header, ds.items, ds.has_labels() ? &labels : nullptr);
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kTruncatedFile, "empty CSV " + path.string());
  const auto header = split_csv_line(line);
  LabeledDataset ds;
  ds.source = path.filename().string();
  const bool labeled = !header.empty() && header.back() == "label";
  ds.dim = static_cast<Eigen::Index>(header.size()) - (labeled ? 1 : 0);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "CSV row width differs from header");
    }
    Vector x(ds.dim);
    for (Eigen::Index j = 0; j < ds.dim; ++j) x[j] = parse_double(fields[static_cast<std::size_t>(j)]);
    ds.items.push_back(std::move(x));
    if (labeled) ds.labels.push_back(static_cast<int>(parse_double(fields.back())));
  }
  return ds;
}

void save_dataset_raw(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.write(reinterpret_cast<const char*>(ds.items[i].data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ds.dim)));
    if (ds.has_labels()) {
      const double label = ds.labels[i];
      out.write(reinterpret_cast<const char*>(&label), sizeof(double));
    }
  }
  nlohmann::ordered_json manifest;
  manifest["dim"] = ds.dim;
  manifest["count"] = ds.size();
  manifest["labels_present"] = ds.has_labels();
  std::ofstream side(sidecar(path));
  side << manifest.dump(2) << '\n';
}

LabeledDataset load_dataset_raw(const std::filesystem::path& path) {
  std::ifstream side(sidecar(path));
  if (!side) throw Error(ErrorCode::kIoError, "missing sidecar for " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, e.what());
  }
  LabeledDataset ds;
  ds.dim = manifest.at("dim").get<Eigen::Index>();
  const auto count = manifest.at("count").get<std::size_t>();
  const bool labeled = manifest.at("labels_present").get<bool>();
  ds.source = path.filename().string();
  const auto bytes = read_all(path);
  const std::size_t width = static_cast<std::size_t>(ds.dim) + (labeled ? 1 : 0);
  if (bytes.size() != count * width * sizeof(double)) {
    throw Error(ErrorCode::kTruncatedFile, "raw dataset size does not match its manifest");
  }
  std::vector<double> row(width);
  for (std::size_t i = 0; i < count; ++i) {
    std::memcpy(row.data(), bytes.data() + i * width * sizeof(double), width * sizeof(double));
    ds.items.emplace_back(Eigen::Map<const Vector>(row.data(), ds.dim));
    if (labeled) ds.labels.push_back(static_cast<int>(row.back()));
  }
  return ds;
}

}  // namespace latent
