#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "latent/csv.hpp"
#include "latent/datasets.hpp"

using namespace latent;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("latent_ds_" + name);
}

LabeledDataset labeled(std::size_t n, int classes) {
  LabeledDataset ds;
  ds.dim = 2;
  for (std::size_t i = 0; i < n; ++i) {
    ds.items.push_back(Eigen::Vector2d(static_cast<double>(i), -0.5 * static_cast<double>(i)));
    ds.labels.push_back(static_cast<int>(i) % classes);
  }
  return ds;
}

}  // namespace

TEST_CASE("two-Gaussian toy generator") {
  SeededRng rng(80);
  const auto ds = gen_two_gaussian_toy(rng, 2000);
  CHECK(ds.size() == 2000);
  Vector m0 = Vector::Zero(2), m1 = Vector::Zero(2);
  long c0 = 0, c1 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 0) {
      m0 += ds.items[i];
      ++c0;
    } else {
      m1 += ds.items[i];
      ++c1;
    }
  }
  CHECK(std::abs(c0 - c1) <= 1);
  CHECK((m0 / c0 - Vector(Eigen::Vector2d(-3.0, 0.0))).norm() < 0.2);
  CHECK((m1 / c1 - Vector(Eigen::Vector2d(3.0, 0.0))).norm() < 0.2);

  const auto two = gen_two_gaussian_toy(rng, 2);
  CHECK(two.labels[0] != two.labels[1]);
  const auto odd = gen_two_gaussian_toy(rng, 7);
  CHECK(std::abs(std::count(odd.labels.begin(), odd.labels.end(), 0) -
                 std::count(odd.labels.begin(), odd.labels.end(), 1)) <= 1);

  SeededRng a(3), b(3);
  CHECK(gen_two_gaussian_toy(a, 10).items == gen_two_gaussian_toy(b, 10).items);
}

TEST_CASE("synthetic digits") {
  SeededRng rng(81);
  const auto ds = gen_synthetic_digits(rng, 40);
  CHECK(ds.dim == 784);
  CHECK(ds.size() == 40);
  for (const auto& x : ds.items) {
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      REQUIRE(std::abs(x[i] * 255.0 - std::round(x[i] * 255.0)) < 1e-9);
    }
  }
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 0) == 20);
}

TEST_CASE("IDX round trip and errors") {
  const auto img = temp_path("images.idx");
  const auto lbl = temp_path("labels.idx");
  std::vector<std::vector<std::uint8_t>> images(2, std::vector<std::uint8_t>(784));
  for (std::size_t i = 0; i < 784; ++i) {
    images[0][i] = static_cast<std::uint8_t>(i % 256);
    images[1][i] = static_cast<std::uint8_t>(255 - i % 256);
  }
  write_idx_images(img, images, 28, 28);
  write_idx_labels(lbl, {7, 1});
  const auto ds = load_mnist_idx(img, lbl);
  REQUIRE(ds.size() == 2);
  CHECK(ds.labels == std::vector<int>{7, 1});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 784; ++i) {
      REQUIRE(std::lround(ds.items[n][static_cast<Eigen::Index>(i)] * 255.0) == images[n][i]);
    }
  }
  CHECK(ds.items[0][255] == 1.0);

  // Re-writing the loaded dataset reproduces the files byte for byte.
  const auto img2 = temp_path("images2.idx");
  const auto lbl2 = temp_path("labels2.idx");
  write_mnist_idx(ds, img2, lbl2);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(img) == slurp(img2));
  CHECK(slurp(lbl) == slurp(lbl2));

  auto expect_code = [&](const fs::path& i, const fs::path& l, ErrorCode code) {
    try {
      load_mnist_idx(i, l);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect_code(lbl, lbl, ErrorCode::kBadMagic);
  expect_code(img, temp_path("missing.idx"), ErrorCode::kIoError);

  write_idx_labels(lbl2, {1, 2, 3});
  expect_code(img, lbl2, ErrorCode::kCountMismatch);

  const std::string bytes = slurp(img);
  std::ofstream(img2, std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  expect_code(img2, lbl, ErrorCode::kTruncatedFile);
  for (const auto& p : {img, lbl, img2, lbl2}) fs::remove(p);
}

TEST_CASE("filter_classes") {
  const auto ds = labeled(12, 4);
  const auto kept = filter_classes(ds, {0, 1});
  CHECK(kept.size() == 6);
  for (int l : kept.labels) CHECK((l == 0 || l == 1));
  CHECK(kept.items[1] == ds.items[1]);
  CHECK(filter_classes(ds, {0, 1, 2, 3}).items == ds.items);
  CHECK(filter_classes(ds, {}).size() == 0);

  LabeledDataset unlabeled;
  unlabeled.dim = 1;
  unlabeled.items = {Vector::Zero(1)};
  CHECK_THROWS_AS(filter_classes(unlabeled, {0}), Error);
}

TEST_CASE("split is disjoint, exhaustive and seeded") {
  SeededRng rng(82);
  const auto ten = labeled(10, 2);
  const auto [train, test] = split(ten, 0.5, rng);
  CHECK(train.size() == 5);
  CHECK(test.size() == 5);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(60);
    const double frac = rng.uniform();
    const auto ds = labeled(n, 3);
    const auto [tr, te] = split(ds, frac, rng);
    REQUIRE(te.size() == static_cast<std::size_t>(std::lround(static_cast<double>(n) * frac)));
    std::vector<double> seen;
    for (const auto* part : {&tr, &te}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        seen.push_back(part->items[i][0]);
        REQUIRE(part->labels[i] == static_cast<int>(part->items[i][0]) % 3);
      }
    }
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen.size() == n);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(seen[i] == static_cast<double>(i));
  }

  SeededRng a(9), b(9);
  CHECK(split(ten, 0.3, a).second.items == split(ten, 0.3, b).second.items);
}

TEST_CASE("dataset caches round-trip exactly") {
  SeededRng rng(83);
  auto ds = gen_two_gaussian_toy(rng, 25);
  ds.items[0][0] = 0.1;
  ds.items[0][1] = 1e-300;
  const auto csv = temp_path("cache.csv");
  save_dataset_csv(ds, csv);
  const auto back = load_dataset_csv(csv);
  CHECK(back.items == ds.items);
  CHECK(back.labels == ds.labels);

  const auto raw = temp_path("cache.f64");
  save_dataset_raw(ds, raw);
  const auto rback = load_dataset_raw(raw);
  CHECK(rback.items == ds.items);
  CHECK(rback.labels == ds.labels);

  LabeledDataset unlabeled;
  unlabeled.dim = 3;
  unlabeled.items = {Vector::Ones(3), Vector::Zero(3)};
  save_dataset_raw(unlabeled, raw);
  CHECK_FALSE(load_dataset_raw(raw).has_labels());
  save_dataset_csv(unlabeled, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x0,x1,x2");
  for (const auto& p : {csv, raw, fs::path(raw.string() + ".json")}) fs::remove(p);
}

TEST_CASE("shortest round-trip number formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300) == "-2.5e-300");
  SeededRng rng(84);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
    REQUIRE(parse_double(format_double(v)) == v);
  }
  CHECK_THROWS_AS(parse_double("abc"), Error);
  CHECK(split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
}

TEST_CASE("bundled offline digit files") {
  const std::filesystem::path dir = LATENT_DATA_DIR;
  const auto ds = load_mnist_idx(dir / "digits01-200-images.idx3-ubyte", dir / "digits01-200-labels.idx1-ubyte");
  REQUIRE(ds.size() == 200);
  CHECK(ds.items.front().size() == 784);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 0) == 100);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 1) == 100);
  SeededRng rng(2024);
  const auto regenerated = gen_synthetic_digits(rng, 200);
  CHECK(regenerated.labels == ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(regenerated.items[i] == ds.items[i]);
}
