#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bundle.hpp"
#include "latent/datasets.hpp"

namespace latent::cli {

// Two-Gaussian toy fitted by a linear map f(h) = Wh + b under a frozen
// isotropic base and under a learned two-component base.
struct Fig1Options {
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  int epochs = 300;
  double lr = 0.02;
  std::size_t components = 2;
  std::size_t n_generated = 1000;
};

struct Fig1Run {
  std::string name;
  InvertibleNet net;
  GaussianMixture base;
  std::vector<double> trace;
  double train_log_likelihood = 0.0;
  double test_log_likelihood = 0.0;
};

struct Fig1Result {
  LabeledDataset train;
  LabeledDataset test;
  Fig1Run fixed;
  Fig1Run learned;
  GaussianMixture oracle;
  double oracle_test_log_likelihood = 0.0;
};

Fig1Result run_fig1(std::uint64_t seed, const Fig1Options& options);

/// fig1_data.csv, fig1_summary.csv and, per run, generated / latent /
/// embeddings CSVs.
void write_fig1(const Fig1Result& result, std::uint64_t seed, std::size_t n_generated,
                const std::filesystem::path& out_dir);

// K = 2 dense autoencoder on 0/1 digits with a three-component base.
struct Fig2Options {
  std::string mnist_images;
  std::string mnist_labels;
  std::size_t n_synthetic = 1000;
  std::vector<Eigen::Index> hidden = {128};
  int epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t components = 3;
  std::size_t samples_per_component = 8;
};

struct Fig2Result {
  LabeledDataset train;
  Bundle bundle;
  std::vector<Vector> embeddings;
  std::vector<std::size_t> assignments;  // most responsible component per item
  double purity = 0.0;
  std::vector<Vector> latent_samples;
  std::vector<std::size_t> sample_components;
  std::vector<Vector> decoded;
  std::vector<double> nearest_train_distance;
  double interclass_p95 = 0.0;
};

Fig2Result run_fig2(std::uint64_t seed, const Fig2Options& options);

/// fig2_embeddings.csv, fig2_ellipses.csv, fig2_samples.csv,
/// fig2_summary.csv and the fig2_bundle directory.
void write_fig2(const Fig2Result& result, const std::filesystem::path& out_dir);

/// Fraction of items whose component's majority label matches their own.
double majority_purity(const std::vector<std::size_t>& assignments, const std::vector<int>& labels,
                       std::size_t components);

}  // namespace latent::cli
