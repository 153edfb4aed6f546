#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "latent/error.hpp"

namespace latent {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
class SpdFactorization {
 public:
  SpdFactorization() = default;
  explicit SpdFactorization(Matrix lower) : lower_(std::move(lower)) {}

  const Matrix& lower() const { return lower_; }
  Eigen::Index dim() const { return lower_.rows(); }

 private:
  Matrix lower_;
};

/// Factorizes `m`. Throws NotPositiveDefinite when a pivot is not positive
/// and DimensionMismatch when `m` is not square or not symmetric to 1e-10.
SpdFactorization cholesky(const Matrix& m);

/// log det(m) = 2 * sum(log diag(lower)).
double log_det_spd(const SpdFactorization& f);

/// Solves m x = b through the two triangular systems.
Vector solve_spd(const SpdFactorization& f, const Vector& b);
Matrix solve_spd(const SpdFactorization& f, const Matrix& b);

/// Returns m^{-1}.
Matrix inverse_spd(const SpdFactorization& f);

/// Adds `jitter` to the diagonal.
Matrix add_jitter(Matrix m, double jitter);

// Seeded pseudo-random stream. Equal seeds give equal streams; sub-streams
// derived by name are independent of the order in which they are requested.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  /// Draws an index with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);
  Vector normal_vector(Eigen::Index dim);

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  /// Independent generator keyed by (seed, name).
  SeededRng substream(std::string_view name) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// mean + lower * z with z ~ N(0, I).
Vector sample_gaussian(SeededRng& rng, const Vector& mean,
                       const SpdFactorization& cov_factor);

/// log(sum(exp(values))) without overflow; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);

bool all_finite(const Matrix& m);

}  // namespace latent
