#include "latent/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latent {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SpdFactorization cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "cholesky of a non-square matrix");
  }
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::kDimensionMismatch, "cholesky of a non-symmetric matrix");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "non-positive pivot");
  }
  Matrix lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) {
      throw Error(ErrorCode::kNotPositiveDefinite, "non-positive pivot");
    }
  }
  return SpdFactorization(std::move(lower));
}

double log_det_spd(const SpdFactorization& f) {
  return 2.0 * f.lower().diagonal().array().log().sum();
}

Vector solve_spd(const SpdFactorization& f, const Vector& b) {
  require_dim(b.size(), f.dim(), "solve_spd rhs");
  const auto lower = f.lower().triangularView<Eigen::Lower>();
  Vector y = lower.solve(b);
  return lower.transpose().solve(y);
}

Matrix solve_spd(const SpdFactorization& f, const Matrix& b) {
  require_dim(b.rows(), f.dim(), "solve_spd rhs");
  const auto lower = f.lower().triangularView<Eigen::Lower>();
  Matrix y = lower.solve(b);
  return lower.transpose().solve(y);
}

Matrix inverse_spd(const SpdFactorization& f) {
  return solve_spd(f, Matrix(Matrix::Identity(f.dim(), f.dim())));
}

Matrix add_jitter(Matrix m, double jitter) {
  m.diagonal().array() += jitter;
  return m;
}

std::size_t SeededRng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding: fall back to the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

Vector SeededRng::normal_vector(Eigen::Index dim) {
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z[i] = normal();
  return z;
}

SeededRng SeededRng::substream(std::string_view name) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(fnv1a(name))));
}

Vector sample_gaussian(SeededRng& rng, const Vector& mean,
                       const SpdFactorization& cov_factor) {
  require_dim(mean.size(), cov_factor.dim(), "sample_gaussian mean");
  return mean + cov_factor.lower().triangularView<Eigen::Lower>() *
                    rng.normal_vector(mean.size());
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace latent
