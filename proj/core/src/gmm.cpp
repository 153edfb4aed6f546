#include "latent/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <spdlog/spdlog.h>

namespace latent {

namespace {

constexpr double kEmptyMass = 1e-8;

Matrix stack_columns(const std::vector<Vector>& points) {
  Matrix x(points.front().size(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t n = 0; n < points.size(); ++n) {
    x.col(static_cast<Eigen::Index>(n)) = points[n];
  }
  return x;
}

// N x M matrix of log w_k + log N(x_n | k).
Matrix joint_log_densities(const GaussianMixture& gmm, const Matrix& x) {
  const Eigen::Index n = x.cols();
  const auto m = static_cast<Eigen::Index>(gmm.size());
  const double dim = static_cast<double>(gmm.dim());
  Matrix out(n, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& f = gmm.factor(static_cast<std::size_t>(k));
    Matrix centered = x.colwise() - gmm.means()[static_cast<std::size_t>(k)];
    f.lower().triangularView<Eigen::Lower>().solveInPlace(centered);
    const double log_norm =
        -0.5 * (dim * std::log(2.0 * std::numbers::pi) + log_det_spd(f));
    const double log_w = std::log(gmm.weights()[k]);
    out.col(k) = (log_w + log_norm - 0.5 * centered.colwise().squaredNorm().array())
                     .matrix()
                     .transpose();
  }
  return out;
}

struct EStep {
  Matrix resp;  // N x M
  double log_likelihood = 0.0;
};

EStep e_step(const GaussianMixture& gmm, const Matrix& x) {
  EStep e;
  e.resp = joint_log_densities(gmm, x);
  for (Eigen::Index n = 0; n < e.resp.rows(); ++n) {
    const double hi = e.resp.row(n).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < e.resp.cols(); ++k) acc += std::exp(e.resp(n, k) - hi);
    const double lse = hi + std::log(acc);
    e.log_likelihood += lse;
    e.resp.row(n) = (e.resp.row(n).array() - lse).exp();
  }
  return e;
}

double penalty(const GaussianMixture& gmm, double strength) {
  double total = 0.0;
  for (std::size_t k = 0; k < gmm.size(); ++k) total += inverse_spd(gmm.factor(k)).trace();
  return 0.5 * strength * total;
}

}  // namespace

GaussianMixture::GaussianMixture(Vector weights, std::vector<Vector> means,
                                 std::vector<Matrix> covariances)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covariances_(std::move(covariances)) {
  if (means_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "mixture needs at least one component");
  }
  require_dim(weights_.size(), static_cast<Eigen::Index>(means_.size()), "mixture weights");
  require_dim(static_cast<Eigen::Index>(covariances_.size()),
              static_cast<Eigen::Index>(means_.size()), "mixture covariances");
  const Eigen::Index d = means_.front().size();
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "mixture weights must form a simplex");
  }
  weights_ /= weights_.sum();
  for (std::size_t k = 0; k < means_.size(); ++k) {
    require_dim(means_[k].size(), d, "mixture mean");
    require_dim(covariances_[k].rows(), d, "mixture covariance");
    factors_.push_back(cholesky(covariances_[k]));
    log_norms_.push_back(-0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) +
                                 log_det_spd(factors_.back())));
  }
}

GaussianMixture GaussianMixture::standard_normal(Eigen::Index dim) {
  return GaussianMixture(Vector::Ones(1), {Vector::Zero(dim)},
                         {Matrix::Identity(dim, dim)});
}

Vector GaussianMixture::component_log_densities(const Vector& h) const {
  require_dim(h.size(), dim(), "mixture input");
  Vector out(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) {
    const Vector z =
        factors_[k].lower().triangularView<Eigen::Lower>().solve(h - means_[k]);
    out[static_cast<Eigen::Index>(k)] =
        std::log(weights_[static_cast<Eigen::Index>(k)]) + log_norms_[k] - 0.5 * z.squaredNorm();
  }
  return out;
}

double gmm_log_pdf(const GaussianMixture& gmm, const Vector& h) {
  const Vector c = gmm.component_log_densities(h);
  return log_sum_exp(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())));
}

Vector gmm_responsibilities(const GaussianMixture& gmm, const Vector& h) {
  const Vector c = gmm.component_log_densities(h);
  const double lse =
      log_sum_exp(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())));
  return (c.array() - lse).exp();
}

Vector gmm_log_pdf_grad(const GaussianMixture& gmm, const Vector& h) {
  const Vector r = gmm_responsibilities(gmm, h);
  Vector g = Vector::Zero(h.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    g -= r[static_cast<Eigen::Index>(k)] * solve_spd(gmm.factor(k), Vector(h - gmm.means()[k]));
  }
  return g;
}

std::pair<Vector, Matrix> sample_moments(const std::vector<Vector>& points) {
  const Matrix x = stack_columns(points);
  const Vector mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  Matrix cov = centered * centered.transpose() / static_cast<double>(x.cols());
  return {mean, cov};
}

GaussianMixture gmm_kmeans_init(const std::vector<Vector>& embeddings,
                                std::size_t components, SeededRng& rng,
                                const GmmFitOptions& options) {
  if (components == 0 || embeddings.size() < components) {
    throw Error(ErrorCode::kInvalidArgument, "need at least as many points as components");
  }
  const Matrix x = stack_columns(embeddings);
  const Eigen::Index n = x.cols();
  const auto m = static_cast<Eigen::Index>(components);

  // k-means++ seeding
  Matrix centers(x.rows(), m);
  centers.col(0) = x.col(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (Eigen::Index k = 1; k < m; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      dist[static_cast<std::size_t>(i)] = std::min(
          dist[static_cast<std::size_t>(i)], (x.col(i) - centers.col(k - 1)).squaredNorm());
    }
    double total = 0.0;
    for (double d : dist) total += d;
    const std::size_t pick = total > 0.0 ? rng.categorical(dist)
                                         : rng.uniform_index(static_cast<std::size_t>(n));
    centers.col(k) = x.col(static_cast<Eigen::Index>(pick));
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < options.kmeans_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.colwise() - x.col(i)).colwise().squaredNorm().minCoeff(&best);
      assign[static_cast<std::size_t>(i)] = best;
    }
    Matrix sums = Matrix::Zero(x.rows(), m);
    Vector counts = Vector::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[static_cast<std::size_t>(i)]) += x.col(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index k = 0; k < m; ++k) {
      if (counts[k] > 0.0) centers.col(k) = sums.col(k) / counts[k];
    }
  }
  Vector counts = Vector::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (centers.colwise() - x.col(i)).colwise().squaredNorm().minCoeff(&best);
    counts[best] += 1.0;
  }

  const auto [mean, cov] = sample_moments(embeddings);
  const Matrix init_cov = add_jitter(cov, options.jitter);
  Vector weights = (counts.array() + 1.0) / (static_cast<double>(n) + static_cast<double>(m));
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (Eigen::Index k = 0; k < m; ++k) {
    means.emplace_back(centers.col(k));
    covs.push_back(init_cov);
  }
  return GaussianMixture(weights, std::move(means), std::move(covs));
}

GmmFitResult gmm_fit_em_from(const GaussianMixture& init,
                             const std::vector<Vector>& embeddings, SeededRng& rng,
                             const GmmFitOptions& options) {
  if (embeddings.size() < init.size()) {
    throw Error(ErrorCode::kInvalidArgument, "need at least as many points as components");
  }
  for (const auto& e : embeddings) require_dim(e.size(), init.dim(), "embedding");

  const Matrix x = stack_columns(embeddings);
  const Eigen::Index n = x.cols();
  const auto m = static_cast<Eigen::Index>(init.size());
  // Penalty strength a gives Sigma_k = (scatter_k + a I) / n_k, which equals
  // sample covariance + jitter * I for a cluster of average size N / M.
  const double strength = options.jitter * static_cast<double>(n) / static_cast<double>(m);
  const Matrix global_cov = add_jitter(sample_moments(embeddings).second, options.jitter);

  GmmFitResult result;
  result.model = init;
  EStep e = e_step(result.model, x);
  result.trace.push_back(e.log_likelihood - penalty(result.model, strength));

  for (int it = 0; it < options.max_iters; ++it) {
    const Vector mass = e.resp.colwise().sum().transpose();
    Vector weights(m);
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (mass[k] < kEmptyMass) {
        spdlog::warn("EmptyCluster: component {} lost its responsibility mass; reseeding", k);
        ++result.reinitialized_components;
        weights[k] = 1.0 / static_cast<double>(m);
        means.emplace_back(x.col(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)))));
        covs.push_back(global_cov);
        continue;
      }
      weights[k] = mass[k] / static_cast<double>(n);
      Vector mu = x * e.resp.col(k) / mass[k];
      const Matrix centered = x.colwise() - mu;
      Matrix scatter = centered * e.resp.col(k).asDiagonal() * centered.transpose();
      scatter = 0.5 * (scatter + scatter.transpose());
      covs.push_back(add_jitter(scatter, strength) / mass[k]);
      means.push_back(std::move(mu));
    }
    weights /= weights.sum();
    result.model = GaussianMixture(weights, std::move(means), std::move(covs));

    const double previous = result.trace.back();
    e = e_step(result.model, x);
    const double current = e.log_likelihood - penalty(result.model, strength);
    result.trace.push_back(current);
    if (!std::isfinite(current)) {
      throw Error(ErrorCode::kNonFiniteObjective, "EM objective is not finite");
    }
    if (std::abs(current - previous) <= options.tol * std::abs(previous)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

GmmFitResult gmm_fit_em(const std::vector<Vector>& embeddings, std::size_t components,
                        SeededRng& rng, const GmmFitOptions& options) {
  if (embeddings.empty() || embeddings.front().size() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "empty embedding set");
  }
  GaussianMixture init = gmm_kmeans_init(embeddings, components, rng, options);
  return gmm_fit_em_from(init, embeddings, rng, options);
}

GmmSamples gmm_sample(const GaussianMixture& gmm, SeededRng& rng, std::size_t n) {
  GmmSamples out;
  const std::span<const double> w(gmm.weights().data(), gmm.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.categorical(w);
    out.points.push_back(sample_gaussian(rng, gmm.means()[k], gmm.factor(k)));
    out.labels.push_back(k);
  }
  return out;
}

}  // namespace latent
