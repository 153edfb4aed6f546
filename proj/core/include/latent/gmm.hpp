#pragma once

#include <cstddef>
#include <vector>

#include "latent/numerics.hpp"

namespace latent {

// Full-covariance Gaussian mixture. Immutable once built; the Cholesky
// factors of every covariance are computed at construction.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  GaussianMixture(Vector weights, std::vector<Vector> means,
                  std::vector<Matrix> covariances);

  /// Single N(0, I) component.
  static GaussianMixture standard_normal(Eigen::Index dim);

  std::size_t size() const { return means_.size(); }
  Eigen::Index dim() const { return means_.empty() ? 0 : means_.front().size(); }

  const Vector& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covariances_; }
  const SpdFactorization& factor(std::size_t k) const { return factors_[k]; }

  /// log w_k + log N(h; mu_k, Sigma_k) for every component.
  Vector component_log_densities(const Vector& h) const;

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<SpdFactorization> factors_;
  std::vector<double> log_norms_;  // -0.5 (K log 2 pi + log det Sigma_k)
};

double gmm_log_pdf(const GaussianMixture& gmm, const Vector& h);

/// Gradient of gmm_log_pdf with respect to h.
Vector gmm_log_pdf_grad(const GaussianMixture& gmm, const Vector& h);

/// Posterior component probabilities at h.
Vector gmm_responsibilities(const GaussianMixture& gmm, const Vector& h);

struct GmmFitOptions {
  int max_iters = 200;
  double tol = 1e-6;
  /// Covariance regularization; a single-component fit returns the sample
  /// covariance plus jitter * I.
  double jitter = 1e-6;
  int kmeans_iters = 10;
};

struct GmmFitResult {
  GaussianMixture model;
  /// Objective after initialization and after every EM iteration. This is
  /// the data log-likelihood minus the covariance regularization penalty,
  /// the quantity EM increases monotonically.
  std::vector<double> trace;
  int reinitialized_components = 0;
  bool converged = false;
};

/// k-means++ seeding followed by Lloyd iterations, then EM.
GmmFitResult gmm_fit_em(const std::vector<Vector>& embeddings, std::size_t components,
                        SeededRng& rng, const GmmFitOptions& options = {});

/// EM from a given initial mixture. `rng` is only used to reseed components
/// whose responsibility mass collapses.
GmmFitResult gmm_fit_em_from(const GaussianMixture& init,
                             const std::vector<Vector>& embeddings, SeededRng& rng,
                             const GmmFitOptions& options = {});

/// Initial mixture used by gmm_fit_em.
GaussianMixture gmm_kmeans_init(const std::vector<Vector>& embeddings,
                                std::size_t components, SeededRng& rng,
                                const GmmFitOptions& options = {});

struct GmmSamples {
  std::vector<Vector> points;
  std::vector<std::size_t> labels;
};

GmmSamples gmm_sample(const GaussianMixture& gmm, SeededRng& rng, std::size_t n);

/// Sample mean and (biased) covariance of a point set.
std::pair<Vector, Matrix> sample_moments(const std::vector<Vector>& points);

}  // namespace latent
