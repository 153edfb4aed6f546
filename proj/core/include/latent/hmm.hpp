#pragma once

#include <cstddef>
#include <vector>

#include "latent/numerics.hpp"

namespace latent {

/// Ordered latent frames of one sequence.
struct SequenceEmbedding {
  std::vector<Vector> frames;
};

// Hidden Markov model with diagonal-covariance Gaussian emissions.
struct GaussianHMM {
  Vector initial;                 // S
  Matrix transitions;             // S x S, row-stochastic
  std::vector<Vector> means;      // S vectors of dim K
  std::vector<Vector> variances;  // S vectors of dim K, all >= variance floor

  std::size_t num_states() const { return means.size(); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  /// Throws InvalidArgument / DimensionMismatch on a malformed model.
  void validate() const;
};

/// T x S matrix of per-frame, per-state emission log-densities.
Matrix hmm_emission_log_densities(const GaussianHMM& hmm, const SequenceEmbedding& seq);

/// log p(frames) by the scaled forward recursion.
double hmm_log_likelihood(const GaussianHMM& hmm, const SequenceEmbedding& seq);

struct HmmFitOptions {
  int max_iters = 100;
  double tol = 1e-6;
  double variance_floor = 1e-6;
};

struct HmmFitResult {
  GaussianHMM model;
  /// Total log-likelihood over all sequences after initialization and after
  /// every Baum-Welch iteration.
  std::vector<double> trace;
  int reinitialized_states = 0;
  bool converged = false;
};

HmmFitResult hmm_fit_baum_welch(const std::vector<SequenceEmbedding>& sequences,
                                std::size_t states, SeededRng& rng,
                                const HmmFitOptions& options = {});

/// Baum-Welch from a given initial model; `rng` reseeds collapsed states.
HmmFitResult hmm_fit_baum_welch_from(const GaussianHMM& init,
                                     const std::vector<SequenceEmbedding>& sequences,
                                     SeededRng& rng, const HmmFitOptions& options = {});

/// k-means emission means, pooled variances, near-uniform initial and
/// transition distributions with Dirichlet(1) jitter.
GaussianHMM hmm_initialize(const std::vector<SequenceEmbedding>& sequences,
                           std::size_t states, SeededRng& rng,
                           const HmmFitOptions& options = {});

struct HmmSample {
  SequenceEmbedding sequence;
  std::vector<std::size_t> states;
};

/// Ancestral sampling of T frames.
HmmSample hmm_sample(const GaussianHMM& hmm, SeededRng& rng, std::size_t frames);

}  // namespace latent
