#pragma once

#include <variant>
#include <vector>

#include "latent/autoencoder.hpp"
#include "latent/gmm.hpp"
#include "latent/hmm.hpp"

namespace latent {

using BaseDistribution = std::variant<GaussianMixture, GaussianHMM>;

// Implicit generative model: h ~ base, x = decode(h). The exact density is
// available only when the mapping is a TiedAutoencoder (invertible net).
struct ImplicitModel {
  Autoencoder mapping;
  BaseDistribution base;
};

bool has_exact_volume(const ImplicitModel& model);
Eigen::Index base_dim(const BaseDistribution& base);

/// Base log-density of a single latent vector (an HMM scores it as a
/// one-frame sequence).
double base_log_pdf(const BaseDistribution& base, const Vector& h);

/// Exact log p(x) = log p0(f^{-1}(x)) - net_log_volume(f^{-1}(x)).
/// Throws ExactVolumeUnavailable for non-invertible mappings.
double model_log_pdf(const ImplicitModel& model, const Vector& x);

/// Base log-density of the embedding with the volume term omitted.
double proxy_log_pdf(const ImplicitModel& model, const Vector& x);

struct SequenceLogPdf {
  double log_pdf = 0.0;
  /// True when the volume terms were omitted because the mapping has none.
  bool proxy = false;
};

/// HMM forward likelihood of the encoded chunks, minus per-chunk volume
/// terms when the mapping is invertible.
SequenceLogPdf sequence_log_pdf(const ImplicitModel& model, const std::vector<Vector>& chunks);

struct ObjectiveGradient {
  double objective = 0.0;  // mean log p(x) over the batch
  NetGradient gradient;    // d objective / d (W, b) per stage
};

/// Mean exact log-likelihood of `data` and its gradient with respect to the
/// net parameters, base held fixed. Requires a square net.
ObjectiveGradient implicit_objective_gradient(const InvertibleNet& net,
                                              const GaussianMixture& base,
                                              const std::vector<Vector>& data);

struct ImplicitTrainOptions {
  bool learn_base = false;
  int epochs = 300;
  /// 0 means full-batch steps.
  std::size_t batch_size = 0;
  /// EM refit period (in epochs) when learn_base is set.
  int refit_every = 5;
  std::size_t components = 2;
  AdamConfig adam{0.02, 0.9, 0.999, 1e-8};
  GmmFitOptions gmm;
};

struct ImplicitTrainResult {
  InvertibleNet net;
  GaussianMixture base;
  /// Mean training log-likelihood after each epoch.
  std::vector<double> objective_trace;
};

/// Gradient ascent on sum_n log p(x_n) over the net parameters. With
/// learn_base the base is refitted by EM on the current embeddings every
/// refit_every epochs (starting before the first step); otherwise it stays
/// fixed. Throws NonFiniteObjective.
ImplicitTrainResult train_implicit_ml(InvertibleNet net, GaussianMixture base,
                                      const std::vector<Vector>& data,
                                      const ImplicitTrainOptions& options, SeededRng& rng);

}  // namespace latent
