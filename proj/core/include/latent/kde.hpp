#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "latent/numerics.hpp"

namespace latent {

struct KdeConfig {
  /// Variance sigma^2 of the isotropic Gaussian kernel.
  double bandwidth_variance = 0.1;
  /// Number of model samples drawn per scoring run.
  std::size_t samples_per_batch = 1000;
};

struct KdeResult {
  /// (1 / (N_test N_samples)) sum_n sum_m N(x_n; s_m, sigma^2 I). Reported
  /// as 0 with `underflow` set when it is below the double range.
  double score = 0.0;
  /// log of the same average, evaluated with log-sum-exp; finite even when
  /// `score` underflows.
  double log_score = 0.0;
  bool underflow = false;
  std::size_t n_test = 0;
  std::size_t n_samples = 0;
  double bandwidth_variance = 0.0;
};

KdeResult kde_score(const std::vector<Vector>& test_set, const std::vector<Vector>& samples,
                    const KdeConfig& config);

struct NamedSamples {
  std::string name;
  std::vector<Vector> samples;
};

struct KdeRow {
  std::string model_name;
  KdeResult result;
};

/// Scores every sample set against the same test set; rows sorted by
/// descending score (ties keep input order).
std::vector<KdeRow> kde_compare(const std::vector<Vector>& test_set,
                                const std::vector<NamedSamples>& sample_sets,
                                const KdeConfig& config);

/// Columns: model_name,kde_score,log_kde_score,n_test,n_samples,bandwidth_variance
void write_kde_csv(std::ostream& out, const std::vector<KdeRow>& rows);

}  // namespace latent
