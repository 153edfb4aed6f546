#include "latent/kde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "latent/csv.hpp"

namespace latent {

KdeResult kde_score(const std::vector<Vector>& test_set, const std::vector<Vector>& samples,
                    const KdeConfig& config) {
  if (test_set.empty() || samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "KDE needs nonempty test and sample sets");
  }
  if (!(config.bandwidth_variance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "KDE bandwidth variance must be positive");
  }
  const Eigen::Index d = test_set.front().size();
  for (const auto& x : test_set) require_dim(x.size(), d, "KDE test point");
  for (const auto& s : samples) require_dim(s.size(), d, "KDE sample");

  const double var = config.bandwidth_variance;
  const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * var);
  std::vector<double> per_test(test_set.size());
  std::vector<double> terms(samples.size());
  for (std::size_t n = 0; n < test_set.size(); ++n) {
    for (std::size_t m = 0; m < samples.size(); ++m) {
      terms[m] = log_norm - (test_set[n] - samples[m]).squaredNorm() / (2.0 * var);
    }
    per_test[n] = log_sum_exp(terms);
  }
  KdeResult r;
  r.n_test = test_set.size();
  r.n_samples = samples.size();
  r.bandwidth_variance = var;
  r.log_score = log_sum_exp(per_test) -
                std::log(static_cast<double>(r.n_test)) - std::log(static_cast<double>(r.n_samples));
  r.score = std::exp(r.log_score);
  if (r.score < std::numeric_limits<double>::min()) {
    r.score = 0.0;
    r.underflow = true;
  }
  return r;
}

std::vector<KdeRow> kde_compare(const std::vector<Vector>& test_set,
                                const std::vector<NamedSamples>& sample_sets,
                                const KdeConfig& config) {
  std::vector<KdeRow> rows;
  for (const auto& set : sample_sets) {
    rows.push_back({set.name, kde_score(test_set, set.samples, config)});
  }
  // log_score orders identically to score and stays informative on underflow.
  std::stable_sort(rows.begin(), rows.end(), [](const KdeRow& a, const KdeRow& b) {
    return a.result.log_score > b.result.log_score;
  });
  return rows;
}

void write_kde_csv(std::ostream& out, const std::vector<KdeRow>& rows) {
  out << "model_name,kde_score,log_kde_score,n_test,n_samples,bandwidth_variance\n";
  for (const auto& row : rows) {
    out << row.model_name << ',' << format_double(row.result.score) << ','
        << format_double(row.result.log_score) << ',' << row.result.n_test << ','
        << row.result.n_samples << ',' << format_double(row.result.bandwidth_variance) << '\n';
  }
}

}  // namespace latent
