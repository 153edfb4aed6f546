#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "latent/hmm.hpp"
#include "oracles.hpp"

using namespace latent;

namespace {

Vector random_simplex(SeededRng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(0.1, 1.0);
  return v / v.sum();
}

GaussianHMM random_hmm(SeededRng& rng, std::size_t s, Eigen::Index k) {
  GaussianHMM hmm;
  const auto n = static_cast<Eigen::Index>(s);
  hmm.initial = random_simplex(rng, n);
  hmm.transitions.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) hmm.transitions.row(i) = random_simplex(rng, n).transpose();
  for (std::size_t i = 0; i < s; ++i) {
    hmm.means.push_back(2.0 * rng.normal_vector(k));
    Vector var(k);
    for (Eigen::Index d = 0; d < k; ++d) var[d] = rng.uniform(0.3, 2.0);
    hmm.variances.push_back(var);
  }
  return hmm;
}

double diag_log_pdf(const Vector& x, const Vector& mean, const Vector& var) {
  return std::log(oracle::diag_gaussian_pdf(x, mean, var));
}

}  // namespace

TEST_CASE("forward recursion matches brute-force path enumeration") {
  SeededRng rng(21);
  for (std::size_t s = 1; s <= 4; ++s) {
    for (std::size_t t = 1; t <= 6; ++t) {
      const auto hmm = random_hmm(rng, s, 2);
      SequenceEmbedding seq;
      for (std::size_t i = 0; i < t; ++i) seq.frames.push_back(2.0 * rng.normal_vector(2));
      const double brute = oracle::hmm_brute_force(hmm.initial, hmm.transitions, hmm.means,
                                                   hmm.variances, seq.frames);
      CHECK(oracle::relative_error(hmm_log_likelihood(hmm, seq), std::log(brute)) < 1e-10);
    }
  }
}

TEST_CASE("single state is a product of Gaussians; T = 1 is a mixture") {
  SeededRng rng(22);
  auto hmm = random_hmm(rng, 1, 3);
  SequenceEmbedding seq;
  double expected = 0.0;
  for (int i = 0; i < 7; ++i) {
    seq.frames.push_back(rng.normal_vector(3));
    expected += diag_log_pdf(seq.frames.back(), hmm.means[0], hmm.variances[0]);
  }
  CHECK(hmm_log_likelihood(hmm, seq) == doctest::Approx(expected).epsilon(1e-12));

  const auto hmm3 = random_hmm(rng, 3, 2);
  SequenceEmbedding one{{rng.normal_vector(2)}};
  double p = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    p += hmm3.initial[static_cast<Eigen::Index>(s)] *
         oracle::diag_gaussian_pdf(one.frames[0], hmm3.means[s], hmm3.variances[s]);
  }
  CHECK(hmm_log_likelihood(hmm3, one) == doctest::Approx(std::log(p)).epsilon(1e-12));

  SequenceEmbedding bad{{Vector::Zero(5)}};
  CHECK_THROWS_AS(hmm_log_likelihood(hmm3, bad), Error);
}

TEST_CASE("long sequences stay finite") {
  SeededRng rng(23);
  const auto hmm = random_hmm(rng, 4, 3);
  const auto sample = hmm_sample(hmm, rng, 10000);
  const double ll = hmm_log_likelihood(hmm, sample.sequence);
  CHECK(std::isfinite(ll));
  CHECK(ll < 0.0);
}

TEST_CASE("single-state fit returns pooled frame statistics") {
  SeededRng rng(24);
  std::vector<SequenceEmbedding> seqs(3);
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  double n = 0.0;
  for (auto& s : seqs) {
    for (int i = 0; i < 50; ++i) {
      const Vector f = Eigen::Vector2d(1.0, -1.0) + Eigen::Vector2d(0.5, 2.0).cwiseProduct(rng.normal_vector(2));
      s.frames.push_back(f);
      sum += f;
      sq += f.cwiseProduct(f);
      n += 1.0;
    }
  }
  const auto fit = hmm_fit_baum_welch(seqs, 1, rng);
  const Vector mean = sum / n;
  const Vector var = sq / n - mean.cwiseProduct(mean);
  CHECK((fit.model.means[0] - mean).norm() < 1e-10);
  CHECK((fit.model.variances[0] - var).norm() < 1e-10);
}

TEST_CASE("two-state chain is recovered") {
  GaussianHMM truth;
  truth.initial = Eigen::Vector2d(0.5, 0.5);
  truth.transitions.resize(2, 2);
  truth.transitions << 0.9, 0.1, 0.2, 0.8;
  truth.means = {Vector::Constant(1, -5.0), Vector::Constant(1, 5.0)};
  truth.variances = {Vector::Ones(1), Vector::Ones(1)};
  SeededRng rng(25);
  const auto data = hmm_sample(truth, rng, 3000);
  const auto fit = hmm_fit_baum_welch({data.sequence}, 2, rng);
  const bool swapped = fit.model.means[0][0] > fit.model.means[1][0];
  Matrix a = fit.model.transitions;
  if (swapped) {
    a.col(0).swap(a.col(1));
    a.row(0).swap(a.row(1));
  }
  CHECK((a - truth.transitions).cwiseAbs().maxCoeff() < 0.1);
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(std::abs(fit.model.transitions.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("Baum-Welch trace is non-decreasing") {
  SeededRng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truth = random_hmm(rng, 2 + rng.uniform_index(3), 2);
    std::vector<SequenceEmbedding> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(hmm_sample(truth, rng, 40).sequence);
    const auto fit = hmm_fit_baum_welch(seqs, 2 + rng.uniform_index(4), rng);
    for (std::size_t i = 1; i < fit.trace.size(); ++i) {
      REQUIRE(fit.trace[i] >= fit.trace[i - 1] - 1e-9);
    }
    for (Eigen::Index i = 0; i < fit.model.transitions.rows(); ++i) {
      REQUIRE(std::abs(fit.model.transitions.row(i).sum() - 1.0) < 1e-12);
    }
    for (const auto& v : fit.model.variances) REQUIRE(v.minCoeff() >= 1e-8);
  }
}

TEST_CASE("sampling follows a deterministic cycle") {
  GaussianHMM cyc;
  cyc.initial = Vector::Zero(3);
  cyc.initial[0] = 1.0;
  cyc.transitions = Matrix::Zero(3, 3);
  cyc.transitions(0, 1) = cyc.transitions(1, 2) = cyc.transitions(2, 0) = 1.0;
  for (int s = 0; s < 3; ++s) {
    cyc.means.push_back(Vector::Constant(2, 10.0 * s));
    cyc.variances.push_back(Vector::Constant(2, 1e-6));
  }
  SeededRng rng(27);
  const auto out = hmm_sample(cyc, rng, 30);
  for (std::size_t t = 0; t < 30; ++t) {
    CHECK(out.states[t] == t % 3);
    CHECK((out.sequence.frames[t] - cyc.means[t % 3]).cwiseAbs().maxCoeff() < 4e-3);
  }

  SeededRng a(3), b(3);
  const auto sa = hmm_sample(cyc, a, 10);
  const auto sb = hmm_sample(cyc, b, 10);
  for (std::size_t t = 0; t < 10; ++t) CHECK(sa.sequence.frames[t] == sb.sequence.frames[t]);
}

TEST_CASE("collapsed states are reseeded") {
  SeededRng rng(28);
  SequenceEmbedding seq;
  for (int i = 0; i < 60; ++i) seq.frames.push_back(rng.normal_vector(1));
  GaussianHMM init;
  init.initial = Eigen::Vector2d(0.5, 0.5);
  init.transitions = Matrix::Constant(2, 2, 0.5);
  init.means = {Vector::Zero(1), Vector::Constant(1, 1e4)};
  init.variances = {Vector::Ones(1), Vector::Ones(1)};
  const auto fit = hmm_fit_baum_welch_from(init, {seq}, rng);
  CHECK(fit.reinitialized_states >= 1);
  CHECK(std::abs(fit.model.means[1][0]) < 10.0);
}
