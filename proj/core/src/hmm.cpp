#include "latent/hmm.hpp"

#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "latent/gmm.hpp"

namespace latent {

namespace {

constexpr double kDegenerateOccupancy = 1e-8;

struct ForwardBackward {
  Matrix alpha;    // T x S, normalized per step
  Matrix beta;     // T x S, scaled by the same constants
  Matrix scaled_emission;  // exp(log b - row max)
  Vector scale;    // per-step normalizers
  double log_likelihood = 0.0;
};

ForwardBackward forward_backward(const GaussianHMM& hmm, const SequenceEmbedding& seq,
                                 bool with_backward) {
  const Matrix log_b = hmm_emission_log_densities(hmm, seq);
  const Eigen::Index t_len = log_b.rows();
  const Eigen::Index s = log_b.cols();
  ForwardBackward fb;
  fb.scaled_emission.resize(t_len, s);
  fb.alpha.resize(t_len, s);
  fb.scale.resize(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double hi = log_b.row(t).maxCoeff();
    fb.scaled_emission.row(t) = (log_b.row(t).array() - hi).exp();
    Eigen::RowVectorXd a = t == 0 ? Eigen::RowVectorXd(hmm.initial.transpose())
                                  : Eigen::RowVectorXd(fb.alpha.row(t - 1) * hmm.transitions);
    a.array() *= fb.scaled_emission.row(t).array();
    const double c = a.sum();
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw Error(ErrorCode::kNonFiniteObjective, "forward recursion lost all mass");
    }
    fb.alpha.row(t) = a / c;
    fb.scale[t] = c;
    fb.log_likelihood += std::log(c) + hi;
  }
  if (with_backward) {
    fb.beta.resize(t_len, s);
    fb.beta.row(t_len - 1).setOnes();
    for (Eigen::Index t = t_len - 1; t-- > 0;) {
      const Eigen::VectorXd next =
          (fb.scaled_emission.row(t + 1).array() * fb.beta.row(t + 1).array()).transpose();
      fb.beta.row(t) = (hmm.transitions * next).transpose() / fb.scale[t + 1];
    }
  }
  return fb;
}

Vector dirichlet_one(SeededRng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

}  // namespace

void GaussianHMM::validate() const {
  const auto s = static_cast<Eigen::Index>(num_states());
  if (s == 0) throw Error(ErrorCode::kInvalidArgument, "HMM has no states");
  require_dim(initial.size(), s, "HMM initial distribution");
  require_dim(transitions.rows(), s, "HMM transition rows");
  require_dim(transitions.cols(), s, "HMM transition cols");
  require_dim(static_cast<Eigen::Index>(variances.size()), s, "HMM variances");
  for (std::size_t k = 0; k < num_states(); ++k) {
    require_dim(means[k].size(), dim(), "HMM emission mean");
    require_dim(variances[k].size(), dim(), "HMM emission variance");
    if ((variances[k].array() <= 0.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "HMM variances must be positive");
    }
  }
  if (std::abs(initial.sum() - 1.0) > 1e-9 || (initial.array() < 0.0).any()) {
    throw Error(ErrorCode::kInvalidArgument, "HMM initial distribution is not a simplex");
  }
  for (Eigen::Index i = 0; i < s; ++i) {
    if (std::abs(transitions.row(i).sum() - 1.0) > 1e-9 ||
        (transitions.row(i).array() < 0.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "HMM transitions are not row-stochastic");
    }
  }
}

Matrix hmm_emission_log_densities(const GaussianHMM& hmm, const SequenceEmbedding& seq) {
  if (seq.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "empty sequence");
  const auto t_len = static_cast<Eigen::Index>(seq.frames.size());
  const auto s = static_cast<Eigen::Index>(hmm.num_states());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Matrix out(t_len, s);
  for (Eigen::Index k = 0; k < s; ++k) {
    const Vector& mu = hmm.means[static_cast<std::size_t>(k)];
    const Vector& var = hmm.variances[static_cast<std::size_t>(k)];
    const double norm = -0.5 * (static_cast<double>(mu.size()) * log_2pi + var.array().log().sum());
    const Vector inv_var = var.cwiseInverse();
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Vector& x = seq.frames[static_cast<std::size_t>(t)];
      require_dim(x.size(), mu.size(), "HMM frame");
      out(t, k) = norm - 0.5 * ((x - mu).array().square() * inv_var.array()).sum();
    }
  }
  return out;
}

double hmm_log_likelihood(const GaussianHMM& hmm, const SequenceEmbedding& seq) {
  return forward_backward(hmm, seq, false).log_likelihood;
}

GaussianHMM hmm_initialize(const std::vector<SequenceEmbedding>& sequences,
                           std::size_t states, SeededRng& rng,
                           const HmmFitOptions& options) {
  std::vector<Vector> frames;
  for (const auto& seq : sequences) {
    frames.insert(frames.end(), seq.frames.begin(), seq.frames.end());
  }
  if (states == 0 || frames.size() < states) {
    throw Error(ErrorCode::kInvalidArgument, "need at least as many frames as states");
  }
  const auto s = static_cast<Eigen::Index>(states);
  GmmFitOptions km;
  const GaussianMixture seeded = gmm_kmeans_init(frames, states, rng, km);
  const Vector pooled_var =
      sample_moments(frames).second.diagonal().cwiseMax(options.variance_floor);

  GaussianHMM hmm;
  hmm.initial = 0.9 * Vector::Constant(s, 1.0 / static_cast<double>(s)) + 0.1 * dirichlet_one(rng, s);
  hmm.initial /= hmm.initial.sum();
  hmm.transitions.resize(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    Vector row = 0.9 * Vector::Constant(s, 1.0 / static_cast<double>(s)) + 0.1 * dirichlet_one(rng, s);
    hmm.transitions.row(i) = (row / row.sum()).transpose();
  }
  hmm.means = seeded.means();
  hmm.variances.assign(states, pooled_var);
  return hmm;
}

HmmFitResult hmm_fit_baum_welch_from(const GaussianHMM& init,
                                     const std::vector<SequenceEmbedding>& sequences,
                                     SeededRng& rng, const HmmFitOptions& options) {
  init.validate();
  if (sequences.empty()) throw Error(ErrorCode::kInvalidArgument, "no sequences");
  const auto s = static_cast<Eigen::Index>(init.num_states());
  const Eigen::Index d = init.dim();

  std::vector<Vector> all_frames;
  for (const auto& seq : sequences) {
    all_frames.insert(all_frames.end(), seq.frames.begin(), seq.frames.end());
  }
  const Vector pooled_var =
      sample_moments(all_frames).second.diagonal().cwiseMax(options.variance_floor);

  HmmFitResult result;
  result.model = init;

  auto e_step = [&](const GaussianHMM& hmm, Vector& init_acc, Matrix& trans_acc,
                    Vector& occupancy, Matrix& sum_x, Matrix& sum_xx) {
    init_acc = Vector::Zero(s);
    trans_acc = Matrix::Zero(s, s);
    occupancy = Vector::Zero(s);
    sum_x = Matrix::Zero(d, s);
    sum_xx = Matrix::Zero(d, s);
    double total = 0.0;
    for (const auto& seq : sequences) {
      const ForwardBackward fb = forward_backward(hmm, seq, true);
      total += fb.log_likelihood;
      const Matrix gamma = fb.alpha.cwiseProduct(fb.beta);
      init_acc += gamma.row(0).transpose();
      for (Eigen::Index t = 0; t + 1 < gamma.rows(); ++t) {
        const Eigen::RowVectorXd next =
            fb.scaled_emission.row(t + 1).cwiseProduct(fb.beta.row(t + 1)) / fb.scale[t + 1];
        trans_acc.array() +=
            (fb.alpha.row(t).transpose() * next).array() * hmm.transitions.array();
      }
      for (Eigen::Index t = 0; t < gamma.rows(); ++t) {
        const Vector& x = seq.frames[static_cast<std::size_t>(t)];
        const Vector g = gamma.row(t).transpose();
        occupancy += g;
        sum_x.noalias() += x * g.transpose();
        sum_xx.noalias() += x.cwiseAbs2() * g.transpose();
      }
    }
    return total;
  };

  Vector init_acc;
  Matrix trans_acc;
  Vector occupancy;
  Matrix sum_x;
  Matrix sum_xx;
  result.trace.push_back(e_step(result.model, init_acc, trans_acc, occupancy, sum_x, sum_xx));

  for (int it = 0; it < options.max_iters; ++it) {
    GaussianHMM next = result.model;
    next.initial = init_acc / init_acc.sum();
    for (Eigen::Index i = 0; i < s; ++i) {
      const double row = trans_acc.row(i).sum();
      if (row > 0.0) next.transitions.row(i) = trans_acc.row(i) / row;
    }
    for (Eigen::Index k = 0; k < s; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      if (occupancy[k] < kDegenerateOccupancy) {
        spdlog::warn("DegenerateState: state {} has no occupancy; reseeding its emission", k);
        ++result.reinitialized_states;
        next.means[ks] = all_frames[rng.uniform_index(all_frames.size())];
        next.variances[ks] = pooled_var;
        continue;
      }
      next.means[ks] = sum_x.col(k) / occupancy[k];
      next.variances[ks] = (sum_xx.col(k) / occupancy[k] - next.means[ks].cwiseAbs2())
                               .cwiseMax(options.variance_floor);
    }
    result.model = std::move(next);

    const double previous = result.trace.back();
    const double current =
        e_step(result.model, init_acc, trans_acc, occupancy, sum_x, sum_xx);
    result.trace.push_back(current);
    if (!std::isfinite(current)) {
      throw Error(ErrorCode::kNonFiniteObjective, "Baum-Welch likelihood is not finite");
    }
    if (std::abs(current - previous) <= options.tol * std::abs(previous)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

HmmFitResult hmm_fit_baum_welch(const std::vector<SequenceEmbedding>& sequences,
                                std::size_t states, SeededRng& rng,
                                const HmmFitOptions& options) {
  const GaussianHMM init = hmm_initialize(sequences, states, rng, options);
  return hmm_fit_baum_welch_from(init, sequences, rng, options);
}

HmmSample hmm_sample(const GaussianHMM& hmm, SeededRng& rng, std::size_t frames) {
  hmm.validate();
  HmmSample out;
  std::size_t state = rng.categorical(
      std::span<const double>(hmm.initial.data(), static_cast<std::size_t>(hmm.initial.size())));
  for (std::size_t t = 0; t < frames; ++t) {
    if (t > 0) {
      const Vector row = hmm.transitions.row(static_cast<Eigen::Index>(state)).transpose();
      state = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    const Vector z = rng.normal_vector(hmm.dim());
    out.sequence.frames.push_back(hmm.means[state] +
                                  (hmm.variances[state].cwiseSqrt().array() * z.array()).matrix());
    out.states.push_back(state);
  }
  return out;
}

}  // namespace latent
