#pragma once

// Model builders and quadrature shared by the unit and acceptance suites.

#include <cmath>
#include <vector>

#include "latent/implicit_likelihood.hpp"

namespace support {

using latent::Matrix;
using latent::Vector;

inline latent::PseudoLinearLayer random_layer(latent::SeededRng& rng, Eigen::Index in,
                                              Eigen::Index out, double scale) {
  latent::PseudoLinearLayer l{Matrix(out, in), Vector(out)};
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = scale * rng.normal();
  for (Eigen::Index i = 0; i < out; ++i) l.bias[i] = 0.5 * rng.normal();
  return l;
}

/// Square layer U diag(s) V^T with random rotations and singular values in
/// scale * [0.5, 1.5].
inline latent::PseudoLinearLayer conditioned_layer(latent::SeededRng& rng, Eigen::Index dim,
                                                   double scale) {
  auto rotation = [&]() {
    Matrix a(dim, dim);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    return Matrix(Eigen::HouseholderQR<Matrix>(a).householderQ());
  };
  Vector s(dim);
  for (Eigen::Index i = 0; i < dim; ++i) s[i] = scale * rng.uniform(0.5, 1.5);
  latent::PseudoLinearLayer l{rotation() * s.asDiagonal() * rotation().transpose(), Vector(dim)};
  for (Eigen::Index i = 0; i < dim; ++i) l.bias[i] = 0.5 * rng.normal();
  return l;
}

/// Square tanh -> sigmoid perceptron with well-conditioned layers.
inline latent::InvertibleNet conditioned_net(latent::SeededRng& rng, Eigen::Index k, double scale) {
  using latent::InvertibleNonlinearity;
  using latent::NonlinearityKind;
  latent::InvertibleNet net;
  net.stages.push_back({conditioned_layer(rng, k, scale), InvertibleNonlinearity(NonlinearityKind::kTanh)});
  net.stages.push_back({conditioned_layer(rng, k, scale), InvertibleNonlinearity(NonlinearityKind::kSigmoid)});
  return net;
}

/// Two-stage tanh -> sigmoid perceptron.
inline latent::InvertibleNet random_net(latent::SeededRng& rng, Eigen::Index k,
                                        Eigen::Index hidden, Eigen::Index out, double scale) {
  using latent::InvertibleNonlinearity;
  using latent::NonlinearityKind;
  latent::InvertibleNet net;
  net.stages.push_back({random_layer(rng, k, hidden, scale), InvertibleNonlinearity(NonlinearityKind::kTanh)});
  net.stages.push_back({random_layer(rng, hidden, out, scale), InvertibleNonlinearity(NonlinearityKind::kSigmoid)});
  return net;
}

inline latent::GaussianMixture random_gmm(latent::SeededRng& rng, std::size_t m, Eigen::Index k) {
  Vector w(static_cast<Eigen::Index>(m));
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t i = 0; i < m; ++i) {
    w[static_cast<Eigen::Index>(i)] = rng.uniform(0.2, 1.0);
    means.push_back(1.5 * rng.normal_vector(k));
    Matrix a(k, k);
    for (Eigen::Index j = 0; j < a.size(); ++j) a.data()[j] = 0.5 * rng.normal();
    covs.push_back(a * a.transpose() + 0.3 * Matrix::Identity(k, k));
  }
  return latent::GaussianMixture(w / w.sum(), means, covs);
}

inline latent::ImplicitModel tied_model(latent::InvertibleNet net, latent::BaseDistribution base) {
  return latent::ImplicitModel{latent::Autoencoder(latent::TiedAutoencoder{std::move(net)}),
                               std::move(base)};
}

/// Midpoint-rule integral of exp(model_log_pdf) over an n x n grid spanning
/// the sample mean +- `spread` sample standard deviations per axis.
inline double integrate_density_2d(const latent::ImplicitModel& model, latent::SeededRng& rng,
                                   int n = 400, double spread = 5.0,
                                   std::size_t pilot_samples = 20000) {
  const auto& net = std::get<latent::TiedAutoencoder>(model.mapping).net;
  const auto& base = std::get<latent::GaussianMixture>(model.base);
  const auto pilot = latent::gmm_sample(base, rng, pilot_samples).points;
  std::vector<Vector> xs;
  xs.reserve(pilot.size());
  for (const auto& h : pilot) xs.push_back(latent::net_forward(net, h));
  const auto [mean, cov] = latent::sample_moments(xs);
  const double sx = std::sqrt(cov(0, 0)), sy = std::sqrt(cov(1, 1));
  const double lo_x = mean[0] - spread * sx, lo_y = mean[1] - spread * sy;
  const double dx = 2.0 * spread * sx / n, dy = 2.0 * spread * sy / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vector x = Eigen::Vector2d(lo_x + (i + 0.5) * dx, lo_y + (j + 0.5) * dy);
      total += std::exp(latent::model_log_pdf(model, x));
    }
  }
  return total * dx * dy;
}

}  // namespace support
