#include <doctest.h>

#include <cmath>

#include "latent/numerics.hpp"
#include "oracles.hpp"

using namespace latent;

namespace {

Matrix random_spd(SeededRng& rng, Eigen::Index n) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a.transpose() * a + Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("cholesky of identity and diagonal matrices") {
  const auto f = cholesky(Matrix::Identity(3, 3));
  CHECK(f.lower().isApprox(Matrix::Identity(3, 3)));

  Matrix d = Vector(Eigen::Vector2d(4.0, 9.0)).asDiagonal();
  const auto fd = cholesky(d);
  CHECK(fd.lower()(0, 0) == doctest::Approx(2.0));
  CHECK(fd.lower()(1, 1) == doctest::Approx(3.0));
  CHECK(fd.lower()(1, 0) == 0.0);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  SeededRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_index(8));
    const Matrix m = random_spd(rng, n);
    const auto f = cholesky(m);
    const Matrix rebuilt = f.lower() * f.lower().transpose();
    CHECK((rebuilt - m).norm() / m.norm() < 1e-10);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(f.lower()(i, i) > 0.0);
  }
}

TEST_CASE("cholesky rejects indefinite and malformed input") {
  Matrix m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  try {
    cholesky(m);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotPositiveDefinite);
  }
  CHECK_THROWS_AS(cholesky(Matrix::Zero(2, 3)), Error);
  Matrix asym(2, 2);
  asym << 2.0, 1.0, 0.0, 2.0;
  CHECK_THROWS_AS(cholesky(asym), Error);
  CHECK_THROWS_AS(cholesky(Matrix::Zero(3, 3)), Error);
}

TEST_CASE("log_det_spd closed forms") {
  CHECK(log_det_spd(cholesky(Matrix::Identity(4, 4))) == doctest::Approx(0.0));
  Matrix d = Vector(Eigen::Vector2d(4.0, 9.0)).asDiagonal();
  CHECK(log_det_spd(cholesky(d)) == doctest::Approx(std::log(36.0)).epsilon(1e-12));
  CHECK(log_det_spd(cholesky(2.0 * Matrix::Identity(2, 2))) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-12));
}

TEST_CASE("log_det_spd agrees with cofactor expansion up to dim 4") {
  SeededRng rng(5);
  for (Eigen::Index n = 1; n <= 4; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix m = random_spd(rng, n);
      const double expected = std::log(oracle::cofactor_det(m));
      CHECK(oracle::relative_error(log_det_spd(cholesky(m)), expected, 1e-300) < 1e-10);
    }
  }
}

TEST_CASE("solve_spd") {
  const Vector b = Eigen::Vector3d(1.0, -2.0, 0.5);
  CHECK(solve_spd(cholesky(Matrix::Identity(3, 3)), b).isApprox(b));
  const Vector x = solve_spd(cholesky(2.0 * Matrix::Identity(2, 2)), Vector(Eigen::Vector2d(4.0, 6.0)));
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(3.0));

  SeededRng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_spd(rng, 6);
    const Vector rhs = rng.normal_vector(6);
    const Vector sol = solve_spd(cholesky(m), rhs);
    CHECK((m * sol - rhs).norm() / rhs.norm() < 1e-9);
  }
  CHECK_THROWS_AS(solve_spd(cholesky(Matrix::Identity(3, 3)), Vector(Vector::Ones(2))), Error);
}

TEST_CASE("sample_gaussian is seed-deterministic") {
  const auto f = cholesky(Matrix::Identity(3, 3));
  SeededRng a(42), b(42);
  CHECK(sample_gaussian(a, Vector::Zero(3), f) == sample_gaussian(b, Vector::Zero(3), f));
  CHECK_THROWS_AS(sample_gaussian(a, Vector::Zero(2), f), Error);
}

TEST_CASE("sample_gaussian moments") {
  SeededRng rng(1234);
  const Vector mean = Eigen::Vector2d(1.0, 2.0);
  Matrix cov = Vector(Eigen::Vector2d(1.0, 4.0)).asDiagonal();
  const auto f = cholesky(cov);
  const int n = 100000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vector x = sample_gaussian(rng, mean, f);
    sum += x;
    sq += x.cwiseAbs2();
  }
  const Vector m = sum / n;
  const Vector var = sq / n - m.cwiseAbs2();
  CHECK(std::abs(m[0] - 1.0) < 0.05);
  CHECK(std::abs(m[1] - 2.0) < 0.05);
  CHECK(std::abs(var[0] - 1.0) < 0.1);
  CHECK(std::abs(var[1] - 4.0) < 0.1);
}

TEST_CASE("equal seeds emit identical streams; substreams are stable") {
  SeededRng a(77), b(77);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  SeededRng root(3);
  CHECK(root.substream("ae").next_u64() == SeededRng(3).substream("ae").next_u64());
  CHECK(root.substream("ae").next_u64() != root.substream("base").next_u64());
}

TEST_CASE("log_sum_exp handles large magnitudes") {
  const std::vector<double> v{-1000.0, -1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(-1000.0 + std::log(2.0)));
  const std::vector<double> big{800.0, 0.0};
  CHECK(log_sum_exp(big) == doctest::Approx(800.0));
}
