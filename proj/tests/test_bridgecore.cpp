#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "opbridge/bridgecore.hpp"
#include "opbridge/errors.hpp"
#include "opbridge/grids.hpp"
#include "opbridge/spectral.hpp"
#include "oracles.hpp"

using namespace opbridge;
using Catch::Approx;

namespace {

BridgeModel scalar_model(double alpha, double horizon = 1.0) {
  Matrix a(1, 1), s(1, 1);
  a << alpha;
  s << 1.0;
  return BridgeModel::create(a, s, horizon);
}

BridgeModel skew_model(double horizon = 1.0) {
  Matrix a(2, 2);
  a << 0, 1, -1, 0;
  return BridgeModel::create(a, Matrix::Identity(2, 2), horizon);
}

}  // namespace

TEST_CASE("model construction validates and records the noise rank", "[bridgecore]") {
  const auto mo = scalar_model(0.5);
  CHECK(mo.d == 1);
  CHECK(mo.m == 1);
  CHECK(mo.sigma_rank == 1);
  CHECK(mo.full_rank_noise());

  Matrix a = Matrix::Identity(2, 2);
  Matrix low(2, 2);
  low << 1, 0, 2, 0;  // rank one
  CHECK(BridgeModel::create(a, low, 1.0).sigma_rank == 1);

  CHECK_THROWS_AS(BridgeModel::create(a, Matrix::Identity(2, 2), 0.0), InvalidInput);
  CHECK_THROWS_AS(BridgeModel::create(a, Matrix::Identity(2, 2), -1.0), InvalidInput);
  CHECK_THROWS_AS(BridgeModel::create(a, Matrix::Identity(3, 3), 1.0), InvalidInput);
  Matrix bad = a;
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(BridgeModel::create(bad, Matrix::Identity(2, 2), 1.0), InvalidInput);
}

TEST_CASE("covariance reproduces closed-form reference points", "[bridgecore]") {
  double err = 0.0;
  const Matrix u_wiener = covariance_at(scalar_model(1.0), 0.25, &err);
  CHECK(u_wiener(0, 0) == Approx(0.1875).margin(1e-10));
  CHECK(err <= 1e-9 * (1.0 + u_wiener.norm()));

  const Matrix u_quarter = covariance_at(scalar_model(0.25), 0.5, nullptr);
  CHECK(u_quarter(0, 0) == Approx((0.5 - std::sqrt(0.5)) / (-0.5)).margin(1e-10));
  CHECK(u_quarter(0, 0) == Approx(0.4142135623730951).margin(1e-9));

  const Matrix u_skew = covariance_at(skew_model(), 0.6, nullptr);
  CHECK((u_skew - 0.6 * Matrix::Identity(2, 2)).norm() <= 1e-10);

  CHECK(covariance_at(scalar_model(0.7), 0.0, nullptr).norm() == 0.0);
}

TEST_CASE("scalar covariance matches the closed form across rates and horizons", "[bridgecore]") {
  for (double horizon : {1.0, 2.5}) {
    const auto grid = geometric_grid(horizon, 16);
    for (double alpha : {0.25, 0.5, 0.75, 1.0, 1.5}) {
      const auto rep = covariance(scalar_model(alpha, horizon), grid);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double want = oracle::scalar_cov(alpha, horizon, grid[k]);
        const double got = rep.matrices[k](0, 0);
        CHECK(std::abs(got - want) <= 1e-8 * std::max(1e-12, std::abs(want)));
      }
    }
  }
}

TEST_CASE("covariance reports are symmetric PSD with honest error estimates", "[bridgecore]") {
  oracle::Rng rng(404);
  for (int trial = 0; trial < 6; ++trial) {
    const int d = rng.integer(1, 4);
    const Matrix a = oracle::random_drift(rng, d, 0.05, 1.8, 0.1, nullptr);
    const Matrix sigma = oracle::random_matrix(rng, d, d);
    const auto mo = BridgeModel::create(a, sigma, 1.0);
    const auto rep = covariance(mo, geometric_grid(1.0, 12));
    REQUIRE(rep.matrices.size() == rep.times.size());
    CHECK(rep.matrices.front().norm() == 0.0);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
      const Matrix& u = rep.matrices[k];
      const double scale = 1.0 + u.norm();
      CHECK((u - u.transpose()).norm() <= 1e-10 * scale);
      Eigen::SelfAdjointEigenSolver<Matrix> es(u);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9 * scale);
      CHECK(rep.quad_error[k] <= 1e-9 * scale);
    }
  }
}

TEST_CASE("covariance rejects bad grids and out-of-range times", "[bridgecore]") {
  const auto mo = scalar_model(0.5);
  CHECK_THROWS_AS(covariance_at(mo, 1.0, nullptr), DomainError);
  CHECK_THROWS_AS(covariance_at(mo, 1.5, nullptr), DomainError);
  CHECK_THROWS_AS(covariance_at(mo, -0.1, nullptr), DomainError);
  CHECK_THROWS_AS(covariance(mo, {0.1, 0.1, 0.2}), InvalidInput);
  CHECK_THROWS_AS(covariance(mo, {0.2, 0.1}), InvalidInput);
  CHECK_THROWS_AS(covariance(mo, {}), InvalidInput);
}

TEST_CASE("cross-covariance agrees with closed forms and is transpose-symmetric", "[bridgecore]") {
  const auto wiener = scalar_model(1.0);
  CHECK(cross_covariance(wiener, 0.0, 0.5).norm() == 0.0);
  CHECK(cross_covariance(wiener, 0.25, 0.5)(0, 0) == Approx(0.125).margin(1e-10));
  CHECK(cross_covariance(wiener, 0.25, 0.5)(0, 0) ==
        Approx(oracle::wiener_cross(1.0, 0.25, 0.5)).margin(1e-10));

  oracle::Rng rng(77);
  const Matrix a = oracle::random_drift(rng, 3, 0.1, 1.2, 0.1, nullptr);
  const auto mo = BridgeModel::create(a, oracle::random_matrix(rng, 3, 3), 1.0);
  const Matrix cst = cross_covariance(mo, 0.3, 0.7);
  const Matrix cts = cross_covariance(mo, 0.7, 0.3);
  CHECK((cst - cts.transpose()).norm() <= 1e-10 * (1.0 + cst.norm()));

  // Equal arguments collapse to the covariance.
  const Matrix diag_u = covariance_at(mo, 0.7, nullptr);
  CHECK((cross_covariance(mo, 0.7, 0.7) - diag_u).norm() <= 1e-9 * (1.0 + diag_u.norm()));

  CHECK_THROWS_AS(cross_covariance(mo, 0.5, 1.0), DomainError);
}

TEST_CASE("quadratic variation: closed forms, flags, monotonicity", "[bridgecore]") {
  const auto grid = geometric_grid(1.0, 18);

  const auto bounded = quadratic_variation(scalar_model(0.25), 1, grid);
  CHECK(bounded.coordinate == 1);
  CHECK(bounded.values.front() == 0.0);
  CHECK(bounded.divergence_flag == QuadVarCurve::Divergence::bounded);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(bounded.values[k] ==
          Approx(oracle::scalar_qvar(0.25, 1.0, grid[k])).margin(1e-8));
    if (k > 0) CHECK(bounded.values[k] >= bounded.values[k - 1]);
  }
  // Spot value from the closed form 2(1 - sqrt(1-t)).
  const auto spot = quadratic_variation(scalar_model(0.25), 1, {0.0, 0.75});
  CHECK(spot.values.back() == Approx(1.0).margin(1e-8));

  const auto divergent = quadratic_variation(scalar_model(0.75), 1, grid);
  CHECK(divergent.divergence_flag == QuadVarCurve::Divergence::divergent);
  for (std::size_t k = 0; k < grid.size(); ++k)
    CHECK(divergent.values[k] ==
          Approx(oracle::scalar_qvar(0.75, 1.0, grid[k])).epsilon(1e-8));

  const auto boundary = quadratic_variation(scalar_model(0.5), 1, grid);
  CHECK(boundary.divergence_flag == QuadVarCurve::Divergence::undetermined);
  CHECK(boundary.values.back() ==
        Approx(oracle::scalar_qvar(0.5, 1.0, grid.back())).epsilon(1e-8));

  // Rank-deficient noise above the boundary rate: no divergence guarantee.
  Matrix a2 = Matrix::Zero(2, 2);
  a2.diagonal() << 0.75, 0.9;
  Matrix low(2, 2);
  low << 1, 0, 1, 0;
  const auto rankdef = quadratic_variation(BridgeModel::create(a2, low, 1.0), 2, grid);
  CHECK(rankdef.divergence_flag == QuadVarCurve::Divergence::undetermined);

  CHECK_THROWS_AS(quadratic_variation(scalar_model(0.25), 0, grid), InvalidInput);
  CHECK_THROWS_AS(quadratic_variation(scalar_model(0.25), 2, grid), InvalidInput);
}

// Envelope bound for a single rate a in (0, 1/2) and any b in (a, 1/2): the
// curve is dominated by the integral of (T-s)^{-2b}, whose limit at T is
// finite, so the quadratic variation stays bounded.
TEST_CASE("quadratic variation respects the sub-half envelope bound", "[bridgecore]") {
  const double a = 0.25, b = 0.4, horizon = 1.0;
  const auto grid = geometric_grid(horizon, 16);
  const auto curve = quadratic_variation(scalar_model(a, horizon), 1, grid);
  const double cap = std::pow(horizon, 1.0 - 2.0 * b) / (1.0 - 2.0 * b);
  double prev = -1.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double envelope =
        (std::pow(horizon, 1.0 - 2.0 * b) - std::pow(horizon - grid[k], 1.0 - 2.0 * b)) /
        (1.0 - 2.0 * b);
    CHECK(curve.values[k] <= envelope * (1.0 + 1e-10) + 1e-12);
    CHECK(curve.values[k] >= prev);
    prev = curve.values[k];
  }
  CHECK(curve.values.back() <= cap);
}

TEST_CASE("covariance ODE residual is small at reference points", "[bridgecore]") {
  // d=1, A=1: U(t) = t(1-t) satisfies U' = 1 - 2t exactly.
  const Matrix r1 = covariance_ode_residual(scalar_model(1.0), 0.5, 1e-4);
  CHECK(r1.norm() <= 1e-6);

  const Matrix r2 = covariance_ode_residual(skew_model(), 0.3, 1e-4);
  CHECK(r2.norm() <= 1e-6);

  // A = 0 gives plain scaled Brownian motion, U(t) = sigma^2 t: residual ~ 0.
  Matrix zero_a = Matrix::Zero(1, 1);
  Matrix s(1, 1);
  s << 0.7;
  const auto bm = BridgeModel::create(zero_a, s, 1.0);
  CHECK(covariance_ode_residual(bm, 0.5, 1e-4).norm() <= 1e-10);
}

TEST_CASE("covariance ODE residual across random models", "[bridgecore]") {
  oracle::Rng rng(550);
  for (int trial = 0; trial < 8; ++trial) {
    const int d = rng.integer(1, 4);
    const Matrix a = oracle::random_drift(rng, d, 0.08, 1.9, 0.1, nullptr);
    const Matrix sigma = oracle::random_matrix(rng, d, d);
    const auto mo = BridgeModel::create(a, sigma, 1.0);
    const double budget = 1e-5 * (1.0 + (sigma * sigma.transpose()).norm());
    for (double t : {0.15, 0.4, 0.62, 0.85}) {
      CHECK(covariance_ode_residual(mo, t, 1e-4).norm() <= budget);
    }
  }
}

TEST_CASE("covariance ODE residual enforces its step precondition", "[bridgecore]") {
  const auto mo = scalar_model(0.5);
  CHECK_THROWS_AS(covariance_ode_residual(mo, 0.5, 0.2), PreconditionError);
  CHECK_THROWS_AS(covariance_ode_residual(mo, 0.01, 0.01), PreconditionError);
  CHECK_THROWS_AS(covariance_ode_residual(mo, 0.5, 0.0), PreconditionError);
  CHECK_THROWS_AS(covariance_ode_residual(mo, 0.0, 1e-4), PreconditionError);
}

TEST_CASE("covariance restricted to a spectral block matches the block model", "[bridgecore]") {
  oracle::Rng rng(881);
  const int d = 4;
  const Matrix a = oracle::random_drift(rng, d, 0.1, 1.5, 0.2, nullptr);
  const Matrix sigma = oracle::random_matrix(rng, d, d);
  const auto mo = BridgeModel::create(a, sigma, 1.0);
  const auto dec = decompose(a, sigma);
  REQUIRE(dec.block_count() >= 1);

  for (double t : {0.3, 0.8, 0.97}) {
    const Matrix u = covariance_at(mo, t, nullptr);
    const Matrix adapted = dec.basis_inverse * u * dec.basis_inverse.transpose();
    for (std::size_t j = 0; j < dec.blocks.size(); ++j) {
      const Eigen::Index off = dec.block_offset(j);
      const Eigen::Index dim = dec.block_dims[j];
      const auto sub = BridgeModel::create(dec.blocks[j], dec.projected_diffusions[j], 1.0);
      const Matrix want = covariance_at(sub, t, nullptr);
      CHECK((adapted.block(off, off, dim, dim) - want).norm() <=
            1e-7 * (1.0 + want.norm()));
    }
  }
}

TEST_CASE("skew-symmetric drift reproduces Brownian marginals on a grid", "[bridgecore]") {
  const auto rep = covariance(skew_model(), geometric_grid(1.0, 14));
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    CHECK((rep.matrices[k] - rep.times[k] * Matrix::Identity(2, 2)).norm() <= 1e-9);
  }
}

TEST_CASE("martingale factors are mutually inverse powers", "[bridgecore]") {
  const auto [fwd, bwd] = martingale_factor(scalar_model(0.5), 0.75);
  CHECK(fwd(0, 0) == Approx(0.5).margin(1e-12));
  CHECK(bwd(0, 0) == Approx(2.0).margin(1e-12));

  const auto horizon2 = BridgeModel::create(Matrix::Identity(2, 2) * 0.7,
                                            Matrix::Identity(2, 2), 2.0);
  const auto [f1, b1] = martingale_factor(horizon2, 1.0);  // T - t = 1
  CHECK((f1 - Matrix::Identity(2, 2)).norm() <= 1e-12);
  CHECK((b1 - Matrix::Identity(2, 2)).norm() <= 1e-12);

  oracle::Rng rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    const int d = rng.integer(1, 4);
    const Matrix a = oracle::random_matrix(rng, d, d);
    const auto mo = BridgeModel::create(a, Matrix::Identity(d, d), 1.0);
    const double t = rng.uniform(0.0, 0.99);
    const auto [f, b] = martingale_factor(mo, t);
    CHECK((f * b - Matrix::Identity(d, d)).norm() <= 1e-9);
  }
  CHECK_THROWS_AS(martingale_factor(scalar_model(0.5), 1.0), DomainError);
}

TEST_CASE("martingale covariance accumulates over subintervals", "[bridgecore]") {
  const auto mo = scalar_model(0.25);
  double e1 = 0, e2 = 0, e3 = 0;
  const Matrix whole = martingale_covariance(mo, 0.0, 0.8, &e1);
  const Matrix left = martingale_covariance(mo, 0.0, 0.35, &e2);
  const Matrix right = martingale_covariance(mo, 0.35, 0.8, &e3);
  CHECK((whole - left - right).norm() <= 1e-10 * (1.0 + whole.norm()));
  // Scalar reference: d<M>/ds = (1-s)^{-2a}.
  CHECK(whole(0, 0) == Approx(oracle::scalar_qvar(0.25, 1.0, 0.8)).epsilon(1e-10));
  CHECK_THROWS_AS(martingale_covariance(mo, 0.5, 0.4, nullptr), InvalidInput);
}
