#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "opbridge/errors.hpp"
#include "opbridge/grids.hpp"
#include "opbridge/matfun.hpp"
#include "opbridge/quadrature.hpp"

namespace opbridge {
namespace detail {

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a_matrix(const Matrix& m, std::uint64_t h) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      h = fnv1a_bytes(&v, sizeof v, h);
    }
  return h;
}

}  // namespace detail

// The process dX_t = -(T-t)^{-1} A X_t dt + Sigma dB_t started at X_0 = 0.
// A is dimensionless; Sigma carries units of state per sqrt(time).
struct BridgeModel {
  Matrix A;      // d x d drift scaling
  Matrix Sigma;  // d x m diffusion
  double T = 1.0;
  int d = 0;
  int m = 0;
  int sigma_rank = 0;     // from singular values, tol 1e-10 * largest
  EigenSummary spectrum;  // eigenvalues of A and clustered real parts

  static BridgeModel create(const Matrix& a, const Matrix& sigma, double horizon,
                            double grouping_tol = -1.0) {
    require_square_finite(a, "BridgeModel");
    if (!std::isfinite(horizon) || !(horizon > 0.0))
      throw InvalidInput("BridgeModel: terminal time must be positive and finite");
    if (sigma.rows() != a.rows())
      throw InvalidInput("BridgeModel: diffusion has " + std::to_string(sigma.rows()) +
                         " rows, expected " + std::to_string(a.rows()));
    if (sigma.cols() < 1) throw InvalidInput("BridgeModel: diffusion needs at least one column");
    if (!sigma.allFinite()) throw InvalidInput("BridgeModel: diffusion must be finite");

    BridgeModel mo;
    mo.A = a;
    mo.Sigma = sigma;
    mo.T = horizon;
    mo.d = static_cast<int>(a.rows());
    mo.m = static_cast<int>(sigma.cols());
    const Eigen::JacobiSVD<Matrix> svd(sigma);
    const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    mo.sigma_rank = static_cast<int>(
        (svd.singularValues().array() > 1e-10 * smax).count());
    if (smax == 0.0) mo.sigma_rank = 0;
    mo.spectrum = grouping_tol < 0.0 ? eigen_summary(a) : eigen_summary(a, grouping_tol);
    return mo;
  }

  double min_real_part() const { return spectrum.respec.front(); }
  double max_real_part() const { return spectrum.respec.back(); }
  bool respec_positive() const { return min_real_part() > 0.0; }
  bool full_rank_noise() const { return sigma_rank == d; }

  // Skew part relative to the scale of A; zero for the no-bridge rotation class.
  double symmetric_part_norm() const { return 0.5 * (A + A.transpose()).norm(); }
  bool skew_symmetric() const { return symmetric_part_norm() <= 1e-12 * (1.0 + A.norm()); }

  std::uint64_t hash() const {
    std::uint64_t h = detail::fnv1a_bytes(&T, sizeof T);
    h = detail::fnv1a_bytes(&d, sizeof d, h);
    h = detail::fnv1a_bytes(&m, sizeof m, h);
    h = detail::fnv1a_matrix(A, h);
    h = detail::fnv1a_matrix(Sigma, h);
    return h;
  }
};

namespace detail {

inline QuadratureOptions covariance_quad_options() {
  QuadratureOptions o;
  o.abs_tol = 1e-30;  // effectively off: scale-free relative control below
  o.rel_tol = 1e-12;
  o.max_panels = 6000;
  return o;
}

inline void require_time_in_horizon(double t, double horizon, const char* who) {
  if (!std::isfinite(t) || t < 0.0 || t >= horizon)
    throw DomainError(std::string(who) + ": time " + std::to_string(t) +
                      " outside [0, " + std::to_string(horizon) + ")");
}

}  // namespace detail

// Integral of (T-s)^{-A} Sigma Sigma^T (T-s)^{-A^T} over s in [from, to], the
// covariance gained by the martingale representation between the two times.
// Evaluated in u = -log(T-s), where the integrand is e^{Au} SS^T e^{A^T u} e^{-u}:
// smooth, and a pure exponential near the terminal time.
inline Matrix martingale_covariance(const BridgeModel& mo, double from, double to,
                                    double* err_out = nullptr) {
  detail::require_time_in_horizon(from, mo.T, "martingale_covariance");
  detail::require_time_in_horizon(to, mo.T, "martingale_covariance");
  if (to < from)
    throw InvalidInput("martingale_covariance: interval reversed");
  if (err_out) *err_out = 0.0;
  if (to == from) return Matrix::Zero(mo.d, mo.d);
  const double u0 = -std::log(mo.T - from);
  const double u1 = -std::log(mo.T - to);
  const auto f = [&](double u) {
    const Matrix w = expm((u * mo.A).eval()) * mo.Sigma;
    return Matrix((w * w.transpose()) * std::exp(-u));
  };
  const QuadratureResult r = integrate_adaptive(f, u0, u1, detail::covariance_quad_options());
  if (err_out) *err_out = r.error_estimate;
  return 0.5 * (r.value + r.value.transpose());
}

// Covariance of the state at a single time:
//   U(t) = integral over s in [0,t] of ((T-t)/(T-s))^A SS^T ((T-t)/(T-s))^{A^T} ds.
// The integrand is formed as W W^T with W = ratio^A Sigma so every quadrature
// panel is symmetric PSD. For t beyond 0.9 T the substitution u = -log(T-s)
// spreads the terminal concentration of mass over an O(|log(T-t)|) interval.
inline Matrix covariance_at(const BridgeModel& mo, double t, double* err_out = nullptr) {
  detail::require_time_in_horizon(t, mo.T, "covariance");
  if (err_out) *err_out = 0.0;
  if (t == 0.0) return Matrix::Zero(mo.d, mo.d);
  const double tail = mo.T - t;
  QuadratureResult r;
  if (t <= 0.9 * mo.T) {
    const auto f = [&](double s) {
      const Matrix w = op_power(mo.A, tail / (mo.T - s)) * mo.Sigma;
      return Matrix(w * w.transpose());
    };
    r = integrate_adaptive(f, 0.0, t, detail::covariance_quad_options());
  } else {
    const double u0 = -std::log(mo.T);
    const double u1 = -std::log(tail);
    const auto f = [&](double u) {
      const Matrix w = op_power(mo.A, tail * std::exp(u)) * mo.Sigma;
      return Matrix((w * w.transpose()) * std::exp(-u));
    };
    r = integrate_adaptive(f, u0, u1, detail::covariance_quad_options());
  }
  if (err_out) *err_out = r.error_estimate;
  return 0.5 * (r.value + r.value.transpose());
}

// Covariance curve on a grid. Each U(t) is symmetric PSD; U(0) = 0.
struct CovarianceReport {
  std::vector<double> times;
  std::vector<Matrix> matrices;
  std::vector<double> quad_error;
};

inline CovarianceReport covariance(const BridgeModel& mo, const std::vector<double>& times) {
  if (times.empty()) throw InvalidInput("covariance: empty time grid");
  for (std::size_t k = 0; k < times.size(); ++k) {
    detail::require_time_in_horizon(times[k], mo.T, "covariance");
    if (k > 0 && !(times[k] > times[k - 1]))
      throw InvalidInput("covariance: time grid must be strictly increasing");
  }
  CovarianceReport rep;
  rep.times = times;
  rep.matrices.resize(times.size());
  rep.quad_error.resize(times.size());
  for (std::size_t k = 0; k < times.size(); ++k)
    rep.matrices[k] = covariance_at(mo, times[k], &rep.quad_error[k]);
  return rep;
}

// E[X_s X_t^T] = (T-s)^A [martingale covariance up to min(s,t)] (T-t)^{A^T}.
inline Matrix cross_covariance(const BridgeModel& mo, double s, double t) {
  detail::require_time_in_horizon(s, mo.T, "cross_covariance");
  detail::require_time_in_horizon(t, mo.T, "cross_covariance");
  const double lo = std::min(s, t);
  if (lo == 0.0) return Matrix::Zero(mo.d, mo.d);
  const Matrix g = martingale_covariance(mo, 0.0, lo);
  return op_power(mo.A, mo.T - s) * g * op_power(mo.A, mo.T - t).transpose();
}

// Accumulated variance of one martingale coordinate, with the flag from the
// spectral dichotomy: bounded when all real parts sit in (0, 1/2); divergent
// when all sit in (1/2, inf) and the noise has full rank; otherwise (boundary
// real parts, mixed clusters, rank deficiency) undetermined.
struct QuadVarCurve {
  enum class Divergence { bounded, divergent, undetermined };
  int coordinate = 1;  // 1-based
  std::vector<double> times;
  std::vector<double> values;
  Divergence divergence_flag = Divergence::undetermined;
};

inline const char* to_string(QuadVarCurve::Divergence f) {
  switch (f) {
    case QuadVarCurve::Divergence::bounded: return "bounded";
    case QuadVarCurve::Divergence::divergent: return "divergent";
    default: return "undetermined";
  }
}

inline QuadVarCurve quadratic_variation(const BridgeModel& mo, int i,
                                        const std::vector<double>& times) {
  if (i < 1 || i > mo.d)
    throw InvalidInput("quadratic_variation: coordinate " + std::to_string(i) +
                       " outside 1.." + std::to_string(mo.d));
  if (times.empty()) throw InvalidInput("quadratic_variation: empty time grid");
  for (std::size_t k = 0; k < times.size(); ++k) {
    detail::require_time_in_horizon(times[k], mo.T, "quadratic_variation");
    if (k > 0 && !(times[k] > times[k - 1]))
      throw InvalidInput("quadratic_variation: time grid must be strictly increasing");
  }

  QuadVarCurve curve;
  curve.coordinate = i;
  curve.times = times;
  curve.values.resize(times.size());

  const auto f = [&](double u) {
    const Matrix row = expm((u * mo.A).eval()).row(i - 1) * mo.Sigma;
    return row.squaredNorm() * std::exp(-u);
  };
  // Incremental accumulation keeps the curve exactly nondecreasing: each
  // increment is an integral of a nonnegative function with positive weights.
  double acc = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (t > prev) {
      const double u0 = -std::log(mo.T - prev);
      const double u1 = -std::log(mo.T - t);
      acc += integrate_scalar(f, u0, u1, detail::covariance_quad_options()).value(0, 0);
    }
    curve.values[k] = acc;
    prev = t;
  }

  const double tol = mo.spectrum.grouping_tol;
  const double lo = mo.min_real_part();
  const double hi = mo.max_real_part();
  if (lo > tol && hi < 0.5 - tol)
    curve.divergence_flag = QuadVarCurve::Divergence::bounded;
  else if (lo > 0.5 + tol && mo.full_rank_noise())
    curve.divergence_flag = QuadVarCurve::Divergence::divergent;
  else
    curve.divergence_flag = QuadVarCurve::Divergence::undetermined;
  return curve;
}

// Central difference of U against the Lyapunov-type right-hand side
//   U'(t) = -(A U(t) + U(t) A^T)/(T-t) + Sigma Sigma^T.
// Returns the residual matrix; callers assert smallness.
inline Matrix covariance_ode_residual(const BridgeModel& mo, double t, double h) {
  detail::require_time_in_horizon(t, mo.T, "covariance_ode_residual");
  if (!(h > 0.0) || !(h < std::min(t, mo.T - t) / 4.0))
    throw PreconditionError("covariance_ode_residual: need 0 < h < min(t, T-t)/4");
  const Matrix up = covariance_at(mo, t + h);
  const Matrix dn = covariance_at(mo, t - h);
  const Matrix u = covariance_at(mo, t);
  const Matrix lhs = (up - dn) / (2.0 * h);
  const Matrix rhs =
      -(mo.A * u + u * mo.A.transpose()) / (mo.T - t) + mo.Sigma * mo.Sigma.transpose();
  return lhs - rhs;
}

// The pair ((T-t)^A, (T-t)^{-A}) linking the state to its driving martingale.
inline std::pair<Matrix, Matrix> martingale_factor(const BridgeModel& mo, double t) {
  detail::require_time_in_horizon(t, mo.T, "martingale_factor");
  const double q = mo.T - t;
  return {op_power(mo.A, q), expm((-std::log(q) * mo.A).eval())};
}

}  // namespace opbridge
