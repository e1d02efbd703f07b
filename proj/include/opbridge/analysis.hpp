#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "opbridge/bridgecore.hpp"
#include "opbridge/errors.hpp"
#include "opbridge/matfun.hpp"
#include "opbridge/sampler.hpp"
#include "opbridge/spectral.hpp"

namespace opbridge {

// ---------------------------------------------------------------------------
// Small statistical helpers shared by the diagnostics.

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw InvalidInput("fit_line: need at least 3 matched points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericalFailure("fit_line: degenerate abscissae, slope undetermined");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ssr += r * r;
  }
  f.slope_stderr = std::sqrt(ssr / (n - 2.0) / sxx);
  return f;
}

struct CovarianceEstimate {
  Matrix cov;            // sample covariance (mean subtracted)
  Matrix entry_stderr;   // per-entry standard error of the estimator
  int n = 0;
};

inline CovarianceEstimate empirical_covariance(const PathEnsemble& ens, int time_index) {
  if (time_index < 0 || time_index >= ens.n_times())
    throw InvalidInput("empirical_covariance: time index out of range");
  const int n = ens.n_paths();
  const int d = ens.dim();
  if (n < 2) throw InvalidInput("empirical_covariance: need at least two paths");
  Vector mean = Vector::Zero(d);
  for (const auto& p : ens.paths) mean += p.row(time_index).transpose();
  mean /= n;
  Matrix s = Matrix::Zero(d, d);
  for (const auto& p : ens.paths) {
    const Vector c = p.row(time_index).transpose() - mean;
    s += c * c.transpose();
  }
  s /= (n - 1);
  CovarianceEstimate est;
  est.cov = s;
  est.n = n;
  // Gaussian estimator noise: Var(s_ij) ~ (s_ii s_jj + s_ij^2)/n.
  est.entry_stderr.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      est.entry_stderr(i, j) = std::sqrt((s(i, i) * s(j, j) + s(i, j) * s(i, j)) / n);
  return est;
}

inline std::vector<double> mean_squared_norms(const PathEnsemble& ens) {
  std::vector<double> v(ens.n_times(), 0.0);
  for (const auto& p : ens.paths)
    for (int k = 0; k < ens.n_times(); ++k) v[k] += p.row(k).squaredNorm();
  for (auto& x : v) x /= std::max(1, ens.n_paths());
  return v;
}

// ---------------------------------------------------------------------------
// Bridge-property classification.

struct ClassificationReport {
  std::vector<double> respec;
  int sigma_rank = 0;
  std::string verdict;  // bridge | not-guaranteed | counterexample-class
  std::string rule;
  std::vector<std::string> notes;
};

inline ClassificationReport classify(const BridgeModel& mo) {
  ClassificationReport r;
  r.respec = mo.spectrum.respec;
  r.sigma_rank = mo.sigma_rank;
  const bool positive = mo.respec_positive();
  const bool full = mo.full_rank_noise();
  if (positive && full) {
    r.verdict = "bridge";
    r.rule =
        "all eigenvalue real parts of A are positive and the noise has full rank, which forces "
        "the state to 0 at the terminal time";
    if (mo.max_real_part() < 0.5)
      r.notes.push_back(
          "all real parts lie in (0, 1/2): the driving martingale has bounded variance and a "
          "normal terminal limit");
  } else if (mo.skew_symmetric()) {
    r.verdict = "counterexample-class";
    r.rule =
        "A is skew-symmetric: the drift only rotates, the state matches an unscaled Brownian "
        "motion in law, and no terminal convergence can occur";
    r.notes.push_back("all eigenvalue real parts are zero");
  } else {
    r.verdict = "not-guaranteed";
    r.rule =
        "the sufficient condition (positive eigenvalue real parts and full-rank noise) is not "
        "met; terminal convergence is undecided by the implemented rule";
    if (positive && !full) {
      if (mo.max_real_part() < 0.5)
        r.notes.push_back(
            "all real parts lie in (0, 1/2): full-rank noise is only needed when a real part "
            "reaches 1/2 or above, so the terminal limit still exists; the verdict stays "
            "conservative because the implemented rule requires full rank");
      else
        r.notes.push_back(
            "noise rank " + std::to_string(mo.sigma_rank) + " < " + std::to_string(mo.d) +
            " with a real part at or above 1/2: convergence depends on how noise feeds the "
            "slowest directions");
    }
    if (!positive)
      r.notes.push_back("smallest eigenvalue real part is " + std::to_string(mo.min_real_part()) +
                        "; a nonpositive real part leaves some direction undamped");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo convergence diagnostic.

struct ConvergenceReport {
  std::vector<double> level_times;   // grid times >= T/2
  std::vector<double> mean_sq_norm;  // E|X_t|^2 at those times
  std::vector<double> tail_times;    // subset >= 0.9 T
  std::vector<double> tail_values;
  bool monotone_tail = false;      // nonincreasing over the last 5 tail values
  bool final_below_tenth = false;  // last tail value <= initial level value / 10
  bool converged = false;
  bool m_cov_checked = false;  // only when all real parts sit in (0, 1/2)
  std::vector<double> m_cov_diff;
  bool m_cov_stabilizing = false;
  std::string statement;
  std::vector<std::string> notes;
};

inline ConvergenceReport convergence_diagnostic(const PathEnsemble& ens, const BridgeModel& mo) {
  if (ens.model_hash != mo.hash())
    throw InvalidInput("convergence_diagnostic: ensemble was generated from a different model");
  ConvergenceReport rep;
  rep.statement =
      "almost-sure terminal behaviour is probed through moment proxies: mean squared norms and "
      "covariance scaling on a grid refining toward the terminal time";

  const std::vector<double> v = mean_squared_norms(ens);
  std::vector<int> tail_idx;
  for (int k = 0; k < ens.n_times(); ++k) {
    const double t = ens.times[k];
    if (t >= mo.T && ens.terminal_pinned) continue;  // pinned zeros are not evidence
    if (t >= 0.5 * mo.T) {
      rep.level_times.push_back(t);
      rep.mean_sq_norm.push_back(v[k]);
    }
    if (t >= 0.9 * mo.T && t < mo.T) {
      rep.tail_times.push_back(t);
      rep.tail_values.push_back(v[k]);
      tail_idx.push_back(k);
    }
  }
  if (rep.tail_times.size() < 5)
    throw InsufficientResolution(
        "convergence_diagnostic: need at least 5 grid times at or beyond 0.9 T");

  const std::size_t nt = rep.tail_values.size();
  rep.monotone_tail = true;
  for (std::size_t i = nt - 5; i + 1 < nt; ++i)
    if (rep.tail_values[i + 1] > rep.tail_values[i]) rep.monotone_tail = false;
  rep.final_below_tenth = rep.tail_values.back() <= 0.1 * rep.mean_sq_norm.front();
  rep.converged = rep.monotone_tail && rep.final_below_tenth;

  if (rep.mean_sq_norm.front() == 0.0 && rep.tail_values.back() == 0.0)
    rep.notes.push_back("ensemble is identically zero (no noise): trivially convergent");

  // When every real part sits in (0, 1/2) the rescaled state (T-t)^{-A} X_t
  // has a finite covariance limit; stabilization of its empirical covariance
  // evidences that normal limit.
  const double tol = mo.spectrum.grouping_tol;
  if (mo.respec_positive() && mo.max_real_part() < 0.5 - tol) {
    rep.m_cov_checked = true;
    std::vector<Matrix> covs;
    for (int k : tail_idx) {
      const Matrix back = expm((-std::log(mo.T - ens.times[k]) * mo.A).eval());
      const int n = ens.n_paths();
      Vector mean = Vector::Zero(mo.d);
      std::vector<Vector> ys;
      ys.reserve(n);
      for (const auto& p : ens.paths) {
        ys.push_back(back * p.row(k).transpose());
        mean += ys.back();
      }
      mean /= std::max(1, n);
      Matrix c = Matrix::Zero(mo.d, mo.d);
      for (const auto& y : ys) c += (y - mean) * (y - mean).transpose();
      covs.push_back(c / std::max(1, n - 1));
    }
    for (std::size_t i = 0; i + 1 < covs.size(); ++i)
      rep.m_cov_diff.push_back((covs[i + 1] - covs[i]).norm());
    if (!rep.m_cov_diff.empty()) {
      const double first = rep.m_cov_diff.front();
      const double last = rep.m_cov_diff.back();
      const double floor_ = 1e-6 * (1.0 + covs.back().norm());
      rep.m_cov_stabilizing = last <= 0.5 * first || last <= floor_;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Asymptotic decay exponents per spectral component.

struct DecayReport {
  int block_index = 0;
  double a_j = 0.0;
  double predicted_exponent_norm = 0.0;           // min(a_j, 1/2) for the state norm
  double predicted_exponent_second_moment = 0.0;  // min(2 a_j, 1) for E|X|^2
  double estimated_exponent = 0.0;  // slope of log E|X^[j]_t|^2 against log(T-t)
  double slope_stderr = 0.0;
  std::vector<double> grid_window;
  std::string route;  // analytic | monte-carlo
};

namespace detail {

inline void require_bridge_verdict(const BridgeModel& mo, const char* who) {
  if (!mo.respec_positive() || !mo.full_rank_noise())
    throw PreconditionError(std::string(who) +
                            ": needs the bridge property (all eigenvalue real parts positive, "
                            "full-rank noise)");
}

inline DecayReport decay_report_from(const SpectralDecomposition& dec, int j,
                                     const std::vector<double>& window,
                                     const std::vector<double>& values, const char* route) {
  std::vector<double> x, y;
  for (std::size_t k = 0; k < window.size(); ++k) {
    if (!(values[k] > 0.0))
      throw NumericalFailure("decay_exponent: nonpositive second moment in the regression window");
    x.push_back(std::log(window[k]));  // window stores T - t
    y.push_back(std::log(values[k]));
  }
  const LineFit fit = fit_line(x, y);
  DecayReport rep;
  rep.block_index = j;
  rep.a_j = dec.real_parts[j];
  rep.predicted_exponent_norm = std::min(rep.a_j, 0.5);
  rep.predicted_exponent_second_moment = std::min(2.0 * rep.a_j, 1.0);
  rep.estimated_exponent = fit.slope;
  rep.slope_stderr = fit.slope_stderr;
  rep.route = route;
  return rep;
}

}  // namespace detail

// Analytic route: the exact block covariance trace regressed on log(T-t)
// over the dyadic window t = T(1 - 2^{-k}), k = 7..20 (inside [0.99T, T)).
inline DecayReport decay_exponent(const BridgeModel& mo, int j) {
  detail::require_bridge_verdict(mo, "decay_exponent");
  const SpectralDecomposition dec = decompose(mo.A, mo.Sigma, mo.spectrum.grouping_tol);
  if (j < 0 || j >= dec.block_count())
    throw InvalidInput("decay_exponent: block index " + std::to_string(j) + " outside 0.." +
                       std::to_string(dec.block_count() - 1));
  const BridgeModel block =
      BridgeModel::create(dec.blocks[j], dec.projected_diffusions[j], mo.T);
  std::vector<double> gaps, traces, window;
  for (int k = 7; k <= 20; ++k) {
    const double gap = mo.T * std::ldexp(1.0, -k);
    const double t = mo.T - gap;
    gaps.push_back(gap);
    traces.push_back(covariance_at(block, t).trace());
    window.push_back(t);
  }
  DecayReport rep = detail::decay_report_from(dec, j, gaps, traces, "analytic");
  rep.grid_window = window;
  return rep;
}

// Monte Carlo route: empirical mean squared block norms from an ensemble whose
// grid refines toward T; regression over grid times in [0.99 T, T).
inline DecayReport decay_exponent_mc(const BridgeModel& mo, const PathEnsemble& ens, int j) {
  detail::require_bridge_verdict(mo, "decay_exponent_mc");
  if (ens.model_hash != mo.hash())
    throw InvalidInput("decay_exponent_mc: ensemble was generated from a different model");
  const SpectralDecomposition dec = decompose(mo.A, mo.Sigma, mo.spectrum.grouping_tol);
  if (j < 0 || j >= dec.block_count())
    throw InvalidInput("decay_exponent_mc: block index " + std::to_string(j) + " outside 0.." +
                       std::to_string(dec.block_count() - 1));
  const Matrix rows = dec.basis_inverse.middleRows(dec.block_offset(j), dec.block_dims[j]);

  std::vector<int> idx;
  for (int k = 0; k < ens.n_times(); ++k)
    if (ens.times[k] >= 0.99 * mo.T && ens.times[k] < mo.T) idx.push_back(k);
  if (idx.size() < 5)
    throw InsufficientResolution(
        "decay_exponent_mc: need at least 5 grid times at or beyond 0.99 T");

  std::vector<double> gaps, values, window;
  for (int k : idx) {
    double acc = 0.0;
    for (const auto& p : ens.paths) acc += (rows * p.row(k).transpose()).squaredNorm();
    values.push_back(acc / std::max(1, ens.n_paths()));
    gaps.push_back(mo.T - ens.times[k]);
    window.push_back(ens.times[k]);
  }
  DecayReport rep = detail::decay_report_from(dec, j, gaps, values, "monte-carlo");
  rep.grid_window = window;
  return rep;
}

// ---------------------------------------------------------------------------
// Rescaled-limit probe: behaviour of (T-t)^{-Atilde} X_t under refinement.

struct ProbeReport {
  std::vector<int> levels;  // tau_k = T 2^{-k}
  std::vector<double> taus;
  std::vector<double> median_norms;
  std::string observed;  // to-zero | to-infinity | stabilized | inconclusive
  std::string expected;  // from the real parts of A - Atilde
  bool consistent = false;
  std::string note;
};

inline ProbeReport rescaled_limit_probe(const BridgeModel& mo, const Matrix& atilde,
                                        const PathEnsemble& ens, int max_level = 500) {
  require_square_finite(atilde, "rescaled_limit_probe");
  if (atilde.rows() != mo.d)
    throw InvalidInput("rescaled_limit_probe: dimension mismatch");
  const double comm_scale = 1.0 + mo.A.norm() * atilde.norm();
  if ((mo.A * atilde - atilde * mo.A).norm() > 1e-10 * comm_scale)
    throw PreconditionError("rescaled_limit_probe: A and Atilde must commute");
  const double tol = mo.spectrum.grouping_tol;
  if (!(mo.min_real_part() > 0.0) || !(mo.max_real_part() < 0.5 - tol))
    throw PreconditionError(
        "rescaled_limit_probe: needs every eigenvalue real part of A inside (0, 1/2) so the "
        "driving martingale converges");
  if (ens.model_hash != mo.hash())
    throw InvalidInput("rescaled_limit_probe: ensemble was generated from a different model");
  if (max_level < 2) throw InvalidInput("rescaled_limit_probe: need at least 2 levels");

  // Martingale value per path at each usable grid time.
  std::vector<int> grid_idx;
  for (int k = 0; k < ens.n_times(); ++k)
    if (ens.times[k] < mo.T) grid_idx.push_back(k);
  if (grid_idx.empty()) throw InsufficientResolution("rescaled_limit_probe: no usable grid times");
  const int n = ens.n_paths();
  std::vector<Matrix> mart(grid_idx.size());  // each n x d, rows are paths
  for (std::size_t g = 0; g < grid_idx.size(); ++g) {
    const int k = grid_idx[g];
    const Matrix back = expm((-std::log(mo.T - ens.times[k]) * mo.A).eval());
    Matrix rowvals(n, mo.d);
    for (int p = 0; p < n; ++p)
      rowvals.row(p) = (back * ens.paths[p].row(k).transpose()).transpose();
    mart[g] = std::move(rowvals);
  }

  const Matrix diff = mo.A - atilde;
  ProbeReport rep;
  std::vector<double> norms(n);
  for (int k = 1; k <= max_level; ++k) {
    const double tau = mo.T * std::ldexp(1.0, -k);
    const double t = mo.T - tau;
    // last grid time not exceeding t; beyond the grid the martingale freezes
    std::size_t g = 0;
    while (g + 1 < grid_idx.size() && ens.times[grid_idx[g + 1]] <= t * (1.0 + 1e-14)) ++g;
    const Matrix scale = expm((std::log(tau) * diff).eval());
    for (int p = 0; p < n; ++p) norms[p] = (scale * mart[g].row(p).transpose()).norm();
    std::nth_element(norms.begin(), norms.begin() + n / 2, norms.end());
    rep.levels.push_back(k);
    rep.taus.push_back(tau);
    rep.median_norms.push_back(norms[n / 2]);
  }

  const double first = rep.median_norms.front();
  const double last = rep.median_norms.back();
  if (first > 0.0 && last >= 1e3 * first) {
    rep.observed = "to-infinity";
  } else if (first > 0.0 && last <= 1e-3 * first) {
    rep.observed = "to-zero";
  } else {
    double lo = last, hi = last;
    for (std::size_t i = rep.median_norms.size() / 2; i < rep.median_norms.size(); ++i) {
      lo = std::min(lo, rep.median_norms[i]);
      hi = std::max(hi, rep.median_norms[i]);
    }
    rep.observed = (lo == 0.0 && hi == 0.0) || hi <= 1.05 * lo ? "stabilized" : "inconclusive";
  }

  const EigenSummary ds = eigen_summary(diff);
  const double dtol = ds.grouping_tol;
  if (ds.respec.front() > dtol)
    rep.expected = "to-zero";
  else if (ds.respec.back() < -dtol)
    rep.expected = "to-infinity";
  else if (ds.respec.front() > -dtol && ds.respec.back() < dtol)
    rep.expected = "stabilized";
  else
    rep.expected = "inconclusive";
  rep.consistent = rep.observed == rep.expected;
  rep.note =
      "per-path medians of |(T-t)^{-Atilde} X_t| on a dyadic refinement; beyond the last grid "
      "time the martingale part is frozen at its final value, which is valid because it "
      "converges when all real parts sit in (0, 1/2)";
  return rep;
}

}  // namespace opbridge
