#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "opbridge/bridgecore.hpp"
#include "opbridge/errors.hpp"
#include "opbridge/matfun.hpp"
#include "opbridge/rng.hpp"

namespace opbridge {
namespace detail {

// OPBRIDGE_THREADS overrides the worker count; it changes speed, never output,
// because every path owns a counter-based stream keyed by its index.
inline int worker_count(int njobs) {
  int n = 0;
  if (const char* s = std::getenv("OPBRIDGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end != s && v >= 1 && v <= 1024) n = static_cast<int>(v);
  }
  if (n == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    n = hw ? static_cast<int>(hw) : 1;
  }
  return std::max(1, std::min(n, njobs));
}

template <class F>
inline void parallel_for(int njobs, F&& body) {
  const int workers = worker_count(njobs);
  if (workers <= 1) {
    for (int i = 0; i < njobs; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < njobs; i = next.fetch_add(1)) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        next.store(njobs);
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline void require_sample_grid(const BridgeModel& mo, const std::vector<double>& times,
                                const char* who) {
  if (times.empty()) throw InvalidInput(std::string(who) + ": empty time grid");
  if (times.front() != 0.0)
    throw InvalidInput(std::string(who) +
                       ": time grid must start at 0 so paths honor the zero initial condition");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw InvalidInput(std::string(who) + ": time grid must be strictly increasing");
  if (!(times.back() < mo.T))
    throw DomainError(std::string(who) +
                      ": grid touches the terminal time; sample on [0, T) and pin the "
                      "endpoint with append_terminal_zero");
}

// Symmetric PSD square-root factor; tiny negative eigenvalues from quadrature
// roundoff are clipped at zero, genuine ones are an error.
inline Matrix psd_factor(const Matrix& h, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success)
    throw NumericalFailure(std::string(who) + ": eigen-factorization did not converge");
  Vector lam = es.eigenvalues();
  const double scale = lam.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < -1e-12 * scale)
      throw NumericalFailure(std::string(who) + ": increment covariance has eigenvalue " +
                             std::to_string(lam(i)) + " beyond the roundoff allowance");
    lam(i) = std::max(lam(i), 0.0);
  }
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace detail

struct PathEnsemble {
  enum class Scheme { exact, euler };

  std::uint64_t model_hash = 0;
  Scheme scheme = Scheme::exact;
  std::vector<double> times;  // grid in [0, T]; last equals T only after pinning
  std::vector<Matrix> paths;  // one (n_times x d) matrix per path
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> per_path_seeds;  // stream id = path index
  bool terminal_pinned = false;
  std::string note;

  int n_paths() const { return static_cast<int>(paths.size()); }
  int n_times() const { return static_cast<int>(times.size()); }
  int dim() const { return paths.empty() ? 0 : static_cast<int>(paths[0].cols()); }
};

inline const char* to_string(PathEnsemble::Scheme s) {
  return s == PathEnsemble::Scheme::exact ? "exact" : "euler";
}

// Exact-in-distribution sampling through the martingale representation:
// each step adds a Gaussian increment with the true integrated covariance,
// and the state is recovered as X_t = (T-t)^A M_t. Marginals match the
// analytic covariance U(t) at every grid time regardless of step size.
inline PathEnsemble sample_exact(const BridgeModel& mo, const std::vector<double>& times,
                                 int n_paths, std::uint64_t master_seed) {
  detail::require_sample_grid(mo, times, "sample_exact");
  if (n_paths < 1) throw InvalidInput("sample_exact: need at least one path");
  const int n = static_cast<int>(times.size());
  const int d = mo.d;

  std::vector<Matrix> state_factor(n);
  for (int k = 0; k < n; ++k) state_factor[k] = op_power(mo.A, mo.T - times[k]);
  std::vector<Matrix> incr_factor(std::max(0, n - 1));
  for (int k = 0; k + 1 < n; ++k)
    incr_factor[k] =
        detail::psd_factor(martingale_covariance(mo, times[k], times[k + 1]), "sample_exact");

  PathEnsemble ens;
  ens.model_hash = mo.hash();
  ens.scheme = PathEnsemble::Scheme::exact;
  ens.times = times;
  ens.master_seed = master_seed;
  ens.per_path_seeds.resize(n_paths);
  for (int p = 0; p < n_paths; ++p) ens.per_path_seeds[p] = static_cast<std::uint64_t>(p);
  ens.paths.resize(n_paths);

  detail::parallel_for(n_paths, [&](int p) {
    Philox4x32 eng(master_seed, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> normal;
    Matrix path(n, d);
    path.row(0).setZero();
    Vector mart = Vector::Zero(d);
    Vector xi(d);
    for (int k = 0; k + 1 < n; ++k) {
      for (int i = 0; i < d; ++i) xi(i) = normal(eng);
      mart += incr_factor[k] * xi;
      path.row(k + 1) = (state_factor[k + 1] * mart).transpose();
    }
    ens.paths[p] = std::move(path);
  });
  return ens;
}

// Explicit first-order time stepping of the SDE itself, drift evaluated at the
// left endpoint. Carries O(max step) bias that grows toward the terminal time.
inline PathEnsemble sample_euler(const BridgeModel& mo, const std::vector<double>& times,
                                 int n_paths, std::uint64_t master_seed) {
  detail::require_sample_grid(mo, times, "sample_euler");
  if (n_paths < 1) throw InvalidInput("sample_euler: need at least one path");
  const int n = static_cast<int>(times.size());
  const int d = mo.d;
  const int m = mo.m;

  double max_step = 0.0;
  for (int k = 0; k + 1 < n; ++k) max_step = std::max(max_step, times[k + 1] - times[k]);

  PathEnsemble ens;
  ens.model_hash = mo.hash();
  ens.scheme = PathEnsemble::Scheme::euler;
  ens.times = times;
  ens.master_seed = master_seed;
  ens.per_path_seeds.resize(n_paths);
  for (int p = 0; p < n_paths; ++p) ens.per_path_seeds[p] = static_cast<std::uint64_t>(p);
  ens.paths.resize(n_paths);
  ens.note = "first-order scheme: expect O(max step) bias growing toward the terminal time";
  if (n > 1 && max_step > (mo.T - times.back()) / 10.0)
    ens.note += "; warning: max step " + std::to_string(max_step) +
                " exceeds (T - last time)/10 = " + std::to_string((mo.T - times.back()) / 10.0);

  detail::parallel_for(n_paths, [&](int p) {
    Philox4x32 eng(master_seed, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> normal;
    Matrix path(n, d);
    path.row(0).setZero();
    Vector x = Vector::Zero(d);
    Vector zeta(m);
    for (int k = 0; k + 1 < n; ++k) {
      const double dt = times[k + 1] - times[k];
      const double sq = std::sqrt(dt);
      for (int i = 0; i < m; ++i) zeta(i) = normal(eng);
      x += -(dt / (mo.T - times[k])) * (mo.A * x) + mo.Sigma * (sq * zeta);
      path.row(k + 1) = x.transpose();
    }
    ens.paths[p] = std::move(path);
  });
  return ens;
}

// Append the known terminal value 0 at t = T. Only meaningful when the state
// actually converges there, i.e. all eigenvalue real parts of A are positive
// and the noise has full rank; otherwise refused.
inline PathEnsemble append_terminal_zero(const PathEnsemble& ens, const BridgeModel& mo) {
  if (ens.model_hash != mo.hash())
    throw InvalidInput("append_terminal_zero: ensemble was generated from a different model");
  if (!mo.respec_positive() || !mo.full_rank_noise())
    throw PreconditionError(
        "append_terminal_zero: terminal pinning needs the bridge property — every eigenvalue "
        "real part of A positive (smallest here: " +
        std::to_string(mo.min_real_part()) + ") and full-rank noise (rank " +
        std::to_string(mo.sigma_rank) + " of " + std::to_string(mo.d) +
        "); without both the state need not converge to 0 at the terminal time");
  if (ens.terminal_pinned) return ens;
  PathEnsemble out = ens;
  out.terminal_pinned = true;
  out.times.push_back(mo.T);
  const int n = static_cast<int>(out.times.size());
  for (auto& path : out.paths) {
    path.conservativeResize(n, Eigen::NoChange);
    path.row(n - 1).setZero();
  }
  return out;
}

}  // namespace opbridge
