#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "opbridge/errors.hpp"
#include "opbridge/matfun.hpp"

namespace opbridge {
namespace quad {

// 15-point Kronrod extension of the 7-point Gauss rule. Nodes are the
// nonnegative abscissae on [-1,1]; even indices are the Kronrod-only points.
inline constexpr double kXgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
inline constexpr double kWgk[8] = {
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502, 0.1406532597155259,
    0.1690047266392679, 0.1903505780647854, 0.2044329400752989, 0.2094821410847278};
inline constexpr double kWg[4] = {
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189, 0.4179591836734694};

struct Panel {
  double a, b;
  Matrix value;
  double error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

// One Gauss-Kronrod pass over [a,b]. The error estimate is the norm of the
// difference between the embedded 7-point Gauss value and the 15-point
// Kronrod value, which overestimates the Kronrod error for smooth integrands.
template <class F>
Panel gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  Matrix fc = f(c);
  Matrix resk = kWgk[7] * fc;
  Matrix resg = kWg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const Matrix flo = f(c - h * kXgk[i]);
    const Matrix fhi = f(c + h * kXgk[i]);
    resk += kWgk[i] * (flo + fhi);
    if (i % 2 == 1) resg += kWg[i / 2] * (flo + fhi);
  }
  Panel p;
  p.a = a;
  p.b = b;
  p.value = h * resk;
  p.error = h * (resk - resg).cwiseAbs().maxCoeff();
  return p;
}

}  // namespace quad

struct QuadratureResult {
  Matrix value;
  double error_estimate = 0.0;  // per-entry bound (max-abs across entries)
  int panels = 0;
  bool converged = true;
};

struct QuadratureOptions {
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  int max_panels = 4000;
  bool throw_on_failure = true;
};

// Globally adaptive Gauss-Kronrod integration of a matrix-valued function:
// the panel with the largest error estimate is bisected until the summed
// estimate meets max(abs_tol, rel_tol * |result|_max).
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  QuadratureResult out;
  if (b < a) throw InvalidInput("integrate_adaptive: interval is reversed");
  if (a == b) {
    out.value = f(a);  // probe for shape only
    out.value.setZero();
    return out;
  }
  std::priority_queue<quad::Panel> panels;
  panels.push(quad::gk15(f, a, b));
  Matrix total = panels.top().value;
  double err = panels.top().error;
  int count = 1;
  while (true) {
    const double target = std::max(opt.abs_tol, opt.rel_tol * total.cwiseAbs().maxCoeff());
    if (err <= target || count >= opt.max_panels) break;
    quad::Panel worst = panels.top();
    panels.pop();
    total -= worst.value;
    err -= worst.error;
    const double mid = 0.5 * (worst.a + worst.b);
    quad::Panel left = quad::gk15(f, worst.a, mid);
    quad::Panel right = quad::gk15(f, mid, worst.b);
    total += left.value + right.value;
    err += left.error + right.error;
    panels.push(std::move(left));
    panels.push(std::move(right));
    ++count;
  }
  // Re-sum panels in queue order for a deterministic, cancellation-free total.
  Matrix sum = Matrix::Zero(total.rows(), total.cols());
  double esum = 0.0;
  while (!panels.empty()) {
    sum += panels.top().value;
    esum += panels.top().error;
    panels.pop();
  }
  out.value = sum;
  out.error_estimate = esum;
  out.panels = count;
  const double target = std::max(opt.abs_tol, opt.rel_tol * sum.cwiseAbs().maxCoeff());
  out.converged = esum <= target;
  if (!out.converged && opt.throw_on_failure)
    throw NumericalFailure("integrate_adaptive: after " + std::to_string(count) +
                           " panels the error estimate " + std::to_string(esum) +
                           " still exceeds the target " + std::to_string(target));
  return out;
}

// Scalar convenience wrapper.
template <class F>
QuadratureResult integrate_scalar(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  auto wrap = [&f](double x) {
    Matrix m(1, 1);
    m(0, 0) = f(x);
    return m;
  };
  return integrate_adaptive(wrap, a, b, opt);
}

}  // namespace opbridge
