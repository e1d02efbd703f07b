#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "opbridge/errors.hpp"

namespace opbridge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_square_finite(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw InvalidInput(std::string(who) + ": matrix must be square, got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  if (!all_finite(m))
    throw InvalidInput(std::string(who) + ": matrix has non-finite entries");
}

namespace detail {

// Pade approximants for the matrix exponential, evaluated as in Higham's
// scaling-and-squaring method. Coefficient tables for degrees 3..13 and the
// 1-norm thresholds below which each degree meets double-precision backward
// error.
inline void pade_uv(const Matrix& a, const std::vector<double>& b, Matrix& u, Matrix& v) {
  const auto d = a.rows();
  const Matrix a2 = a * a;
  Matrix even = Matrix::Identity(d, d) * b[0];
  Matrix odd = Matrix::Identity(d, d) * b[1];
  Matrix pw = Matrix::Identity(d, d);
  for (std::size_t k = 2; k + 1 < b.size(); k += 2) {
    pw = pw * a2;
    even += b[k] * pw;
    odd += b[k + 1] * pw;
  }
  u = a * odd;
  v = even;
}

inline Matrix expm_pade13(const Matrix& a) {
  static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                             1187353796428800.,  129060195264000.,   10559470521600.,
                             670442572800.,      33522128640.,       1323241920.,
                             40840800.,          960960.,            16380.,
                             182.,               1.};
  const auto d = a.rows();
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix i = Matrix::Identity(d, d);
  const Matrix u =
      a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * i);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i;
  return Eigen::PartialPivLU<Matrix>(v - u).solve(v + u);
}

inline Matrix expm_pade_low(const Matrix& a, int degree) {
  static const std::vector<double> b3 = {120., 60., 12., 1.};
  static const std::vector<double> b5 = {30240., 15120., 3360., 420., 30., 1.};
  static const std::vector<double> b7 = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
  static const std::vector<double> b9 = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                                         2162160.,     110880.,     3960.,       90.,        1.};
  const std::vector<double>* b = &b3;
  if (degree == 5) b = &b5;
  if (degree == 7) b = &b7;
  if (degree == 9) b = &b9;
  Matrix u, v;
  pade_uv(a, *b, u, v);
  return Eigen::PartialPivLU<Matrix>(v - u).solve(v + u);
}

}  // namespace detail

// Matrix exponential by scaling-and-squaring with a degree-13 Pade approximant
// (lower degrees for small norms), 1-norm based scaling selection.
inline Matrix expm(const Matrix& m) {
  require_square_finite(m, "expm");
  const double nrm = m.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
  if (nrm <= 1.495585217958292e-2) return detail::expm_pade_low(m, 3);
  if (nrm <= 2.539398330063230e-1) return detail::expm_pade_low(m, 5);
  if (nrm <= 9.504178996162932e-1) return detail::expm_pade_low(m, 7);
  if (nrm <= 2.097847961257068e0) return detail::expm_pade_low(m, 9);
  const double theta13 = 5.371920351148152e0;
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
  Matrix f = detail::expm_pade13(m / std::pow(2.0, s));
  for (int k = 0; k < s; ++k) f = f * f;
  return f;
}

// The exponential operator r^M = exp(M log r), defined for r > 0.
inline Matrix op_power(const Matrix& m, double r) {
  require_square_finite(m, "op_power");
  if (!(r > 0.0) || !std::isfinite(r))
    throw DomainError("op_power: exponent base must be a positive real, got " + std::to_string(r));
  return expm(m * std::log(r));
}

struct EigenSummary {
  Eigen::VectorXcd eigenvalues;  // with algebraic multiplicities, d entries
  std::vector<double> respec;    // distinct real parts, strictly increasing
  double grouping_tol = 0.0;
};

inline double default_grouping_tol(const Matrix& m) {
  return 1e-8 * (1.0 + m.norm());
}

// Eigenvalues via a dense backward-stable solver; real parts within
// grouping_tol of each other are merged into a single entry of respec.
// Merging chains overlapping tolerance intervals, so ties collapse toward
// fewer entries.
inline EigenSummary eigen_summary(const Matrix& m, double grouping_tol) {
  require_square_finite(m, "eigen_summary");
  if (!(grouping_tol >= 0.0)) throw InvalidInput("eigen_summary: grouping_tol must be >= 0");
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw NumericalFailure("eigen_summary: eigensolver did not converge on a " +
                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  EigenSummary s;
  s.eigenvalues = solver.eigenvalues();
  s.grouping_tol = grouping_tol;

  std::vector<double> parts(s.eigenvalues.size());
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) parts[i] = s.eigenvalues[i].real();
  std::sort(parts.begin(), parts.end());
  std::size_t lo = 0;
  for (std::size_t i = 1; i <= parts.size(); ++i) {
    if (i == parts.size() || parts[i] - parts[i - 1] > grouping_tol) {
      s.respec.push_back(0.5 * (parts[lo] + parts[i - 1]));  // cluster midpoint
      lo = i;
    }
  }
  return s;
}

inline EigenSummary eigen_summary(const Matrix& m) { return eigen_summary(m, default_grouping_tol(m)); }

// Limit of t^M as t decreases to 0. Exists (and equals the zero matrix)
// exactly when every eigenvalue of M has positive real part.
inline Matrix op_power_at_zero(const Matrix& m) {
  require_square_finite(m, "op_power_at_zero");
  const EigenSummary s = eigen_summary(m);
  double min_re = s.respec.front();
  if (!(min_re > 0.0)) {
    std::ostringstream msg;
    msg << "op_power_at_zero: limit of t^M as t->0 is undefined; smallest eigenvalue real part is "
        << min_re << " but all real parts must be positive";
    throw DomainError(msg.str());
  }
  return Matrix::Zero(m.rows(), m.cols());
}

}  // namespace opbridge
