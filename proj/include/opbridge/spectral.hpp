#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "opbridge/errors.hpp"
#include "opbridge/matfun.hpp"

namespace opbridge {
namespace detail {

// Diagonal block layout of a real quasi-triangular (Schur form) matrix:
// start index and size (1 or 2) of each block, plus the eigenvalue real part.
struct SchurBlock {
  int start;
  int size;
  double real_part;
};

inline std::vector<SchurBlock> schur_blocks(const Matrix& s) {
  std::vector<SchurBlock> blocks;
  const int n = static_cast<int>(s.rows());
  int i = 0;
  while (i < n) {
    if (i + 1 < n && s(i + 1, i) != 0.0) {
      blocks.push_back({i, 2, 0.5 * (s(i, i) + s(i + 1, i + 1))});
      i += 2;
    } else {
      blocks.push_back({i, 1, s(i, i)});
      i += 1;
    }
  }
  return blocks;
}

// Solve the small Sylvester equation T11 X - X T22 = C by vectorizing to a
// Kronecker system; block sizes are at most 2 so the system is at most 4x4.
inline Matrix sylvester_small(const Matrix& t11, const Matrix& t22, const Matrix& c) {
  const int p = static_cast<int>(t11.rows());
  const int q = static_cast<int>(t22.rows());
  Matrix k = Matrix::Zero(p * q, p * q);
  // vec(T11 X) = (I_q kron T11) vec(X); vec(X T22) = (T22^T kron I_p) vec(X)
  for (int j = 0; j < q; ++j)
    k.block(j * p, j * p, p, p) += t11;
  for (int j = 0; j < q; ++j)
    for (int l = 0; l < q; ++l)
      k.block(j * p, l * p, p, p).diagonal().array() -= t22(l, j);
  Eigen::VectorXd rhs(p * q);
  for (int j = 0; j < q; ++j) rhs.segment(j * p, p) = c.col(j);
  Eigen::FullPivLU<Matrix> lu(k);
  if (!lu.isInvertible())
    throw DecompositionUnstable(
        "spectral: adjacent Schur blocks share eigenvalues; cannot reorder (increase grouping_tol)");
  Eigen::VectorXd x = lu.solve(rhs);
  Matrix out(p, q);
  for (int j = 0; j < q; ++j) out.col(j) = x.segment(j * p, p);
  return out;
}

// Swap two adjacent diagonal blocks of a real Schur form by an orthogonal
// similarity (direct-swap method). s and q are updated in place.
inline void swap_adjacent_blocks(Matrix& s, Matrix& q, int start, int p1, int p2) {
  const int n = p1 + p2;
  const Matrix t11 = s.block(start, start, p1, p1);
  const Matrix t22 = s.block(start + p1, start + p1, p2, p2);
  const Matrix t12 = s.block(start, start + p1, p1, p2);
  // Columns of [X; I] span the invariant subspace of the trailing block:
  // T11 X - X T22 = -T12.
  const Matrix x = sylvester_small(t11, t22, -t12);
  Matrix span(n, p2);
  span.topRows(p1) = x;
  span.bottomRows(p2) = Matrix::Identity(p2, p2);
  Eigen::HouseholderQR<Matrix> qr(span);
  const Matrix z = qr.householderQ();

  s.middleRows(start, n) = z.transpose() * s.middleRows(start, n);
  s.middleCols(start, n) = s.middleCols(start, n) * z;
  q.middleCols(start, n) = q.middleCols(start, n) * z;

  // The trailing block of the transformed window is upper triangular up to
  // roundoff; clear the entries that are structurally zero.
  s.block(start + p2, start, p1, p2).setZero();
  if (p2 == 2 && std::abs(s(start + 1, start)) < 1e-14 * (1.0 + std::abs(s(start, start))))
    s(start + 1, start) = 0.0;
  if (p1 == 2) {
    const int t = start + p2;
    if (std::abs(s(t + 1, t)) < 1e-14 * (1.0 + std::abs(s(t, t)))) s(t + 1, t) = 0.0;
  }
}

// Chain-merge sorted real parts into clusters separated by gaps larger than
// tol. Returns cluster id per input index (inputs given unsorted).
inline std::vector<int> cluster_by_real_part(const std::vector<double>& parts, double tol,
                                             std::vector<double>* centers = nullptr) {
  std::vector<int> order(parts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return parts[a] < parts[b]; });
  std::vector<int> cluster(parts.size(), 0);
  int c = 0;
  double lo = parts[order[0]], hi = parts[order[0]];
  std::vector<double> cs;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = parts[order[k]];
    if (k > 0 && v - parts[order[k - 1]] > tol) {
      cs.push_back(0.5 * (lo + hi));
      lo = v;
      ++c;
    }
    hi = v;
    cluster[order[k]] = c;
  }
  cs.push_back(0.5 * (lo + hi));
  if (centers) *centers = cs;
  return cluster;
}

// Solve T11 Y - Y T22 = C for quasi-upper-triangular T11 (p x p) and
// T22 (q x q) by block back-substitution over the diagonal blocks
// (the dense-matrix analogue of LAPACK's quasi-triangular Sylvester solve).
inline Matrix sylvester_quasitriangular(const Matrix& t11, const Matrix& t22, const Matrix& c) {
  const std::vector<SchurBlock> rows = schur_blocks(t11);
  const std::vector<SchurBlock> cols = schur_blocks(t22);
  Matrix y = Matrix::Zero(t11.rows(), t22.rows());
  // Column blocks left to right; within a column, row blocks bottom to top.
  for (const auto& cb : cols) {
    for (auto rit = rows.rbegin(); rit != rows.rend(); ++rit) {
      const auto& rb = *rit;
      Matrix rhs = c.block(rb.start, cb.start, rb.size, cb.size);
      // already-solved row blocks below in this column
      const int below = rb.start + rb.size;
      if (below < t11.rows())
        rhs -= t11.block(rb.start, below, rb.size, t11.rows() - below) *
               y.block(below, cb.start, t11.rows() - below, cb.size);
      // already-solved column blocks to the left of this one
      if (cb.start > 0)
        rhs += y.block(rb.start, 0, rb.size, cb.start) * t22.block(0, cb.start, cb.start, cb.size);
      y.block(rb.start, cb.start, rb.size, cb.size) =
          sylvester_small(t11.block(rb.start, rb.start, rb.size, rb.size),
                          t22.block(cb.start, cb.start, cb.size, cb.size), rhs);
    }
  }
  return y;
}

}  // namespace detail

// Primary decomposition of a drift matrix by distinct eigenvalue real parts:
// an invertible basis P with P^{-1} A P = A_1 (+) ... (+) A_p, blocks ordered
// by increasing real part, together with the diffusion projected into the
// same coordinates.
struct SpectralDecomposition {
  std::vector<double> real_parts;            // a_1 < ... < a_p
  std::vector<int> block_dims;               // d_1, ..., d_p
  Matrix basis;                              // P
  Matrix basis_inverse;                      // P^{-1}
  std::vector<Matrix> blocks;                // A_j, d_j x d_j
  std::vector<Matrix> projected_diffusions;  // Sigma_j, d_j x m
  double grouping_tol = 0.0;

  int block_count() const { return static_cast<int>(blocks.size()); }
  int block_offset(int j) const {
    int off = 0;
    for (int k = 0; k < j; ++k) off += block_dims[k];
    return off;
  }
  int dim() const { return static_cast<int>(basis.rows()); }
};

// One spectral component of a path: the coordinates of the projection onto
// the j-th invariant subspace, expressed in the adapted basis.
struct ComponentView {
  int block_index = 0;
  std::vector<double> times;
  Matrix values;  // n_times x d_j
};

inline SpectralDecomposition decompose(const Matrix& a, const Matrix& sigma, double grouping_tol) {
  require_square_finite(a, "decompose");
  if (!sigma.allFinite() || sigma.rows() != a.rows())
    throw InvalidInput("decompose: diffusion must be finite with one row per state dimension");
  if (!(grouping_tol >= 0.0)) throw InvalidInput("decompose: grouping_tol must be >= 0");
  const int d = static_cast<int>(a.rows());

  Eigen::RealSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success)
    throw NumericalFailure("decompose: Schur factorization did not converge");
  Matrix s = schur.matrixT();
  Matrix q = schur.matrixU();

  // Cluster block real parts, then bubble blocks into cluster order with
  // orthogonal swaps. Swaps only ever cross cluster boundaries, so the
  // eigenvalue gap of every swap exceeds grouping_tol.
  auto blocks = detail::schur_blocks(s);
  std::vector<double> parts(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) parts[i] = blocks[i].real_part;
  std::vector<double> centers;
  std::vector<int> cluster = detail::cluster_by_real_part(parts, grouping_tol, &centers);

  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t i = 0; i + 1 < blocks.size(); ++i) {
      if (cluster[i] > cluster[i + 1]) {
        detail::swap_adjacent_blocks(s, q, blocks[i].start, blocks[i].size, blocks[i + 1].size);
        std::swap(cluster[i], cluster[i + 1]);
        const int sz_left = blocks[i + 1].size;
        blocks[i + 1].start = blocks[i].start + sz_left;
        std::swap(blocks[i].size, blocks[i + 1].size);
        moved = true;
      }
    }
  }

  const int p = static_cast<int>(centers.size());
  std::vector<int> dims(p, 0);
  for (std::size_t i = 0; i < blocks.size(); ++i) dims[cluster[i]] += blocks[i].size;

  SpectralDecomposition dec;
  dec.grouping_tol = grouping_tol;
  dec.real_parts = centers;
  dec.block_dims = dims;

  if (p == 1) {
    // Single real part: keep the original coordinates, no transform at all.
    dec.basis = Matrix::Identity(d, d);
    dec.basis_inverse = Matrix::Identity(d, d);
    dec.blocks = {a};
    dec.projected_diffusions = {sigma};
    return dec;
  }

  // Zero the coupling between clusters with nested Sylvester solves,
  // accumulating the unit upper-triangular similarity W and its inverse.
  Matrix w = Matrix::Identity(d, d);
  Matrix winv = Matrix::Identity(d, d);
  int off = 0;
  for (int j = 0; j + 1 < p; ++j) {
    const int dj = dims[j];
    const int rest = d - off - dj;
    const Matrix t11 = s.block(off, off, dj, dj);
    const Matrix t22 = s.block(off + dj, off + dj, rest, rest);
    const Matrix c = -s.block(off, off + dj, dj, rest);
    const Matrix y = detail::sylvester_quasitriangular(t11, t22, c);
    Matrix f = Matrix::Identity(d, d);
    f.block(off, off + dj, dj, rest) = y;
    Matrix finv = Matrix::Identity(d, d);
    finv.block(off, off + dj, dj, rest) = -y;
    // s <- f^{-1} s f, applied blockwise
    s.block(off, off + dj, dj, rest).setZero();
    w = w * f;
    winv = finv * winv;
    off += dj;
  }

  dec.basis = q * w;
  dec.basis_inverse = winv * q.transpose();

  const Eigen::JacobiSVD<Matrix> svd(dec.basis);
  const double cond = svd.singularValues()(0) / svd.singularValues()(d - 1);
  if (!(cond < 1e12))
    throw DecompositionUnstable(
        "decompose: basis condition number " + std::to_string(cond) +
        " exceeds 1e12; real parts are too close to separate (increase grouping_tol)");

  const Matrix projected_sigma = dec.basis_inverse * sigma;
  off = 0;
  for (int j = 0; j < p; ++j) {
    dec.blocks.push_back(s.block(off, off, dims[j], dims[j]));
    dec.projected_diffusions.push_back(projected_sigma.middleRows(off, dims[j]));
    off += dims[j];
  }
  return dec;
}

inline SpectralDecomposition decompose(const Matrix& a, const Matrix& sigma) {
  return decompose(a, sigma, default_grouping_tol(a));
}

// Per-block operator powers (r^{A_1}, ..., r^{A_p}).
inline std::vector<Matrix> project_power(const SpectralDecomposition& dec, double r) {
  std::vector<Matrix> out;
  out.reserve(dec.blocks.size());
  for (const auto& b : dec.blocks) out.push_back(op_power(b, r));
  return out;
}

// Split a path (n_times x d, rows are states) into per-block coordinate views
// in the adapted basis. Mapping the concatenated views back through the basis
// reproduces the path.
inline std::vector<ComponentView> project_path(const SpectralDecomposition& dec,
                                               const std::vector<double>& times, const Matrix& path) {
  if (path.cols() != dec.dim())
    throw InvalidInput("project_path: path entries have dimension " + std::to_string(path.cols()) +
                       ", expected " + std::to_string(dec.dim()));
  if (!times.empty() && static_cast<Eigen::Index>(times.size()) != path.rows())
    throw InvalidInput("project_path: time grid and path length differ");
  const Matrix adapted = path * dec.basis_inverse.transpose();  // rows are P^{-1} x
  std::vector<ComponentView> views;
  int off = 0;
  for (int j = 0; j < dec.block_count(); ++j) {
    ComponentView v;
    v.block_index = j;
    v.times = times;
    v.values = adapted.middleCols(off, dec.block_dims[j]);
    views.push_back(std::move(v));
    off += dec.block_dims[j];
  }
  return views;
}

}  // namespace opbridge
