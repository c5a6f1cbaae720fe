#ifndef CONVBIAS_LINALG_HPP
#define CONVBIAS_LINALG_HPP

// Small dense kernels: cyclic Jacobi eigensolver, thin SVD through the Gram
// matrix, and the reachability checks behind primitivity/irreducibility.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "convbias/error.hpp"
#include "convbias/matrix.hpp"

namespace convbias {

inline constexpr double kDefaultMultiplicityTol = 1e-9;
inline constexpr double kZeroSingularValueTol = 1e-12;
inline constexpr std::size_t kMaxJacobiSize = 64;

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
};

struct SpectralDecomposition {
  Matrix U;      // d x k, orthonormal columns
  Vector sigma;  // descending, >= 0
  Matrix V;      // k x k, orthogonal
  std::size_t m = 1;
  double rel_tol = kDefaultMultiplicityTol;

  Vector top_u() const { return U.col(0); }
  Vector top_v() const { return V.col(0); }
};

namespace detail {

inline void require_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(who) + ": matrix must be square");
  }
}

inline void require_nonnegative(const Matrix& a, const char* who) {
  for (double v : a.data()) {
    if (v < 0.0 || std::isnan(v)) {
      throw ContractViolation(std::string(who) + ": entries must be non-negative");
    }
  }
}

// Orthogonalise `x` against the first `ncols` columns of `q` (two passes of
// modified Gram-Schmidt) and return the residual norm.
inline double orthogonalize_against(Vector& x, const Matrix& q, std::size_t ncols) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < ncols; ++j) {
      double proj = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) proj += q(i, j) * x[i];
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= proj * q(i, j);
    }
  }
  return norm2(x);
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order with orthonormal eigenvectors
/// as the matching columns. Throws ContractViolation if `s` is not symmetric
/// to 1e-12 (relative to its largest entry) and NumericalFailure if the
/// off-diagonal mass does not vanish within the sweep budget.
inline EigenDecomposition jacobi_eigh(const Matrix& s) {
  detail::require_square(s, "jacobi_eigh");
  const std::size_t k = s.rows();
  if (k > kMaxJacobiSize) throw ShapeError("jacobi_eigh: size exceeds 64");

  const double scale = std::max(1.0, max_abs(s));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-12 * scale) {
        throw ContractViolation("jacobi_eigh: matrix is not symmetric");
      }

  Matrix a = s;
  // Symmetrise exactly so rotations keep a symmetric working copy.
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double avg = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = avg;
      a(j, i) = avg;
    }
  Matrix v = Matrix::identity(k);

  const double norm = frobenius_norm(a);
  constexpr int kMaxSweeps = 100;
  bool converged = (norm == 0.0);
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = p + 1; q < k; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * norm) {
      converged = true;
      break;
    }
    bool rotated = false;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Below rounding level relative to both diagonal entries: drop it.
        if (std::abs(apq) < 1e-18 * (std::abs(app) + std::abs(aqq))) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        rotated = true;
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t r = 0; r < k; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - sn * arq;
          a(r, q) = sn * arp + c * arq;
        }
        for (std::size_t r = 0; r < k; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - sn * aqr;
          a(q, r) = sn * apr + c * aqr;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - sn * vrq;
          v(r, q) = sn * vrp + c * vrq;
        }
      }
    }
    if (!rotated) converged = true;
  }
  if (!converged) {
    throw NumericalFailure("jacobi_eigh: no convergence within sweep budget");
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(k), Matrix(k, k)};
  for (std::size_t c = 0; c < k; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < k; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

/// Number of leading singular values within rel_tol * sigma_1 of sigma_1.
inline std::size_t top_multiplicity(const Vector& sigma, double rel_tol) {
  std::size_t m = 1;
  while (m < sigma.size() && sigma[0] - sigma[m] <= rel_tol * sigma[0]) ++m;
  return m;
}

/// Thin SVD of a tall d x k matrix through the eigendecomposition of M^T M.
///
/// sigma_i is taken as |M v_i| and u_i = M v_i / sigma_i. Left vectors for
/// singular values at or below 1e-12 * sigma_1 are replaced by an orthonormal
/// completion of the range complement and their sigma is reported as 0.
inline SpectralDecomposition thin_svd(const Matrix& m,
                                      double rel_tol = kDefaultMultiplicityTol) {
  const std::size_t d = m.rows();
  const std::size_t k = m.cols();
  if (d < k) throw ShapeError("thin_svd: requires rows >= cols");
  if (all_zero(m)) throw ZeroMatrixError("thin_svd: matrix is identically zero");
  if (!(rel_tol >= 0.0)) throw DomainError("thin_svd: rel_tol must be >= 0");

  const EigenDecomposition eig = jacobi_eigh(gram(m));

  // Singular values from the image norms; re-sort since rounding can swap
  // nearly tied entries relative to the eigenvalue order.
  std::vector<Vector> images(k);
  Vector sig(k);
  for (std::size_t i = 0; i < k; ++i) {
    images[i] = m * eig.vectors.col(i);
    sig[i] = norm2(images[i]);
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });

  SpectralDecomposition out{Matrix(d, k), Vector(k), Matrix(k, k), 1, rel_tol};
  for (std::size_t c = 0; c < k; ++c) {
    out.sigma[c] = sig[order[c]];
    for (std::size_t r = 0; r < k; ++r) out.V(r, c) = eig.vectors(r, order[c]);
  }

  const double sigma1 = out.sigma[0];
  std::vector<std::size_t> to_complete;
  for (std::size_t c = 0; c < k; ++c) {
    if (out.sigma[c] <= kZeroSingularValueTol * sigma1) {
      out.sigma[c] = 0.0;
      to_complete.push_back(c);
      continue;
    }
    Vector u = images[order[c]];
    for (double& x : u) x /= out.sigma[c];
    // Columns before c are already orthonormal; clean up rounding drift.
    const double r = detail::orthogonalize_against(u, out.U, c);
    for (double& x : u) x /= r;
    out.U.set_col(c, u);
  }

  // Completion: pick, each time, the standard basis vector with the largest
  // component outside the current span.
  for (std::size_t c : to_complete) {
    Vector best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < d; ++e) {
      Vector x(d, 0.0);
      x[e] = 1.0;
      // Zero columns (not yet filled) contribute nothing to the projection.
      const double r = detail::orthogonalize_against(x, out.U, k);
      if (r > best_norm) {
        best_norm = r;
        best = std::move(x);
      }
      if (best_norm > 0.9) break;
    }
    for (double& x : best) x /= best_norm;
    out.U.set_col(c, best);
  }

  out.m = top_multiplicity(out.sigma, rel_tol);
  return out;
}

/// Jointly flip the unique top singular pair so that sum(v) >= 0; when the
/// sum is zero the first nonzero entry of v is made positive.
inline SpectralDecomposition fix_top_pair_sign(SpectralDecomposition dec) {
  if (dec.m != 1) {
    throw MultiplicityError("fix_top_pair_sign: top singular value is not simple");
  }
  const std::size_t k = dec.V.rows();
  double sum = 0.0;
  double l1 = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    sum += dec.V(j, 0);
    l1 += std::abs(dec.V(j, 0));
  }
  bool flip = false;
  if (std::abs(sum) > 1e-12 * l1) {
    flip = sum < 0.0;
  } else {
    for (std::size_t j = 0; j < k; ++j) {
      const double vj = dec.V(j, 0);
      if (std::abs(vj) > 1e-12 * l1) {
        flip = vj < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (std::size_t j = 0; j < k; ++j) dec.V(j, 0) = -dec.V(j, 0);
    for (std::size_t i = 0; i < dec.U.rows(); ++i) dec.U(i, 0) = -dec.U(i, 0);
  }
  return dec;
}

namespace detail {

// Row bitmasks of the support pattern (entry > 0).
inline std::vector<std::uint64_t> support_rows(const Matrix& a) {
  const std::size_t k = a.rows();
  std::vector<std::uint64_t> rows(k, 0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (a(i, j) > 0.0) rows[i] |= (std::uint64_t{1} << j);
  return rows;
}

}  // namespace detail

/// True iff some power A^t with t <= (k-1)^2 + 1 is entrywise positive.
/// Powers are taken on the boolean support pattern.
inline bool is_primitive_bruteforce(const Matrix& a) {
  detail::require_square(a, "is_primitive_bruteforce");
  detail::require_nonnegative(a, "is_primitive_bruteforce");
  const std::size_t k = a.rows();
  if (k > kMaxJacobiSize) throw ShapeError("is_primitive_bruteforce: size exceeds 64");

  const auto base = detail::support_rows(a);
  const std::uint64_t full =
      (k == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << k) - 1);
  auto power = base;
  const std::size_t wielandt = (k - 1) * (k - 1) + 1;
  for (std::size_t t = 1;; ++t) {
    if (std::all_of(power.begin(), power.end(),
                    [full](std::uint64_t r) { return r == full; })) {
      return true;
    }
    if (t == wielandt) return false;
    std::vector<std::uint64_t> next(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
      std::uint64_t row = power[i];
      while (row) {
        const int j = std::countr_zero(row);
        next[i] |= base[static_cast<std::size_t>(j)];
        row &= row - 1;
      }
    }
    power = std::move(next);
  }
}

/// Strong connectivity of the support graph (edge i -> j when A_ij > 0).
/// A 1x1 matrix counts as irreducible only with a positive entry, so that
/// "every (i, j) is reached by some power" holds for all sizes.
inline bool is_irreducible(const Matrix& a) {
  detail::require_square(a, "is_irreducible");
  detail::require_nonnegative(a, "is_irreducible");
  const std::size_t k = a.rows();
  if (k == 1) return a(0, 0) > 0.0;

  auto reaches_all = [&](bool reversed) {
    std::vector<char> seen(k, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < k; ++j) {
        const double w = reversed ? a(j, i) : a(i, j);
        if (w > 0.0 && !seen[j]) {
          seen[j] = 1;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == k;
  };
  return reaches_all(false) && reaches_all(true);
}

}  // namespace convbias

#endif  // CONVBIAS_LINALG_HPP
