#ifndef CONVBIAS_SHIFT_HPP
#define CONVBIAS_SHIFT_HPP

#include <cstddef>
#include <span>

#include "convbias/error.hpp"
#include "convbias/matrix.hpp"
#include "convbias/tasks.hpp"

namespace convbias {

/// M_tr together with the sample count it averages over.
struct AveragedShiftMatrix {
  Matrix M;  // d x k
  std::size_t n_tr = 0;
  bool is_zero = false;

  std::size_t d() const { return M.rows(); }
  std::size_t k() const { return M.cols(); }
};

inline void check_filter_size(std::size_t d, std::size_t k) {
  if (k < 1 || k > d) throw ShapeError("filter size k must satisfy 1 <= k <= d");
}

/// A_x: column j holds x shifted left by j with zero padding,
/// entry (i, j) = x[i + j].
inline Matrix build_Ax(std::span<const double> x, std::size_t k) {
  const std::size_t d = x.size();
  check_filter_size(d, k);
  Matrix a(d, k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i + j < d; ++i) a(i, j) = x[i + j];
  return a;
}

/// M_{x,y} = y * A_x.
inline Matrix build_Mxy(const DataPoint& p, std::size_t k) {
  Matrix a = build_Ax(p.x, k);
  if (p.y < 0) a *= -1.0;
  return a;
}

/// Average of M_{x,y} over the training multiset.
inline AveragedShiftMatrix build_Mtr(const TrainingSet& tr, std::size_t k) {
  if (tr.points.empty()) throw ContractViolation("build_Mtr: empty training set");
  const std::size_t d = tr.d;
  check_filter_size(d, k);
  Matrix sum(d, k);
  for (const DataPoint& p : tr.points) {
    const double y = static_cast<double>(p.y);
    for (const Entry& e : p.support)
      for (std::size_t j = 0; j < k && j <= e.pos; ++j) sum(e.pos - j, j) += y * e.value;
  }
  const double n = static_cast<double>(tr.points.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) sum(i, j) /= n;
  const bool zero = all_zero(sum);
  return {std::move(sum), tr.points.size(), zero};
}

inline bool is_nonnegative(const Matrix& m) {
  for (double v : m.data())
    if (v < 0.0) return false;
  return true;
}

}  // namespace convbias

#endif  // CONVBIAS_SHIFT_HPP
