#ifndef CONVBIAS_DYNAMICS_HPP
#define CONVBIAS_DYNAMICS_HPP

// Closed-form X-hinge dynamics of Model-Conv-k, the limit directions of the
// weights, and the Monte-Carlo estimator of the asymptotic error.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "convbias/error.hpp"
#include "convbias/linalg.hpp"
#include "convbias/matrix.hpp"
#include "convbias/models.hpp"
#include "convbias/parallel.hpp"
#include "convbias/rng.hpp"
#include "convbias/shift.hpp"
#include "convbias/stats.hpp"
#include "convbias/tasks.hpp"

namespace convbias {

inline constexpr double kGrowthCeiling = 1e290;
inline constexpr std::size_t kDefaultDegenerateDraws = 64;
inline constexpr double kZeroMarginTol = 1e-12;

struct ClosedFormStep {
  std::size_t t = 0;
  Vector lambda_plus;   // (1 + a s_i)^t + (1 - a s_i)^t
  Vector lambda_minus;  // (1 + a s_i)^t - (1 - a s_i)^t
  Vector w1;
  Vector w2;
};

/// Largest t for which (1 + alpha * sigma_1)^t stays below 1e290.
inline long long max_closed_form_step(double alpha, double sigma1) {
  const double growth = std::log1p(alpha * sigma1);
  if (growth <= 0.0) return std::numeric_limits<long long>::max();
  return static_cast<long long>(std::floor(std::log(kGrowthCeiling) / growth));
}

/// Weights after t X-hinge steps from (w1_0, w2_0), using a given SVD of M_tr.
inline ClosedFormStep closed_form_weights(std::span<const double> w1_0,
                                          std::span<const double> w2_0,
                                          const SpectralDecomposition& svd, double alpha,
                                          std::size_t t) {
  const std::size_t k = svd.V.rows();
  const std::size_t d = svd.U.rows();
  if (w1_0.size() != k || w2_0.size() != d) {
    throw ShapeError("closed_form_weights: initial weights do not match M_tr");
  }
  if (!(alpha > 0.0)) throw DomainError("closed_form_weights: alpha must be > 0");
  const long long cap = max_closed_form_step(alpha, svd.sigma[0]);
  if (static_cast<long long>(t) > cap) {
    throw OverflowError("closed_form_weights: (1 + alpha*sigma_1)^t overflows", cap);
  }

  ClosedFormStep out;
  out.t = t;
  out.lambda_plus.resize(k);
  out.lambda_minus.resize(k);
  const double td = static_cast<double>(t);
  for (std::size_t i = 0; i < k; ++i) {
    const double up = std::pow(1.0 + alpha * svd.sigma[i], td);
    const double down = std::pow(1.0 - alpha * svd.sigma[i], td);
    out.lambda_plus[i] = up + down;
    out.lambda_minus[i] = up - down;
  }

  const Vector vt_w1 = transpose_times(svd.V, w1_0);  // V^T w1_0
  const Vector ut_w2 = transpose_times(svd.U, w2_0);  // U^T w2_0
  Vector a(k), b(k);
  for (std::size_t i = 0; i < k; ++i) {
    a[i] = 0.5 * (out.lambda_plus[i] * vt_w1[i] + out.lambda_minus[i] * ut_w2[i]);
    b[i] = 0.5 * (out.lambda_minus[i] * vt_w1[i] + out.lambda_plus[i] * ut_w2[i]) - ut_w2[i];
  }
  out.w1 = svd.V * std::span<const double>(a);
  // U (b) + w2_0, where b already carries the -U^T w2_0 correction.
  out.w2 = svd.U * std::span<const double>(b);
  for (std::size_t i = 0; i < d; ++i) out.w2[i] += w2_0[i];
  return out;
}

inline ClosedFormStep closed_form_weights(std::span<const double> w1_0,
                                          std::span<const double> w2_0,
                                          const AveragedShiftMatrix& mtr, double alpha,
                                          std::size_t t) {
  return closed_form_weights(w1_0, w2_0, thin_svd(mtr.M), alpha, t);
}

struct AsymptoticWeights {
  Vector w1_inf;  // V_:m V_:m^T w1_0
  Vector w2_inf;  // U_:m V_:m^T w1_0
  std::size_t m = 1;
};

inline AsymptoticWeights asymptotic_weights(std::span<const double> w1_0,
                                            const SpectralDecomposition& svd) {
  const std::size_t k = svd.V.rows();
  if (w1_0.size() != k) throw ShapeError("asymptotic_weights: w1_0 must have length k");
  const std::size_t m = svd.m;
  Vector proj(m, 0.0);  // V_:m^T w1_0
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < k; ++r) proj[c] += svd.V(r, c) * w1_0[r];

  AsymptoticWeights aw{Vector(k, 0.0), Vector(svd.U.rows(), 0.0), m};
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < k; ++r) aw.w1_inf[r] += svd.V(r, c) * proj[c];
    for (std::size_t r = 0; r < svd.U.rows(); ++r) aw.w2_inf[r] += svd.U(r, c) * proj[c];
  }
  return aw;
}

/// Limit directions of the X-hinge iterates started from (w1_0, 0).
inline AsymptoticWeights asymptotic_weights(std::span<const double> w1_0,
                                            const AveragedShiftMatrix& mtr,
                                            double rel_tol = kDefaultMultiplicityTol) {
  if (mtr.is_zero || all_zero(mtr.M)) throw ZeroMatrixError("asymptotic_weights: M_tr is zero");
  return asymptotic_weights(w1_0, thin_svd(mtr.M, rel_tol));
}

/// filter^T M_{x,y}^T out = y * sum_e x_e sum_j filter_j out_{pos(e) - j}.
inline double bilinear_margin(const DataPoint& p, std::span<const double> filter,
                              std::span<const double> out) {
  double s = 0.0;
  for (const Entry& e : p.support) {
    double c = 0.0;
    for (std::size_t j = 0; j < filter.size() && j <= e.pos; ++j) c += filter[j] * out[e.pos - j];
    s += e.value * c;
  }
  return p.y * s;
}

/// y f_{w_inf}(x).
inline double asym_margin(const DataPoint& p, const AsymptoticWeights& aw, std::size_t k) {
  if (aw.w1_inf.size() != k || aw.w2_inf.size() != p.dim()) {
    throw ShapeError("asym_margin: weight shapes do not match");
  }
  return bilinear_margin(p, aw.w1_inf, aw.w2_inf);
}

/// Margin error with structural zeros snapped: |margin| below
/// 1e-12 * |filter| |out| |x|_1 counts as an exact tie.
inline double snapped_margin_error(double margin, double filter_norm, double out_norm,
                                   double x_l1) {
  if (std::abs(margin) <= kZeroMarginTol * filter_norm * out_norm * x_l1) return 0.5;
  return margin_error(margin);
}

inline double l1_norm(const DataPoint& p) {
  double s = 0.0;
  for (const Entry& e : p.support) s += std::abs(e.value);
  return s;
}

/// Whole-dataset error of the conv model with weights (filter, out), using
/// the snapped zero test.
inline double bilinear_error(std::span<const DataPoint> pts, std::span<const double> filter,
                             std::span<const double> out) {
  const double fn = norm2(filter);
  const double on = norm2(out);
  double s = 0.0;
  for (const DataPoint& p : pts) {
    s += snapped_margin_error(bilinear_margin(p, filter, out), fn, on, l1_norm(p));
  }
  return s / static_cast<double>(pts.size());
}

/// Outcome for one fixed training set.
struct AsymTrialResult {
  double error = 0.0;
  bool degenerate = false;  // m > 1
  std::size_t m = 1;
};

/// Asymptotic whole-dataset error for a fixed M_tr. With a simple top
/// singular value the sign-fixed pair (u, v) is used directly; otherwise the
/// error is averaged over `w1_draws` Gaussian initial filters.
inline AsymTrialResult asym_error_for(const Dataset& whole, const AveragedShiftMatrix& mtr,
                                      double rel_tol, std::size_t w1_draws, Rng& rng,
                                      double b = 0.1) {
  const SpectralDecomposition svd = thin_svd(mtr.M, rel_tol);
  AsymTrialResult r;
  r.m = svd.m;
  if (svd.m == 1) {
    const SpectralDecomposition fixed = fix_top_pair_sign(svd);
    r.error = bilinear_error(whole.points, fixed.top_v(), fixed.top_u());
    return r;
  }
  r.degenerate = true;
  if (w1_draws == 0) throw ConfigError("degenerate branch needs at least one w1 draw");
  const std::size_t k = mtr.k();
  double acc = 0.0;
  for (std::size_t s = 0; s < w1_draws; ++s) {
    Vector w1(k);
    for (double& x : w1) x = rng.normal(b);
    const AsymptoticWeights aw = asymptotic_weights(w1, svd);
    acc += bilinear_error(whole.points, aw.w1_inf, aw.w2_inf);
  }
  r.error = acc / static_cast<double>(w1_draws);
  return r;
}

struct AsymErrorEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double degenerate_fraction = 0.0;
  std::size_t zero_resamples = 0;
  std::vector<double> trial_errors;
};

/// Monte-Carlo estimate of the asymptotic conv error over random training
/// sets of size n. Trial i draws from its own stream seeded by
/// derive_seed(base, "asym", n, i) where base comes from `rng`.
inline AsymErrorEstimate asym_error_estimate(const Dataset& whole, std::size_t n, std::size_t k,
                                             std::size_t trials, double rel_tol, Rng& rng,
                                             std::size_t w1_draws = kDefaultDegenerateDraws) {
  if (trials == 0) throw ConfigError("asym_error_estimate: trials must be >= 1");
  check_filter_size(whole.d, k);
  const std::uint64_t base = rng.fork();

  std::vector<AsymTrialResult> results(trials);
  std::vector<std::size_t> resamples(trials, 0);
  parallel_for(trials, [&](std::size_t i) {
    Rng trial_rng(derive_seed(base, "asym", n, i));
    for (;;) {
      const TrainingSet tr = sample_training_set(whole, n, trial_rng);
      const AveragedShiftMatrix mtr = build_Mtr(tr, k);
      if (mtr.is_zero) {
        ++resamples[i];
        if (resamples[i] > 10000) throw NumericalFailure("M_tr is zero on every resample");
        continue;
      }
      results[i] = asym_error_for(whole, mtr, rel_tol, w1_draws, trial_rng);
      break;
    }
  });

  AsymErrorEstimate est;
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    est.trial_errors.push_back(results[i].error);
    degenerate += results[i].degenerate ? 1 : 0;
    est.zero_resamples += resamples[i];
  }
  const MeanSE ms = mean_se(est.trial_errors);
  est.mean = ms.mean;
  est.std_error = ms.se;
  est.degenerate_fraction = static_cast<double>(degenerate) / static_cast<double>(trials);
  return est;
}

}  // namespace convbias

#endif  // CONVBIAS_DYNAMICS_HPP
