#ifndef CONVBIAS_THEORY_HPP
#define CONVBIAS_THEORY_HPP

// Task-Cls calculators: the adjacent-pair primitivity condition, coverage
// probabilities, one-layer error, sample complexity, and the sparse training
// set on which the conv model loses its advantage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "convbias/error.hpp"
#include "convbias/linalg.hpp"
#include "convbias/rng.hpp"
#include "convbias/shift.hpp"
#include "convbias/stats.hpp"
#include "convbias/tasks.hpp"

namespace convbias {

/// Probability estimate with its binomial standard error.
struct ProbabilityEstimate {
  double p = 0.0;
  double se = 0.0;
  std::size_t trials = 0;
};

inline ProbabilityEstimate binomial_estimate(std::size_t hits, std::size_t trials) {
  const double p = static_cast<double>(hits) / static_cast<double>(trials);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(trials)), trials};
}

/// Adjacent-pair condition: some 1-based i with k <= i <= d has both i-1 and
/// i among the training positions. `positions` are 0-based.
inline bool omega_tilde_holds(const std::vector<std::size_t>& positions, std::size_t k,
                              std::size_t d) {
  std::vector<char> present(d, 0);
  for (std::size_t p : positions) {
    if (p >= d) throw ContractViolation("omega_tilde_holds: position outside [1, d]");
    present[p] = 1;
  }
  // 0-based i0 = i - 1 ranges over [max(k-1, 1), d-1].
  for (std::size_t i0 = std::max<std::size_t>(k, 2) - 1; i0 < d; ++i0)
    if (present[i0] && present[i0 - 1]) return true;
  return false;
}

/// Monte Carlo over n i.i.d. uniform positions: fraction of trials where the
/// adjacent-pair condition fails.
inline ProbabilityEstimate estimate_prob_omega_tilde_c(std::size_t d, std::size_t k,
                                                       std::size_t n, std::size_t trials,
                                                       Rng& rng) {
  if (trials < 100) throw ConfigError("estimate_prob_omega_tilde_c: trials must be >= 100");
  check_filter_size(d, k);
  std::size_t misses = 0;
  std::vector<std::size_t> pos(n);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n; ++i) pos[i] = rng.index(d);
    if (!omega_tilde_holds(pos, k, d)) ++misses;
  }
  return binomial_estimate(misses, trials);
}

/// Exact value of the quantity estimated above. The admissible position sets
/// are those with no adjacent pair inside the chain of positions k-1..d; the
/// first k-2 positions are unconstrained. The probability that n uniform
/// draws cover exactly a given s-set is s! S(n, s) / d^n, evaluated with the
/// positive recurrence q(n, s) = (s/d) (q(n-1, s) + q(n-1, s-1)).
inline double prob_omega_tilde_c_exact(std::size_t d, std::size_t k, std::size_t n) {
  check_filter_size(d, k);
  const std::size_t free_count = k >= 2 ? k - 2 : 0;
  const std::size_t chain = d - free_count;
  const std::size_t s_max = free_count + (chain + 1) / 2;

  auto binom = [](std::size_t a, std::size_t b) -> long double {
    if (b > a) return 0.0L;
    return std::exp(std::lgamma(static_cast<long double>(a) + 1) -
                    std::lgamma(static_cast<long double>(b) + 1) -
                    std::lgamma(static_cast<long double>(a - b) + 1));
  };

  std::vector<long double> q(s_max + 1, 0.0L);
  q[0] = 1.0L;
  const long double dd = static_cast<long double>(d);
  for (std::size_t step = 0; step < n; ++step) {
    for (std::size_t s = s_max; s >= 1; --s) {
      q[s] = (static_cast<long double>(s) / dd) * (q[s] + q[s - 1]);
    }
    q[0] = 0.0L;
  }

  long double total = 0.0L;
  for (std::size_t s = 0; s <= s_max; ++s) {
    if (q[s] == 0.0L) continue;
    long double admissible = 0.0L;
    for (std::size_t a = 0; a <= std::min(free_count, s); ++a) {
      const std::size_t j = s - a;  // chosen inside the chain, no two adjacent
      if (j > (chain + 1) / 2) continue;
      admissible += binom(free_count, a) * binom(chain - j + 1, j);
    }
    total += admissible * q[s];
  }
  return static_cast<double>(std::clamp(total, 0.0L, 1.0L));
}

/// (1/2) (1/d) sum_l ((d - k - min{k, l, d-l+1} + 1) / d)^n, negative bases
/// clamped to 0.
inline double coverage_term_exact(std::size_t d, std::size_t k, std::size_t n) {
  check_filter_size(d, k);
  const double dd = static_cast<double>(d);
  double sum = 0.0;
  for (std::size_t l = 1; l <= d; ++l) {
    const double near = static_cast<double>(std::min({k, l, d - l + 1}));
    const double base = std::max(0.0, (dd - static_cast<double>(k) - near + 1.0) / dd);
    sum += std::pow(base, static_cast<double>(n));
  }
  return 0.5 * sum / dd;
}

/// (1/2) ((d - 2k + 1) / d)^n.
inline double coverage_term_approx(std::size_t d, std::size_t k, std::size_t n) {
  if (k < 1 || d + 1 < 2 * k) throw DomainError("coverage_term_approx: needs d >= 2k - 1");
  const double dd = static_cast<double>(d);
  return 0.5 * std::pow((dd - 2.0 * static_cast<double>(k) + 1.0) / dd, static_cast<double>(n));
}

/// (1/2) ((d - 1) / d)^n.
inline double onelayer_error_closed(std::size_t d, std::size_t n) {
  if (d < 1) throw DomainError("onelayer_error_closed: d must be >= 1");
  const double dd = static_cast<double>(d);
  return 0.5 * std::pow((dd - 1.0) / dd, static_cast<double>(n));
}

struct SampleComplexityQuery {
  std::size_t d = 100;
  std::size_t k = 5;
  double epsilon = 0.01;
};

struct SampleComplexity {
  double n_exact = 0.0;        // samples for (1/2)((d-2k+1)/d)^n = epsilon
  double n_limit_per_d = 0.0;  // d -> infinity limit of n / d
};

inline SampleComplexity sample_complexity(const SampleComplexityQuery& q) {
  if (q.k < 1 || q.d + 1 < 2 * q.k + 1) {
    throw DomainError("sample_complexity: needs d - 2k + 1 >= 1");
  }
  if (!(q.epsilon > 0.0) || q.epsilon >= 0.5) {
    throw DomainError("sample_complexity: epsilon must lie in (0, 1/2)");
  }
  const double d = static_cast<double>(q.d);
  const double width = 2.0 * static_cast<double>(q.k) - 1.0;
  const double log_target = std::log(1.0 / (2.0 * q.epsilon));
  SampleComplexity out;
  out.n_exact = log_target / (std::log(d) - std::log(d - width));
  out.n_limit_per_d = log_target / width;
  return out;
}

/// Task-Cls training set with one +1 sample at 1-based positions
/// k, 3k, 5k, ...: all positions >= k and pairwise gaps of 2k.
inline TrainingSet sparse_trainset(std::size_t d, std::size_t k, std::size_t count) {
  check_filter_size(d, k);
  if (count == 0) throw ConfigError("sparse_trainset: count must be >= 1");
  if (k + (count - 1) * 2 * k > d) {
    throw ConfigError("sparse_trainset: k + 2k(n-1) exceeds d");
  }
  std::vector<DataPoint> pts;
  for (std::size_t j = 0; j < count; ++j) {
    pts.push_back(DataPoint::from_entries(d, {{k - 1 + 2 * k * j, 1.0}}, +1));
  }
  TrainingSet tr{d, Task::cls, std::move(pts), {}};
  tr.positions = nonzero_positions(tr.points);
  return tr;
}

struct DecompositionReport {
  ProbabilityEstimate prob_omega_tilde_c;
  double coverage_exact = 0.0;
  double coverage_approx = 0.0;
  double onelayer_error = 0.0;
  double upper_bound_sum = 0.0;  // P(omega_tilde^c) estimate + coverage_exact
};

inline DecompositionReport decomposition_report(std::size_t d, std::size_t k, std::size_t n,
                                           std::size_t trials, Rng& rng) {
  DecompositionReport r;
  r.prob_omega_tilde_c = estimate_prob_omega_tilde_c(d, k, n, trials, rng);
  r.coverage_exact = coverage_term_exact(d, k, n);
  r.coverage_approx = coverage_term_approx(d, k, n);
  r.onelayer_error = onelayer_error_closed(d, n);
  r.upper_bound_sum = r.prob_omega_tilde_c.p + r.coverage_exact;
  return r;
}

/// Direct Monte Carlo of P(M_tr^T M_tr is not primitive) for Task-Cls.
/// Slower than the adjacent-pair proxy but tighter; used for cross-checks.
inline ProbabilityEstimate estimate_prob_not_primitive(std::size_t d, std::size_t k,
                                                       std::size_t n, std::size_t trials,
                                                       Rng& rng) {
  if (trials == 0) throw ConfigError("estimate_prob_not_primitive: trials must be >= 1");
  const Dataset whole = gen_whole_dataset(Task::cls, d);
  std::size_t misses = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const TrainingSet tr = sample_training_set(whole, n, rng);
    if (!is_primitive_bruteforce(gram(build_Mtr(tr, k).M))) ++misses;
  }
  return binomial_estimate(misses, trials);
}

}  // namespace convbias

#endif  // CONVBIAS_THEORY_HPP
