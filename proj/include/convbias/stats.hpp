#ifndef CONVBIAS_STATS_HPP
#define CONVBIAS_STATS_HPP

#include <cmath>
#include <cstddef>
#include <span>

#include "convbias/error.hpp"

namespace convbias {

/// Sample mean with its Monte-Carlo standard error (sd / sqrt(n)).
struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

inline MeanSE mean_se(std::span<const double> xs) {
  MeanSE r;
  r.count = xs.size();
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

/// sqrt(se_a^2 + se_b^2), the standard error of a difference of means.
inline double pooled_se(const MeanSE& a, const MeanSE& b) {
  return std::sqrt(a.se * a.se + b.se * b.se);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ContractViolation("pearson: need two equal-length samples of size >= 2");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace convbias

#endif  // CONVBIAS_STATS_HPP
