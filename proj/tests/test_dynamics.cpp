#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "convbias/dynamics.hpp"
#include "convbias/theory.hpp"

using namespace convbias;

namespace {

DataPoint unit(std::size_t d, std::size_t pos1, double v, int y) {
  return DataPoint::from_entries(d, {{pos1 - 1, v}}, y);
}

double rel_diff(const Vector& a, const Vector& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0 ? num / den : num;
}

TrainConfig xhinge_plain(double alpha, std::size_t steps) {
  TrainConfig c = TrainConfig::xhinge_defaults();
  c.alpha = alpha;
  c.max_steps = steps;
  c.renormalize = false;
  return c;
}

Vector gaussian(std::size_t n, double sd, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal(sd);
  return v;
}

}  // namespace

TEST(ClosedForm, BaseCase) {
  Rng rng(1);
  const Dataset whole = gen_whole_dataset(Task::cls, 20);
  const TrainingSet tr = sample_training_set(whole, 10, rng);
  const auto mtr = build_Mtr(tr, 4);
  const Vector w1 = gaussian(4, 1.0, rng), w2 = gaussian(20, 1.0, rng);
  const ClosedFormStep s = closed_form_weights(w1, w2, mtr, 0.1, 0);
  for (double v : s.lambda_plus) EXPECT_EQ(v, 2.0);
  for (double v : s.lambda_minus) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.w1[i], w1[i], 1e-14);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(s.w2[i], w2[i], 1e-14);
}

TEST(ClosedForm, SingleStepMatchesGd) {
  Rng rng(2);
  const Dataset whole = gen_whole_dataset(Task::third_ctrl, 12);
  const TrainingSet tr = sample_training_set(whole, 9, rng);
  const auto mtr = build_Mtr(tr, 3);
  const Vector w1 = gaussian(3, 1.0, rng), w2 = gaussian(12, 1.0, rng);
  const ClosedFormStep s = closed_form_weights(w1, w2, mtr, 0.3, 1);
  const auto gd = std::get<ConvWeights>(
      gd_train_from(ConvWeights{w1, w2}, tr, xhinge_plain(0.3, 1), nullptr).final_weights);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.w1[i], gd.w1[i], 1e-14);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(s.w2[i], gd.w2[i], 1e-14);
}

TEST(ClosedForm, HundredStepsClsInstance) {
  Rng rng(3);
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  const TrainingSet tr = sample_training_set(whole, 50, rng);
  const auto mtr = build_Mtr(tr, 5);
  const Vector w1 = gaussian(5, 0.1, rng);
  const Vector w2(100, 0.0);
  const ClosedFormStep s = closed_form_weights(w1, w2, mtr, 0.1, 100);
  const auto gd = std::get<ConvWeights>(
      gd_train_from(ConvWeights{w1, w2}, tr, xhinge_plain(0.1, 100), nullptr).final_weights);
  EXPECT_LE(rel_diff(s.w1, gd.w1), 1e-8);
  EXPECT_LE(rel_diff(s.w2, gd.w2), 1e-8);
}

TEST(ClosedForm, RandomConfigurationsAllTasks) {
  std::mt19937_64 g(4);
  const Task tasks[] = {Task::cls, Task::first_ctrl, Task::third_ctrl, Task::parity};
  for (int c = 0; c < 50; ++c) {
    const Task task = tasks[c % 4];
    const std::size_t d = 2 * std::uniform_int_distribution<std::size_t>(4, 50)(g);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 8)(g);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 100)(g);
    const double alpha = std::uniform_real_distribution<double>(0.01, 0.5)(g);
    Rng rng(g());
    const Dataset whole = gen_whole_dataset(task, d);
    TrainingSet tr = sample_training_set(whole, n, rng);
    auto mtr = build_Mtr(tr, k);
    while (mtr.is_zero) {
      tr = sample_training_set(whole, n, rng);
      mtr = build_Mtr(tr, k);
    }
    const Vector w1 = gaussian(k, 0.1, rng), w2 = gaussian(d, 0.1, rng);
    const auto svd = thin_svd(mtr.M);
    TrainConfig cfg = xhinge_plain(alpha, 100);
    cfg.trace_every = 1;
    Weights w = ConvWeights{w1, w2};
    std::size_t done = 0;
    for (std::size_t t : {1u, 5u, 20u, 100u}) {
      cfg.max_steps = t - done;
      w = gd_train_from(w, tr, cfg, nullptr).final_weights;
      done = t;
      const auto& gw = std::get<ConvWeights>(w);
      const ClosedFormStep s = closed_form_weights(w1, w2, svd, alpha, t);
      ASSERT_LE(rel_diff(s.w1, gw.w1), 1e-8) << "config " << c << " t=" << t;
      ASSERT_LE(rel_diff(s.w2, gw.w2), 1e-8) << "config " << c << " t=" << t;
    }
  }
}

TEST(ClosedForm, OverflowGuard) {
  const Dataset whole = gen_whole_dataset(Task::cls, 10);
  const TrainingSet tr = make_training_set(whole, {unit(10, 5, 1, 1)});
  const auto mtr = build_Mtr(tr, 3);
  const Vector w1{1, 1, 1}, w2(10, 0.0);
  const long long cap = max_closed_form_step(1.0, 1.0);
  EXPECT_EQ(cap, static_cast<long long>(std::floor(std::log(1e290) / std::log(2.0))));
  EXPECT_NO_THROW(closed_form_weights(w1, w2, mtr, 1.0, static_cast<std::size_t>(cap)));
  try {
    closed_form_weights(w1, w2, mtr, 1.0, static_cast<std::size_t>(cap) + 1);
    FAIL() << "expected OverflowError";
  } catch (const OverflowError& e) {
    EXPECT_EQ(e.advised_max_step(), cap);
    EXPECT_EQ(e.kind(), ErrorKind::numerical);
  }
}

TEST(Asymptotic, DiagonalExample) {
  AveragedShiftMatrix m{Matrix{{2, 0}, {0, 1}, {0, 0}}, 1, false};
  const auto aw = asymptotic_weights(Vector{3, 4}, m);
  EXPECT_EQ(aw.m, 1u);
  EXPECT_NEAR(aw.w1_inf[0], 3.0, 1e-14);
  EXPECT_NEAR(aw.w1_inf[1], 0.0, 1e-14);
  EXPECT_NEAR(aw.w2_inf[0], 3.0, 1e-14);
  EXPECT_NEAR(aw.w2_inf[1], 0.0, 1e-14);
  EXPECT_NEAR(aw.w2_inf[2], 0.0, 1e-14);
}

TEST(Asymptotic, OrthogonalGramKeepsFilter) {
  const TrainingSet tr = sparse_trainset(100, 5, 9);
  const auto mtr = build_Mtr(tr, 5);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Vector w1 = gaussian(5, 0.1, rng);
    const auto aw = asymptotic_weights(w1, mtr);
    EXPECT_EQ(aw.m, 5u);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(aw.w1_inf[j], w1[j], 1e-15);
    EXPECT_NEAR(norm2(aw.w1_inf), norm2(aw.w2_inf), 1e-14);
  }
}

TEST(Asymptotic, NormsMatch) {
  Rng rng(6);
  const Dataset whole = gen_whole_dataset(Task::cls, 60);
  for (int i = 0; i < 30; ++i) {
    const TrainingSet tr = sample_training_set(whole, 5 + i, rng);
    const auto mtr = build_Mtr(tr, 4);
    const auto aw = asymptotic_weights(gaussian(4, 1.0, rng), mtr);
    EXPECT_NEAR(norm2(aw.w1_inf), norm2(aw.w2_inf), 1e-12 * (1 + norm2(aw.w1_inf)));
  }
}

TEST(Asymptotic, ZeroMatrix) {
  AveragedShiftMatrix m{Matrix(4, 2), 2, true};
  EXPECT_THROW(asymptotic_weights(Vector{1, 1}, m), ZeroMatrixError);
}

TEST(Asymptotic, IteratesAlignWithLimit) {
  // Find a primitive-Gram Cls instance, then iterate until the next gap
  // ratio ((1 + a s2) / (1 + a s1))^t drops below 1e-8.
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  Rng rng(7);
  const double alpha = 0.1;
  TrainingSet tr;
  SpectralDecomposition svd;
  std::size_t steps = 0;
  for (;;) {
    tr = sample_training_set(whole, 60, rng);
    const auto mtr = build_Mtr(tr, 5);
    if (!is_primitive_bruteforce(gram(mtr.M))) continue;
    svd = thin_svd(mtr.M);
    const double ratio = (1 + alpha * svd.sigma[1]) / (1 + alpha * svd.sigma[0]);
    steps = static_cast<std::size_t>(std::ceil(std::log(1e-8) / std::log(ratio)));
    if (steps <= 20000) break;
  }
  ASSERT_EQ(svd.m, 1u);
  const Vector w1 = gaussian(5, 0.1, rng);
  const auto aw = asymptotic_weights(w1, svd);
  TrainConfig c = TrainConfig::xhinge_defaults();
  c.alpha = alpha;
  c.max_steps = steps;
  const auto w = std::get<ConvWeights>(
      gd_train_from(ConvWeights{w1, Vector(100, 0.0)}, tr, c, nullptr).final_weights);
  const double cosine = dot(w.w2, aw.w2_inf) / (norm2(w.w2) * norm2(aw.w2_inf));
  EXPECT_GE(cosine, 1 - 1e-6);
}

TEST(Asymptotic, DirectionAngleDecreases) {
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  Rng rng(8);
  int checked = 0;
  while (checked < 5) {
    const TrainingSet tr = sample_training_set(whole, 40, rng);
    const auto mtr = build_Mtr(tr, 5);
    if (!is_primitive_bruteforce(gram(mtr.M))) continue;
    ++checked;
    const auto svd = thin_svd(mtr.M);
    const Vector w1 = gaussian(5, 0.1, rng), w2(100, 0.0);
    const auto aw = asymptotic_weights(w1, svd);
    Vector lim = aw.w1_inf;
    lim.insert(lim.end(), aw.w2_inf.begin(), aw.w2_inf.end());
    double prev = 4.0;
    for (std::size_t t = 50; t <= 1000; t += 10) {
      const ClosedFormStep s = closed_form_weights(w1, w2, svd, 0.1, t);
      Vector cur = s.w1;
      cur.insert(cur.end(), s.w2.begin(), s.w2.end());
      const double angle =
          std::acos(std::clamp(dot(cur, lim) / (norm2(cur) * norm2(lim)), -1.0, 1.0));
      EXPECT_LE(angle, prev + 1e-12) << "t=" << t;
      prev = angle;
    }
  }
}

TEST(AsymMargin, Examples) {
  const std::size_t d = 100, k = 5, n = 9;
  const TrainingSet tr = sparse_trainset(d, k, n);
  const auto mtr = build_Mtr(tr, k);
  const Vector w1{0.3, -0.2, 0.5, 0.1, -0.4};
  const auto aw = asymptotic_weights(w1, mtr);
  // With M^T M = I/n: w2_inf = sqrt(n) M w1 and each training margin is
  // |w1|^2 / sqrt(n) > 0.
  for (const auto& p : tr.points)
    EXPECT_NEAR(asym_margin(p, aw, k), dot(w1, w1) / std::sqrt(double(n)), 1e-14);

  const auto zero = asymptotic_weights(Vector(k, 0.0), mtr);
  EXPECT_EQ(asym_margin(tr.points[0], zero, k), 0.0);

  const Dataset whole = gen_whole_dataset(Task::cls, d);
  const TrainingSet pair = make_training_set(whole, {unit(d, 10, 1, 1), unit(d, 11, 1, 1)});
  const auto pm = build_Mtr(pair, k);
  ASSERT_TRUE(is_primitive_bruteforce(gram(pm.M)));
  const auto top = fix_top_pair_sign(thin_svd(pm.M));
  EXPECT_EQ(bilinear_margin(unit(d, 50, 1, 1), top.top_v(), top.top_u()), 0.0);
  EXPECT_GT(bilinear_margin(unit(d, 10, 1, 1), top.top_v(), top.top_u()), 0.0);
}

TEST(AsymMargin, PrimitiveGramGivesNonnegativeMargins) {
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  Rng rng(9);
  int primitive = 0;
  for (int t = 0; t < 300; ++t) {
    const TrainingSet tr = sample_training_set(whole, 5 + t % 100, rng);
    const auto mtr = build_Mtr(tr, 5);
    if (!is_primitive_bruteforce(gram(mtr.M))) continue;
    ++primitive;
    const auto svd = thin_svd(mtr.M);
    ASSERT_EQ(svd.m, 1u);
    const auto f = fix_top_pair_sign(svd);
    const Vector v = f.top_v(), u = f.top_u();
    const double tol = kZeroMarginTol * norm2(v) * norm2(u);
    for (const auto& p : whole.points) ASSERT_GE(bilinear_margin(p, v, u), -tol);
  }
  EXPECT_GT(primitive, 100);
}

TEST(AsymError, SingleSampleExhaustive) {
  // Single sample: the asymptotic error over the whole dataset equals the
  // error of the limit weights evaluated with the dense forward pass.
  const std::size_t d = 100, k = 5;
  const Dataset whole = gen_whole_dataset(Task::cls, d);
  for (std::size_t l1 : {1u, 3u, 5u, 50u, 100u}) {
    const TrainingSet tr = make_training_set(whole, {unit(d, l1, 1, 1)});
    const auto mtr = build_Mtr(tr, k);
    Rng a(11), b(11);
    const AsymTrialResult r = asym_error_for(whole, mtr, kDefaultMultiplicityTol, 64, a);
    const auto svd = thin_svd(mtr.M);
    EXPECT_EQ(r.m, svd.m);
    double expect = 0.0;
    const std::size_t draws = svd.m == 1 ? 1 : 64;
    for (std::size_t s = 0; s < draws; ++s) {
      Vector filter, out;
      if (svd.m == 1) {
        const auto f = fix_top_pair_sign(svd);
        filter = f.top_v();
        out = f.top_u();
      } else {
        const auto aw = asymptotic_weights(gaussian(k, 0.1, b), svd);
        filter = aw.w1_inf;
        out = aw.w2_inf;
      }
      double err = 0.0;
      for (const auto& p : whole.points) {
        const double m = p.y * forward(ConvWeights{filter, out}, p.x);
        const double tol = 1e-12 * norm2(filter) * norm2(out);
        err += std::abs(m) <= tol ? 0.5 : (m < 0 ? 1.0 : 0.0);
      }
      expect += err / whole.size();
    }
    expect /= draws;
    EXPECT_NEAR(r.error, expect, 1e-12) << "l=" << l1;
    // Positions farther than k-1 from l always contribute exactly 1/2.
    std::size_t far = 0;
    for (std::size_t p = 1; p <= d; ++p) far += (p + k <= l1 || l1 + k <= p) ? 1 : 0;
    EXPECT_GE(r.error, 0.5 * far / d - 1e-12);
  }
}

TEST(AsymError, FirstPositionIsRankOne) {
  const std::size_t d = 100, k = 5;
  const Dataset whole = gen_whole_dataset(Task::cls, d);
  const auto mtr = build_Mtr(make_training_set(whole, {unit(d, 1, 1, 1)}), k);
  Rng rng(1);
  const AsymTrialResult r = asym_error_for(whole, mtr, kDefaultMultiplicityTol, 64, rng);
  EXPECT_EQ(r.m, 1u);
  EXPECT_FALSE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.error, 0.5 * (d - 1) / d);
}

TEST(AsymError, Deterministic) {
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  Rng a(5), b(5);
  const auto ea = asym_error_estimate(whole, 30, 5, 1, kDefaultMultiplicityTol, a);
  const auto eb = asym_error_estimate(whole, 30, 5, 1, kDefaultMultiplicityTol, b);
  EXPECT_EQ(ea.mean, eb.mean);
  EXPECT_EQ(ea.trial_errors, eb.trial_errors);
  Rng c(5);
  EXPECT_THROW(asym_error_estimate(whole, 30, 5, 0, kDefaultMultiplicityTol, c), ConfigError);
}

TEST(AsymError, DegenerateBranchScaleInvariant) {
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  const auto mtr = build_Mtr(sparse_trainset(100, 5, 6), 5);
  // 12.8 = 0.1 * 2^7, so every margin scales exactly.
  Rng a(3), b(3);
  const auto small = asym_error_for(whole, mtr, kDefaultMultiplicityTol, 64, a, 0.1);
  const auto big = asym_error_for(whole, mtr, kDefaultMultiplicityTol, 64, b, 12.8);
  EXPECT_TRUE(small.degenerate);
  EXPECT_EQ(small.error, big.error);
}

TEST(AsymError, AgreesWithXhingeAtN300) {
  const Dataset whole = gen_whole_dataset(Task::cls, 100);
  Rng rng(derive_seed(1, "asym-unit", 300, 0));
  const auto est = asym_error_estimate(whole, 300, 5, 100, kDefaultMultiplicityTol, rng);
  std::vector<double> xh;
  for (std::size_t t = 0; t < 100; ++t) {
    Rng r(derive_seed(1, "xhinge-unit", 300, t));
    const TrainingSet tr = sample_training_set(whole, 300, r);
    xh.push_back(gd_train(Arch::conv, 5, tr, TrainConfig::xhinge_defaults(), &whole, r)
                     .last()
                     .test_error);
  }
  const MeanSE x = mean_se(xh);
  EXPECT_LE(std::abs(est.mean - x.mean), 3.0 * std::sqrt(est.std_error * est.std_error +
                                                         x.se * x.se))
      << "asym " << est.mean << " xhinge " << x.mean;
}
