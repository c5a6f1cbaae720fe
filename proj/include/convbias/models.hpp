#ifndef CONVBIAS_MODELS_HPP
#define CONVBIAS_MODELS_HPP

// Model-1-Layer, Model-Conv-k and the fully connected two-layer variant:
// forward passes, losses, initialisation and full-batch gradient descent.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "convbias/error.hpp"
#include "convbias/matrix.hpp"
#include "convbias/rng.hpp"
#include "convbias/shift.hpp"
#include "convbias/tasks.hpp"

namespace convbias {

enum class Arch { linear, conv, fc };

inline std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::linear: return "1layer";
    case Arch::conv: return "conv";
    case Arch::fc: return "fc";
  }
  return "?";
}

struct LinearWeights {
  Vector w;
};

struct ConvWeights {
  Vector w1;  // filter, length k
  Vector w2;  // output layer, length d
};

struct FCWeights {
  Matrix W1;  // d x d
  Vector w2;
};

using Weights = std::variant<LinearWeights, ConvWeights, FCWeights>;

inline std::size_t input_dim(const Weights& w) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearWeights>) return v.w.size();
        else if constexpr (std::is_same_v<T, ConvWeights>) return v.w2.size();
        else return v.W1.cols();
      },
      w);
}

/// f_w(x). The conv case evaluates sum_i w2_i sum_j w1_j x_{i+j} directly.
inline double forward(const Weights& weights, std::span<const double> x) {
  return std::visit(
      [&](const auto& w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          if (w.w.size() != x.size()) throw ShapeError("forward: input length mismatch");
          return dot(w.w, x);
        } else if constexpr (std::is_same_v<T, ConvWeights>) {
          const std::size_t d = x.size();
          const std::size_t k = w.w1.size();
          if (w.w2.size() != d || k > d || k == 0) {
            throw ShapeError("forward: conv weight shapes do not match input");
          }
          double score = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            double conv = 0.0;
            for (std::size_t j = 0; j < k && i + j < d; ++j) conv += w.w1[j] * x[i + j];
            score += w.w2[i] * conv;
          }
          return score;
        } else {
          if (w.W1.cols() != x.size() || w.w2.size() != w.W1.rows()) {
            throw ShapeError("forward: fc weight shapes do not match input");
          }
          return dot(w.w2, w.W1 * x);
        }
      },
      weights);
}

/// The length-d vector w_eff with f_w(x) = w_eff^T x. For conv,
/// w_eff[p] = sum_j w1[j] * w2[p - j].
inline Vector effective_weights(const Weights& weights) {
  return std::visit(
      [](const auto& w) -> Vector {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          return w.w;
        } else if constexpr (std::is_same_v<T, ConvWeights>) {
          const std::size_t d = w.w2.size();
          Vector eff(d, 0.0);
          for (std::size_t p = 0; p < d; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < w.w1.size() && j <= p; ++j) s += w.w1[j] * w.w2[p - j];
            eff[p] = s;
          }
          return eff;
        } else {
          return transpose_times(w.W1, w.w2);
        }
      },
      weights);
}

inline double sparse_score(std::span<const double> eff, const DataPoint& p) {
  double s = 0.0;
  for (const Entry& e : p.support) s += eff[e.pos] * e.value;
  return s;
}

/// Expected 0-1 loss of a margin: 1 if negative, 1/2 if exactly zero.
inline double margin_error(double margin) {
  if (margin < 0.0) return 1.0;
  if (margin == 0.0) return 0.5;
  return 0.0;
}

inline double eval_error_eff(std::span<const double> eff, std::span<const DataPoint> pts) {
  if (pts.empty()) throw ContractViolation("eval_error: empty dataset");
  double s = 0.0;
  for (const DataPoint& p : pts) s += margin_error(p.y * sparse_score(eff, p));
  return s / static_cast<double>(pts.size());
}

/// Mean of margin_error(y f(x)) over the points.
inline double eval_error(const Weights& w, std::span<const DataPoint> pts) {
  return eval_error_eff(effective_weights(w), pts);
}

inline double eval_error(const Weights& w, const Dataset& ds) {
  return eval_error(w, std::span<const DataPoint>(ds.points));
}

/// (1/n) sum max(0, 1 - y f(x)).
inline double hinge_training_loss(const Weights& w, const TrainingSet& tr) {
  if (tr.points.empty()) return 0.0;
  const Vector eff = effective_weights(w);
  double s = 0.0;
  for (const DataPoint& p : tr.points) s += std::max(0.0, 1.0 - p.y * sparse_score(eff, p));
  return s / static_cast<double>(tr.points.size());
}

// ---------------------------------------------------------------------------
// Training configuration

enum class Loss { hinge, xhinge };
enum class StopRule { loss_zero, fixed_steps };
enum class StopReason { loss_zero, fixed_steps, step_budget };

inline std::string_view to_string(Loss l) { return l == Loss::hinge ? "hinge" : "xhinge"; }

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::loss_zero: return "loss-zero";
    case StopReason::fixed_steps: return "fixed-steps";
    case StopReason::step_budget: return "step-budget";
  }
  return "?";
}

struct InitScheme {
  enum class Kind { gaussian, uniform, zero } kind = Kind::gaussian;
  double b = 0.1;

  static InitScheme gaussian(double b) { return {Kind::gaussian, b}; }
  static InitScheme uniform(double b) { return {Kind::uniform, b}; }
  static InitScheme zero() { return {Kind::zero, 0.0}; }
};

struct TrainConfig {
  Loss loss = Loss::hinge;
  double alpha = 0.1;
  std::size_t max_steps = 100000;
  InitScheme init_first = InitScheme::gaussian(0.1);   // w, w1 or W1
  InitScheme init_second = InitScheme::zero();         // w2
  bool renormalize = false;
  StopRule stop_rule = StopRule::loss_zero;
  /// Record a trace entry every `trace_every` steps; 0 keeps only the
  /// first and last states.
  std::size_t trace_every = 0;

  static TrainConfig hinge_defaults() { return {}; }

  static TrainConfig xhinge_defaults() {
    TrainConfig c;
    c.loss = Loss::xhinge;
    c.alpha = 0.1;
    c.max_steps = 1000;
    c.renormalize = true;
    c.stop_rule = StopRule::fixed_steps;
    return c;
  }

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
    if (loss == Loss::hinge && renormalize) {
      throw ConfigError("renormalisation is only defined for the extreme hinge loss");
    }
    if (stop_rule == StopRule::loss_zero && loss != Loss::hinge) {
      throw ConfigError("stop rule loss_zero requires the hinge loss");
    }
    for (const InitScheme* s : {&init_first, &init_second}) {
      if (s->kind != InitScheme::Kind::zero && !(s->b > 0.0)) {
        throw ConfigError("init scale b must be > 0");
      }
    }
  }
};

struct TraceRecord {
  std::size_t t = 0;
  double train_loss = 0.0;
  double train_error = 0.0;
  double test_error = std::numeric_limits<double>::quiet_NaN();
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  Weights final_weights;
  StopReason stop_reason = StopReason::fixed_steps;
  std::size_t steps_run = 0;
  std::size_t renormalizations = 0;

  bool budget_exhausted() const { return stop_reason == StopReason::step_budget; }
  const TraceRecord& last() const { return records.back(); }
};

namespace detail {

inline Vector draw(std::size_t n, const InitScheme& s, Rng& rng) {
  Vector v(n, 0.0);
  switch (s.kind) {
    case InitScheme::Kind::gaussian:
      for (double& x : v) x = rng.normal(s.b);
      break;
    case InitScheme::Kind::uniform:
      for (double& x : v) x = rng.uniform(-s.b, s.b);
      break;
    case InitScheme::Kind::zero:
      break;
  }
  return v;
}

}  // namespace detail

/// Initial weights for an architecture at input size d (filter size k for
/// conv). The first tensor is drawn before the second.
inline Weights init_weights(Arch arch, std::size_t d, std::size_t k, const TrainConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  switch (arch) {
    case Arch::linear:
      return LinearWeights{detail::draw(d, cfg.init_first, rng)};
    case Arch::conv: {
      check_filter_size(d, k);
      Vector w1 = detail::draw(k, cfg.init_first, rng);
      Vector w2 = detail::draw(d, cfg.init_second, rng);
      return ConvWeights{std::move(w1), std::move(w2)};
    }
    case Arch::fc: {
      const Vector flat = detail::draw(d * d, cfg.init_first, rng);
      Matrix W1(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) W1(i, j) = flat[i * d + j];
      return FCWeights{std::move(W1), detail::draw(d, cfg.init_second, rng)};
    }
  }
  throw ConfigError("unknown architecture");
}

namespace detail {

inline double joint_max_abs(const Weights& weights) {
  return std::visit(
      [](const auto& w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LinearWeights>) return max_abs(w.w);
        else if constexpr (std::is_same_v<T, ConvWeights>)
          return std::max(max_abs(w.w1), max_abs(w.w2));
        else return std::max(max_abs(w.W1), max_abs(w.w2));
      },
      weights);
}

inline void scale_all(Weights& weights, double s) {
  std::visit(
      [s](auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          for (double& x : w.w) x *= s;
        } else if constexpr (std::is_same_v<T, ConvWeights>) {
          for (double& x : w.w1) x *= s;
          for (double& x : w.w2) x *= s;
        } else {
          w.W1 *= s;
          for (double& x : w.w2) x *= s;
        }
      },
      weights);
}

// One simultaneous update given the averaged signed input g = (1/n) sum y x
// over the points that receive gradient.
inline void apply_update(Weights& weights, const Vector& g, double alpha,
                         const AveragedShiftMatrix* mtr) {
  std::visit(
      [&](auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          for (std::size_t i = 0; i < w.w.size(); ++i) w.w[i] += alpha * g[i];
        } else if constexpr (std::is_same_v<T, ConvWeights>) {
          const std::size_t d = w.w2.size();
          const std::size_t k = w.w1.size();
          Vector grad1(k, 0.0), grad2(d, 0.0);
          if (mtr != nullptr) {
            grad1 = transpose_times(mtr->M, w.w2);
            grad2 = mtr->M * std::span<const double>(w.w1);
          } else {
            // A_g^T w2 and A_g w1 with A_g the shift matrix of g.
            for (std::size_t i = 0; i < d; ++i)
              for (std::size_t j = 0; j < k && i + j < d; ++j) {
                grad1[j] += g[i + j] * w.w2[i];
                grad2[i] += g[i + j] * w.w1[j];
              }
          }
          for (std::size_t j = 0; j < k; ++j) w.w1[j] += alpha * grad1[j];
          for (std::size_t i = 0; i < d; ++i) w.w2[i] += alpha * grad2[i];
        } else {
          const std::size_t d = w.w2.size();
          const Vector w1g = w.W1 * std::span<const double>(g);
          for (std::size_t i = 0; i < d; ++i) {
            const double coef = alpha * w.w2[i];
            if (coef == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) w.W1(i, j) += coef * g[j];
          }
          for (std::size_t i = 0; i < d; ++i) w.w2[i] += alpha * w1g[i];
        }
      },
      weights);
}

}  // namespace detail

inline constexpr double kRenormThreshold = 1e100;

/// Full-batch gradient descent from given initial weights.
///
/// Hinge: subgradient with indicator 1{y f < 1}; stops as soon as the
/// averaged hinge loss is exactly 0 (or after max_steps, flagged as
/// step-budget). X-hinge: every sample contributes; for conv the update is
/// w1 += alpha M_tr^T w2, w2 += alpha M_tr w1 from the old values. Both
/// layers always update simultaneously.
inline TrainTrace gd_train_from(Weights weights, const TrainingSet& tr, const TrainConfig& cfg,
                                const Dataset* eval_set = nullptr) {
  cfg.validate();
  if (tr.points.empty()) throw ContractViolation("gd_train: empty training set");
  const std::size_t d = tr.d;
  if (input_dim(weights) != d) throw ShapeError("gd_train: weights do not match d");

  std::optional<AveragedShiftMatrix> mtr;
  if (cfg.loss == Loss::xhinge && std::holds_alternative<ConvWeights>(weights)) {
    mtr = build_Mtr(tr, std::get<ConvWeights>(weights).w1.size());
  }

  const double n = static_cast<double>(tr.points.size());
  TrainTrace trace;
  auto record = [&](std::size_t t, double loss, const Vector& eff) {
    TraceRecord r;
    r.t = t;
    r.train_loss = loss;
    r.train_error = eval_error_eff(eff, tr.points);
    if (eval_set != nullptr) r.test_error = eval_error_eff(eff, eval_set->points);
    trace.records.push_back(r);
  };

  Vector g(d);
  for (std::size_t t = 0;; ++t) {
    const Vector eff = effective_weights(weights);
    for (double v : eff) {
      if (!std::isfinite(v)) {
        throw NumericalFailure("gd_train: effective weights overflowed at step " +
                               std::to_string(t));
      }
    }
    std::fill(g.begin(), g.end(), 0.0);
    double loss = 0.0;
    for (const DataPoint& p : tr.points) {
      const double margin = p.y * sparse_score(eff, p);
      bool active = true;
      if (cfg.loss == Loss::hinge) {
        loss += std::max(0.0, 1.0 - margin);
        active = margin < 1.0;
      } else {
        loss -= margin;
      }
      if (active)
        for (const Entry& e : p.support) g[e.pos] += p.y * e.value;
    }
    loss /= n;
    if (!std::isfinite(loss)) {
      throw NumericalFailure("gd_train: training loss is not finite at step " + std::to_string(t));
    }

    bool stop = false;
    if (cfg.stop_rule == StopRule::loss_zero && loss == 0.0) {
      trace.stop_reason = StopReason::loss_zero;
      stop = true;
    } else if (t == cfg.max_steps) {
      trace.stop_reason = cfg.stop_rule == StopRule::loss_zero ? StopReason::step_budget
                                                               : StopReason::fixed_steps;
      stop = true;
    }
    const bool due = t == 0 || (cfg.trace_every > 0 && t % cfg.trace_every == 0);
    if (stop || due) record(t, loss, eff);
    if (stop) {
      trace.steps_run = t;
      break;
    }

    for (double& v : g) v /= n;
    detail::apply_update(weights, g, cfg.alpha, mtr ? &*mtr : nullptr);

    if (cfg.renormalize) {
      const double m = detail::joint_max_abs(weights);
      if (m > kRenormThreshold) {
        detail::scale_all(weights, 1.0 / m);
        ++trace.renormalizations;
      }
    }
  }
  trace.final_weights = std::move(weights);
  return trace;
}

inline TrainTrace gd_train(Arch arch, std::size_t k, const TrainingSet& tr,
                           const TrainConfig& cfg, const Dataset* eval_set, Rng& rng) {
  Weights w0 = init_weights(arch, tr.d, k, cfg, rng);
  return gd_train_from(std::move(w0), tr, cfg, eval_set);
}

}  // namespace convbias

#endif  // CONVBIAS_MODELS_HPP
