#ifndef CONVBIAS_HARNESS_HPP
#define CONVBIAS_HARNESS_HPP

// Seeded experiment runners that emit plot-ready rows, plus the CSV/JSON
// writers and the key=value config reader used by the CLI.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "convbias/dynamics.hpp"
#include "convbias/error.hpp"
#include "convbias/linalg.hpp"
#include "convbias/models.hpp"
#include "convbias/parallel.hpp"
#include "convbias/rng.hpp"
#include "convbias/shift.hpp"
#include "convbias/stats.hpp"
#include "convbias/tasks.hpp"
#include "convbias/theory.hpp"

namespace convbias {

enum class Experiment {
  gen_curve,
  asym_vs_losses,
  init_study,
  analysis_curves,
  prop1_check,
  parity_curve,
};

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::gen_curve: return "gen-curve";
    case Experiment::asym_vs_losses: return "asym-vs-losses";
    case Experiment::init_study: return "init-study";
    case Experiment::analysis_curves: return "analysis-curves";
    case Experiment::prop1_check: return "prop1-check";
    case Experiment::parity_curve: return "parity-curve";
  }
  return "?";
}

inline Experiment parse_experiment(std::string_view s) {
  for (Experiment e : {Experiment::gen_curve, Experiment::asym_vs_losses,
                       Experiment::init_study, Experiment::analysis_curves,
                       Experiment::prop1_check, Experiment::parity_curve}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

enum class OutputFormat { csv, json };

inline std::vector<std::size_t> default_n_grid() {
  std::vector<std::size_t> g;
  for (std::size_t n = 10; n <= 100; n += 10) g.push_back(n);
  for (std::size_t n = 150; n <= 500; n += 50) g.push_back(n);
  return g;
}

/// Parses "30" or "lo:hi:step" (inclusive).
inline std::vector<std::size_t> parse_n_grid(const std::string& text) {
  auto to_count = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad --n value '" + text + "'");
    }
    if (used != s.size() || v < 0) throw ConfigError("bad --n value '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() == 1) return {to_count(parts[0])};
  if (parts.size() != 3) throw ConfigError("--n expects N or lo:hi:step");
  const std::size_t lo = to_count(parts[0]);
  const std::size_t hi = to_count(parts[1]);
  const std::size_t step = to_count(parts[2]);
  if (step == 0 || hi < lo) throw ConfigError("--n range needs lo <= hi and step > 0");
  std::vector<std::size_t> g;
  for (std::size_t n = lo; n <= hi; n += step) g.push_back(n);
  return g;
}

struct ExperimentSpec {
  Experiment experiment = Experiment::gen_curve;
  Task task = Task::cls;
  std::size_t d = 100;
  std::size_t k = 5;
  std::vector<std::size_t> n_values;  // empty: per-experiment default
  std::size_t trials = 0;             // 0: per-experiment default
  double alpha = 0.1;
  double b = 0.1;
  InitScheme::Kind onelayer_init = InitScheme::Kind::gaussian;
  bool with_fc = false;
  std::size_t max_steps = 100000;
  std::size_t xhinge_steps = 1000;
  std::size_t snapshot_t = 150;
  std::uint64_t base_seed = 0;
  double rel_tol = kDefaultMultiplicityTol;
  std::size_t w1_draws = kDefaultDegenerateDraws;
  std::string out = "-";
  OutputFormat format = OutputFormat::csv;
  bool dump_weights = false;
  std::size_t threads = 0;

  std::vector<std::size_t> grid() const {
    if (!n_values.empty()) return n_values;
    switch (experiment) {
      case Experiment::init_study: return {30};
      case Experiment::prop1_check: return {9};
      default: return default_n_grid();
    }
  }

  std::size_t trial_count() const {
    if (trials > 0) return trials;
    switch (experiment) {
      case Experiment::analysis_curves: return 10000;
      case Experiment::prop1_check: return 200;
      default: return 100;
    }
  }

  void validate() const {
    validate_task_dim(task, d);
    check_filter_size(d, k);
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(b > 0.0)) throw ConfigError("b must be > 0");
    const auto g = grid();
    if (g.empty()) throw ConfigError("n grid is empty");
    if (experiment != Experiment::analysis_curves) {
      for (std::size_t n : g)
        if (n == 0) throw ConfigError("training set size n must be >= 1");
    }
    if (experiment == Experiment::init_study && g.size() != 1) {
      throw ConfigError("init-study takes a single n");
    }
    if (experiment == Experiment::init_study && snapshot_t > xhinge_steps) {
      throw ConfigError("snapshot step exceeds xhinge-steps");
    }
    if (experiment == Experiment::analysis_curves && trial_count() < 100) {
      throw ConfigError("analysis-curves needs at least 100 repetitions");
    }
    if ((experiment == Experiment::analysis_curves || experiment == Experiment::prop1_check) &&
        task != Task::cls) {
      throw ConfigError(std::string(to_string(experiment)) + " is defined for task cls only");
    }
    if (experiment == Experiment::analysis_curves && d + 1 < 2 * k) {
      throw ConfigError("analysis-curves needs d >= 2k - 1");
    }
  }
};

struct ResultRow {
  std::string experiment;
  std::string task;
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  long long trial = -1;  // -1 marks an aggregate over trials
  std::uint64_t seed = 0;
  std::string model;
  std::string loss;
  std::optional<std::size_t> steps_run;
  std::string stop_reason;
  std::optional<double> train_error;
  std::optional<double> test_error;
  std::string aux_key;
  std::string aux_value;
};

struct TraceRow {
  std::size_t init = 0;
  std::string loss;
  TraceRecord record;
};

struct WeightDump {
  std::size_t n = 0;
  long long trial = 0;
  std::string model;
  std::string loss;
  std::vector<std::pair<std::string, Vector>> tensors;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<TraceRow> traces;
  std::vector<WeightDump> weights;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline ResultRow base_row(const ExperimentSpec& spec, std::size_t n) {
  ResultRow r;
  r.experiment = std::string(to_string(spec.experiment));
  r.task = std::string(to_string(spec.task));
  r.d = spec.d;
  r.k = spec.k;
  r.n = n;
  r.seed = spec.base_seed;
  return r;
}

inline ResultRow trace_row(const ExperimentSpec& spec, std::size_t n, std::size_t trial,
                           std::uint64_t seed, std::string model, Loss loss,
                           const TrainTrace& tr) {
  ResultRow r = base_row(spec, n);
  r.trial = static_cast<long long>(trial);
  r.seed = seed;
  r.model = std::move(model);
  r.loss = std::string(to_string(loss));
  r.steps_run = tr.steps_run;
  r.stop_reason = std::string(to_string(tr.stop_reason));
  r.train_error = tr.last().train_error;
  r.test_error = tr.last().test_error;
  return r;
}

inline WeightDump dump_of(std::size_t n, std::size_t trial, const ResultRow& row,
                          const Weights& w) {
  WeightDump dump{n, static_cast<long long>(trial), row.model, row.loss, {}};
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          dump.tensors.push_back({"w", v.w});
        } else if constexpr (std::is_same_v<T, ConvWeights>) {
          dump.tensors.push_back({"w1", v.w1});
          dump.tensors.push_back({"w2", v.w2});
        } else {
          dump.tensors.push_back({"W1", v.W1.data()});
          dump.tensors.push_back({"w2", v.w2});
        }
      },
      w);
  return dump;
}

// Aggregate row: mean train/test error over the trial rows of one series,
// with the standard error of the test error in the aux column.
inline ResultRow summary_row(const ExperimentSpec& spec, std::size_t n, std::string model,
                             std::string loss, const std::vector<double>& test,
                             const std::vector<double>& train = {}) {
  ResultRow r = base_row(spec, n);
  r.model = std::move(model);
  r.loss = std::move(loss);
  r.stop_reason = "summary";
  const MeanSE ms = mean_se(test);
  r.test_error = ms.mean;
  if (!train.empty()) r.train_error = mean_se(train).mean;
  r.aux_key = "test_error_se";
  r.aux_value = format_double(ms.se);
  return r;
}

inline ResultRow value_row(const ExperimentSpec& spec, std::size_t n, std::string model,
                           std::string key, double value) {
  ResultRow r = base_row(spec, n);
  r.model = std::move(model);
  r.loss = "-";
  r.stop_reason = "summary";
  r.aux_key = std::move(key);
  r.aux_value = format_double(value);
  return r;
}

inline TrainConfig hinge_config(const ExperimentSpec& spec) {
  TrainConfig c = TrainConfig::hinge_defaults();
  c.alpha = spec.alpha;
  c.max_steps = spec.max_steps;
  c.init_first = InitScheme::gaussian(spec.b);
  c.init_second = InitScheme::zero();
  return c;
}

inline TrainConfig onelayer_config(const ExperimentSpec& spec) {
  TrainConfig c = hinge_config(spec);
  c.init_first = {spec.onelayer_init, spec.b};
  return c;
}

inline TrainConfig fc_config(const ExperimentSpec& spec) { return hinge_config(spec); }

inline TrainConfig xhinge_config(const ExperimentSpec& spec) {
  TrainConfig c = TrainConfig::xhinge_defaults();
  c.alpha = spec.alpha;
  c.max_steps = spec.xhinge_steps;
  c.init_first = InitScheme::gaussian(spec.b);
  c.init_second = InitScheme::zero();
  return c;
}

inline std::string sign_pattern(const Vector& v) {
  std::string s;
  for (double x : v) s += x > 0 ? '+' : (x < 0 ? '-' : '0');
  return s;
}

inline bool alternating(const std::string& pattern) {
  if (pattern.empty() || pattern.find('0') != std::string::npos) return false;
  for (std::size_t i = 1; i < pattern.size(); ++i)
    if (pattern[i] == pattern[i - 1]) return false;
  return true;
}

struct TrialOutput {
  std::vector<ResultRow> rows;
  std::vector<WeightDump> weights;
};

inline void append(ExperimentResult& res, std::vector<TrialOutput>& slots) {
  for (auto& s : slots) {
    for (auto& r : s.rows) res.rows.push_back(std::move(r));
    for (auto& w : s.weights) res.weights.push_back(std::move(w));
  }
}

inline std::vector<double> column(const std::vector<TrialOutput>& slots, std::size_t idx,
                                  bool train = false) {
  std::vector<double> out;
  for (const auto& s : slots) {
    const auto& r = s.rows.at(idx);
    out.push_back(train ? r.train_error.value_or(0.0) : r.test_error.value_or(0.0));
  }
  return out;
}

}  // namespace detail

/// Hinge-trained 1-layer vs conv-k (optionally FC) over the n grid.
inline ExperimentResult run_gen_curve(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset whole = gen_whole_dataset(spec.task, spec.d);
  const std::size_t trials = spec.trial_count();
  const bool parity = spec.experiment == Experiment::parity_curve;
  const std::string name(to_string(spec.experiment));
  ExperimentResult res;

  for (std::size_t n : spec.grid()) {
    std::vector<detail::TrialOutput> slots(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
          const std::uint64_t seed = derive_seed(spec.base_seed, name, n, t);
          Rng rng(seed);
          const TrainingSet tr = sample_training_set(whole, n, rng);
          auto& out = slots[t];

          const TrainTrace conv =
              gd_train(Arch::conv, spec.k, tr, detail::hinge_config(spec), &whole, rng);
          ResultRow crow = detail::trace_row(spec, n, t, seed, "conv", Loss::hinge, conv);
          if (parity) {
            crow.aux_key = "filter_signs";
            crow.aux_value = detail::sign_pattern(std::get<ConvWeights>(conv.final_weights).w1);
          }
          out.rows.push_back(crow);
          if (spec.dump_weights) out.weights.push_back(detail::dump_of(n, t, crow, conv.final_weights));

          const TrainTrace lin =
              gd_train(Arch::linear, spec.k, tr, detail::onelayer_config(spec), &whole, rng);
          ResultRow lrow = detail::trace_row(spec, n, t, seed, "1layer", Loss::hinge, lin);
          out.rows.push_back(lrow);
          if (spec.dump_weights) out.weights.push_back(detail::dump_of(n, t, lrow, lin.final_weights));

          if (spec.with_fc) {
            const TrainTrace fc =
                gd_train(Arch::fc, spec.k, tr, detail::fc_config(spec), &whole, rng);
            ResultRow frow = detail::trace_row(spec, n, t, seed, "fc", Loss::hinge, fc);
            out.rows.push_back(frow);
            if (spec.dump_weights) out.weights.push_back(detail::dump_of(n, t, frow, fc.final_weights));
          }
        },
        spec.threads);

    detail::append(res, slots);
    const std::size_t models = spec.with_fc ? 3 : 2;
    const char* names[] = {"conv", "1layer", "fc"};
    for (std::size_t m = 0; m < models; ++m) {
      std::vector<double> test, train;
      std::size_t budget = 0;
      for (const auto& s : slots) {
        test.push_back(*s.rows[m].test_error);
        train.push_back(*s.rows[m].train_error);
        budget += s.rows[m].stop_reason == "step-budget" ? 1 : 0;
      }
      res.rows.push_back(detail::summary_row(spec, n, names[m], "hinge", test, train));
      if (budget > 0) {
        res.rows.push_back(detail::value_row(spec, n, names[m], "step_budget_runs",
                                             static_cast<double>(budget)));
      }
    }
    if (parity) {
      std::size_t alt = 0;
      for (const auto& s : slots) alt += detail::alternating(s.rows[0].aux_value) ? 1 : 0;
      res.rows.push_back(detail::value_row(spec, n, "conv", "alternating_filter_fraction",
                                           static_cast<double>(alt) / trials));
    }
    if (single_nonzero(spec.task) && spec.task != Task::first_ctrl) {
      ResultRow closed = detail::base_row(spec, n);
      closed.model = "1layer-closed-form";
      closed.loss = "-";
      closed.stop_reason = "summary";
      closed.test_error = onelayer_error_closed(spec.d, n);
      res.rows.push_back(closed);
    }
  }
  return res;
}

inline ExperimentResult run_parity_curve(ExperimentSpec spec) {
  spec.task = Task::parity;
  spec.experiment = Experiment::parity_curve;
  return run_gen_curve(spec);
}

/// Asymptotic estimate vs finite-time X-hinge vs hinge, per n.
inline ExperimentResult run_asym_vs_losses(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset whole = gen_whole_dataset(spec.task, spec.d);
  const std::size_t trials = spec.trial_count();
  const std::string name(to_string(spec.experiment));
  ExperimentResult res;

  for (std::size_t n : spec.grid()) {
    Rng asym_rng(derive_seed(spec.base_seed, name + "/asym", n, 0));
    const AsymErrorEstimate est =
        asym_error_estimate(whole, n, spec.k, trials, spec.rel_tol, asym_rng, spec.w1_draws);
    for (std::size_t t = 0; t < trials; ++t) {
      ResultRow r = detail::base_row(spec, n);
      r.trial = static_cast<long long>(t);
      r.model = "conv-asym";
      r.loss = "-";
      r.stop_reason = "limit";
      r.test_error = est.trial_errors[t];
      res.rows.push_back(r);
    }

    std::vector<detail::TrialOutput> slots(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
          const std::uint64_t seed = derive_seed(spec.base_seed, name, n, t);
          Rng rng(seed);
          const TrainingSet tr = sample_training_set(whole, n, rng);
          auto& out = slots[t];
          const TrainTrace xh =
              gd_train(Arch::conv, spec.k, tr, detail::xhinge_config(spec), &whole, rng);
          ResultRow xrow = detail::trace_row(spec, n, t, seed, "conv", Loss::xhinge, xh);
          xrow.aux_key = "renormalizations";
          xrow.aux_value = std::to_string(xh.renormalizations);
          out.rows.push_back(xrow);
          if (spec.dump_weights) out.weights.push_back(detail::dump_of(n, t, xrow, xh.final_weights));
          const TrainTrace hg =
              gd_train(Arch::conv, spec.k, tr, detail::hinge_config(spec), &whole, rng);
          ResultRow hrow = detail::trace_row(spec, n, t, seed, "conv", Loss::hinge, hg);
          out.rows.push_back(hrow);
          if (spec.dump_weights) out.weights.push_back(detail::dump_of(n, t, hrow, hg.final_weights));
        },
        spec.threads);
    detail::append(res, slots);

    ResultRow asym = detail::summary_row(spec, n, "conv-asym", "-", est.trial_errors);
    res.rows.push_back(asym);
    res.rows.push_back(
        detail::value_row(spec, n, "conv-asym", "degenerate_fraction", est.degenerate_fraction));
    res.rows.push_back(detail::value_row(spec, n, "conv-asym", "zero_mtr_resamples",
                                         static_cast<double>(est.zero_resamples)));
    res.rows.push_back(detail::summary_row(spec, n, "conv", "xhinge", detail::column(slots, 0),
                                           detail::column(slots, 0, true)));
    res.rows.push_back(detail::summary_row(spec, n, "conv", "hinge", detail::column(slots, 1),
                                           detail::column(slots, 1, true)));
  }
  return res;
}

/// Fixed training set, many uniform initialisations, both losses traced.
inline ExperimentResult run_init_study(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset whole = gen_whole_dataset(spec.task, spec.d);
  const std::size_t n = spec.grid().front();
  const std::size_t inits = spec.trial_count();
  const std::string name(to_string(spec.experiment));
  Rng set_rng(derive_seed(spec.base_seed, name + "/trainset", n, 0));
  const TrainingSet tr = sample_training_set(whole, n, set_rng);

  struct InitOutput {
    detail::TrialOutput out;
    std::vector<TraceRow> traces;
    double snapshot_accuracy = 0.0;
    double hinge_accuracy = 0.0;
    bool hinge_fit = false;
    bool constant_after_fit = false;
  };
  std::vector<InitOutput> slots(inits);

  parallel_for(
      inits,
      [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(spec.base_seed, name, n, i);
        Rng rng(seed);
        TrainConfig hinge = detail::hinge_config(spec);
        hinge.init_first = InitScheme::uniform(spec.b);
        hinge.init_second = InitScheme::uniform(spec.b);
        const Weights w0 = init_weights(Arch::conv, spec.d, spec.k, hinge, rng);
        auto& slot = slots[i];

        const TrainTrace fit = gd_train_from(w0, tr, hinge, &whole);
        ResultRow hrow = detail::trace_row(spec, n, i, seed, "conv", Loss::hinge, fit);
        slot.hinge_fit = fit.stop_reason == StopReason::loss_zero;
        slot.hinge_accuracy = 1.0 - *hrow.test_error;

        // Re-run past the fit point to record that nothing moves afterwards.
        TrainConfig cont = hinge;
        cont.stop_rule = StopRule::fixed_steps;
        cont.max_steps = std::max(spec.xhinge_steps, fit.steps_run + spec.snapshot_t);
        cont.trace_every = 1;
        const TrainTrace htrace = gd_train_from(w0, tr, cont, &whole);
        bool constant = slot.hinge_fit;
        for (const auto& rec : htrace.records) {
          if (rec.t >= fit.steps_run && rec.test_error != fit.last().test_error) constant = false;
          slot.traces.push_back({i, "hinge", rec});
        }
        slot.constant_after_fit = constant;
        hrow.aux_key = "constant_after_fit";
        hrow.aux_value = constant ? "1" : "0";
        slot.out.rows.push_back(hrow);
        if (spec.dump_weights) slot.out.weights.push_back(detail::dump_of(n, i, hrow, fit.final_weights));

        TrainConfig xcfg = detail::xhinge_config(spec);
        xcfg.trace_every = 1;
        const TrainTrace xh = gd_train_from(w0, tr, xcfg, &whole);
        for (const auto& rec : xh.records) slot.traces.push_back({i, "xhinge", rec});
        slot.snapshot_accuracy = 1.0 - xh.records.at(spec.snapshot_t).test_error;
        ResultRow xrow = detail::trace_row(spec, n, i, seed, "conv", Loss::xhinge, xh);
        xrow.aux_key = "snapshot_accuracy";
        xrow.aux_value = format_double(slot.snapshot_accuracy);
        slot.out.rows.push_back(xrow);
        if (spec.dump_weights) slot.out.weights.push_back(detail::dump_of(n, i, xrow, xh.final_weights));
      },
      spec.threads);

  ExperimentResult res;
  std::vector<double> snap, hinge_acc;
  std::size_t constant = 0;
  std::vector<detail::TrialOutput> outs;
  for (auto& s : slots) {
    snap.push_back(s.snapshot_accuracy);
    hinge_acc.push_back(s.hinge_accuracy);
    constant += s.constant_after_fit ? 1 : 0;
    outs.push_back(std::move(s.out));
    for (auto& tr_row : s.traces) res.traces.push_back(std::move(tr_row));
  }
  detail::append(res, outs);
  res.rows.push_back(detail::summary_row(spec, n, "conv", "hinge", detail::column(outs, 0),
                                         detail::column(outs, 0, true)));
  res.rows.push_back(detail::summary_row(spec, n, "conv", "xhinge", detail::column(outs, 1),
                                         detail::column(outs, 1, true)));
  res.rows.push_back(detail::value_row(spec, n, "conv", "pearson_r_snapshot_vs_hinge",
                                       pearson(snap, hinge_acc)));
  res.rows.push_back(detail::value_row(spec, n, "conv", "hinge_constant_after_fit_fraction",
                                       static_cast<double>(constant) / inits));

  // Limit of the X-hinge error for this training set. Homogeneity makes the
  // uniform w2 initialisation irrelevant only when w2_0 = 0, so this is the
  // reference the traces approach, not an exact limit for every run.
  const AveragedShiftMatrix mtr = build_Mtr(tr, spec.k);
  if (!mtr.is_zero) {
    Rng asym_rng(derive_seed(spec.base_seed, name + "/asym", n, 0));
    const AsymTrialResult a = asym_error_for(whole, mtr, spec.rel_tol, spec.w1_draws, asym_rng);
    ResultRow r = detail::base_row(spec, n);
    r.model = "conv-asym";
    r.loss = "-";
    r.stop_reason = "limit";
    r.test_error = a.error;
    r.aux_key = "m";
    r.aux_value = std::to_string(a.m);
    res.rows.push_back(r);
  }
  return res;
}

/// Err_1 (adjacent-pair failure probability), Err_2 (approximate coverage
/// term), their ratio and sum, and the one-layer closed form per n.
inline ExperimentResult run_analysis_curves(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t reps = spec.trial_count();
  const std::string name(to_string(spec.experiment));
  ExperimentResult res;
  auto prob_row = [&](std::size_t n, std::string model, double value,
                      std::optional<double> se = std::nullopt) {
    ResultRow r = detail::base_row(spec, n);
    r.model = std::move(model);
    r.loss = "-";
    r.stop_reason = "summary";
    r.test_error = value;
    if (se) {
      r.aux_key = "se";
      r.aux_value = format_double(*se);
    }
    res.rows.push_back(r);
  };
  for (std::size_t n : spec.grid()) {
    Rng rng(derive_seed(spec.base_seed, name, n, 0));
    const DecompositionReport rep = decomposition_report(spec.d, spec.k, n, reps, rng);
    const double err1 = rep.prob_omega_tilde_c.p;
    const double err2 = rep.coverage_approx;
    prob_row(n, "err1_omega_tilde_c", err1, rep.prob_omega_tilde_c.se);
    prob_row(n, "err1_exact", prob_omega_tilde_c_exact(spec.d, spec.k, n));
    prob_row(n, "err2_coverage_approx", err2);
    prob_row(n, "coverage_exact", rep.coverage_exact);
    prob_row(n, "sum_err1_err2", std::min(1.0, err1 + err2), rep.prob_omega_tilde_c.se);
    prob_row(n, "bound_err1_plus_coverage_exact", std::min(1.0, rep.upper_bound_sum),
             rep.prob_omega_tilde_c.se);
    prob_row(n, "onelayer_closed", rep.onelayer_error);
    res.rows.push_back(detail::value_row(spec, n, "ratio_err1_err2", "ratio", err1 / err2));
  }
  return res;
}

/// Sparse training set: conv asymptotic error over Gaussian w1_0 draws vs
/// the hinge-trained one-layer model on the same set.
inline ExperimentResult run_prop1_check(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset whole = gen_whole_dataset(Task::cls, spec.d);
  const std::size_t n = spec.grid().front();
  const std::size_t draws = spec.trial_count();
  const std::string name(to_string(spec.experiment));
  const TrainingSet tr = sparse_trainset(spec.d, spec.k, n);
  const AveragedShiftMatrix mtr = build_Mtr(tr, spec.k);
  const SpectralDecomposition svd = thin_svd(mtr.M, spec.rel_tol);

  ExperimentResult res;
  Matrix residual = gram(mtr.M);
  residual -= (1.0 / static_cast<double>(n)) * Matrix::identity(spec.k);
  res.rows.push_back(detail::value_row(spec, n, "gram", "gram_residual_max", max_abs(residual)));
  res.rows.push_back(detail::value_row(spec, n, "gram", "multiplicity", static_cast<double>(svd.m)));

  std::vector<detail::TrialOutput> slots(draws);
  parallel_for(
      draws,
      [&](std::size_t t) {
        const std::uint64_t seed = derive_seed(spec.base_seed, name, n, t);
        Rng rng(seed);
        Vector w1(spec.k);
        for (double& x : w1) x = rng.normal(spec.b);
        const AsymptoticWeights aw = asymptotic_weights(w1, svd);
        ResultRow arow = detail::base_row(spec, n);
        arow.trial = static_cast<long long>(t);
        arow.seed = seed;
        arow.model = "conv-asym";
        arow.loss = "-";
        arow.stop_reason = "limit";
        arow.test_error = bilinear_error(whole.points, aw.w1_inf, aw.w2_inf);
        arow.train_error = bilinear_error(tr.points, aw.w1_inf, aw.w2_inf);
        std::size_t positive = 0;
        for (const DataPoint& p : tr.points) positive += asym_margin(p, aw, spec.k) > 0.0 ? 1 : 0;
        arow.aux_key = "train_points_positive_margin";
        arow.aux_value = std::to_string(positive);
        slots[t].rows.push_back(arow);

        const TrainTrace lin =
            gd_train(Arch::linear, spec.k, tr, detail::onelayer_config(spec), &whole, rng);
        ResultRow lrow = detail::trace_row(spec, n, t, seed, "1layer", Loss::hinge, lin);
        slots[t].rows.push_back(lrow);
        if (spec.dump_weights) slots[t].weights.push_back(detail::dump_of(n, t, lrow, lin.final_weights));
      },
      spec.threads);
  detail::append(res, slots);

  const auto conv_err = detail::column(slots, 0);
  const auto lin_err = detail::column(slots, 1);
  res.rows.push_back(detail::summary_row(spec, n, "conv-asym", "-", conv_err));
  res.rows.push_back(detail::summary_row(spec, n, "1layer", "hinge", lin_err));
  const MeanSE a = mean_se(conv_err);
  const MeanSE b = mean_se(lin_err);
  res.rows.push_back(detail::value_row(spec, n, "conv-asym", "mean_diff_vs_1layer", a.mean - b.mean));
  res.rows.push_back(detail::value_row(spec, n, "conv-asym", "pooled_se", pooled_se(a, b)));
  ResultRow closed = detail::base_row(spec, n);
  closed.model = "1layer-closed-form";
  closed.loss = "-";
  closed.stop_reason = "summary";
  closed.test_error = 0.5 * static_cast<double>(spec.d - tr.positions.size()) / spec.d;
  res.rows.push_back(closed);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  switch (spec.experiment) {
    case Experiment::gen_curve: return run_gen_curve(spec);
    case Experiment::asym_vs_losses: return run_asym_vs_losses(spec);
    case Experiment::init_study: return run_init_study(spec);
    case Experiment::analysis_curves: return run_analysis_curves(spec);
    case Experiment::prop1_check: return run_prop1_check(spec);
    case Experiment::parity_curve: return run_parity_curve(spec);
  }
  throw ConfigError("unknown experiment");
}

// ---------------------------------------------------------------------------
// Output

inline constexpr std::string_view kCsvHeader =
    "experiment,task,d,k,n,trial,seed,model,loss,steps_run,stop_reason,train_error,"
    "test_error,aux_key,aux_value";

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const ResultRow& r : rows) {
    os << r.experiment << ',' << r.task << ',' << r.d << ',' << r.k << ',' << r.n << ','
       << r.trial << ',' << r.seed << ',' << r.model << ',' << r.loss << ','
       << (r.steps_run ? std::to_string(*r.steps_run) : std::string()) << ','
       << r.stop_reason << ',' << opt(r.train_error) << ',' << opt(r.test_error) << ','
       << r.aux_key << ',' << r.aux_value << '\n';
  }
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["experiment"] = std::string(to_string(s.experiment));
  j["task"] = std::string(to_string(s.task));
  j["d"] = s.d;
  j["k"] = s.k;
  j["n"] = s.grid();
  j["trials"] = s.trial_count();
  j["alpha"] = s.alpha;
  j["b"] = s.b;
  j["max_steps"] = s.max_steps;
  j["xhinge_steps"] = s.xhinge_steps;
  j["snapshot_t"] = s.snapshot_t;
  j["seed"] = s.base_seed;
  j["rel_tol"] = s.rel_tol;
  j["w1_draws"] = s.w1_draws;
  return j;
}

inline void write_json(std::ostream& os, const ExperimentSpec& spec,
                       const std::vector<ResultRow>& rows) {
  nlohmann::json j;
  j["spec"] = spec_to_json(spec);
  j["rows"] = nlohmann::json::array();
  for (const ResultRow& r : rows) {
    nlohmann::json o;
    o["experiment"] = r.experiment;
    o["task"] = r.task;
    o["d"] = r.d;
    o["k"] = r.k;
    o["n"] = r.n;
    o["trial"] = r.trial;
    o["seed"] = r.seed;
    o["model"] = r.model;
    o["loss"] = r.loss;
    o["steps_run"] = r.steps_run ? nlohmann::json(*r.steps_run) : nlohmann::json();
    o["stop_reason"] = r.stop_reason;
    o["train_error"] = r.train_error ? nlohmann::json(*r.train_error) : nlohmann::json();
    o["test_error"] = r.test_error ? nlohmann::json(*r.test_error) : nlohmann::json();
    o["aux_key"] = r.aux_key;
    o["aux_value"] = r.aux_value;
    j["rows"].push_back(std::move(o));
  }
  os << j.dump(1) << '\n';
}

inline void write_traces_csv(std::ostream& os, const std::vector<TraceRow>& traces) {
  os << "init,loss,t,train_loss,train_error,test_error\n";
  for (const TraceRow& t : traces) {
    os << t.init << ',' << t.loss << ',' << t.record.t << ',' << format_double(t.record.train_loss)
       << ',' << format_double(t.record.train_error) << ',' << format_double(t.record.test_error)
       << '\n';
  }
}

/// n,trial,model,loss,tensor,values (space separated, row-major).
inline void write_weights_csv(std::ostream& os, const std::vector<WeightDump>& dumps) {
  os << "n,trial,model,loss,tensor,values\n";
  for (const WeightDump& w : dumps) {
    for (const auto& [name, values] : w.tensors) {
      os << w.n << ',' << w.trial << ',' << w.model << ',' << w.loss << ',' << name << ',';
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << ' ';
        os << format_double(values[i]);
      }
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Config files: one key=value per line, '#' starts a comment.

inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace convbias

#endif  // CONVBIAS_HARNESS_HPP
