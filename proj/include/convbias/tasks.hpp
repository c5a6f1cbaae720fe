#ifndef CONVBIAS_TASKS_HPP
#define CONVBIAS_TASKS_HPP

// Synthetic 1-D tasks. Positions are 0-based in code; 1-based only in text
// output (CSV dumps) to match the usual notation.

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "convbias/error.hpp"
#include "convbias/matrix.hpp"
#include "convbias/rng.hpp"

namespace convbias {

enum class Task { cls, first_ctrl, third_ctrl, parity };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::cls: return "cls";
    case Task::first_ctrl: return "1stctrl";
    case Task::third_ctrl: return "3rdctrl";
    case Task::parity: return "parity";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "cls") return Task::cls;
  if (s == "1stctrl") return Task::first_ctrl;
  if (s == "3rdctrl") return Task::third_ctrl;
  if (s == "parity") return Task::parity;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

/// Tasks whose inputs carry a single nonzero entry.
inline bool single_nonzero(Task t) { return t != Task::third_ctrl; }

struct Entry {
  std::size_t pos;
  double value;
};

/// One labelled input. `x` is dense; `support` lists its nonzero entries.
struct DataPoint {
  Vector x;
  int y = 1;
  std::vector<Entry> support;

  static DataPoint from_entries(std::size_t d, std::vector<Entry> entries, int y) {
    DataPoint p;
    p.x.assign(d, 0.0);
    for (const Entry& e : entries) p.x[e.pos] = e.value;
    p.y = y;
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.pos < b.pos; });
    p.support = std::move(entries);
    return p;
  }

  std::size_t dim() const { return x.size(); }

  friend bool operator==(const DataPoint& a, const DataPoint& b) {
    return a.y == b.y && a.x == b.x;
  }
};

struct Dataset {
  std::size_t d = 0;
  Task task = Task::cls;
  std::vector<DataPoint> points;

  std::size_t size() const { return points.size(); }
};

/// Multiset of draws from a whole dataset.
struct TrainingSet {
  std::size_t d = 0;
  Task task = Task::cls;
  std::vector<DataPoint> points;
  /// Sorted distinct nonzero positions (single-nonzero tasks only).
  std::vector<std::size_t> positions;

  std::size_t size() const { return points.size(); }
};

inline void validate_task_dim(Task task, std::size_t d) {
  if (d < 2) throw ConfigError("dimension d must be at least 2");
  if (task == Task::first_ctrl && d % 2 != 0) {
    throw ConfigError("1stctrl needs an even d so the half split is exact");
  }
}

/// Every input of the task at dimension d with its deterministic label.
inline Dataset gen_whole_dataset(Task task, std::size_t d) {
  validate_task_dim(task, d);
  Dataset ds{d, task, {}};
  switch (task) {
    case Task::cls:
      ds.points.reserve(2 * d);
      for (std::size_t l = 0; l < d; ++l) {
        ds.points.push_back(DataPoint::from_entries(d, {{l, 1.0}}, +1));
        ds.points.push_back(DataPoint::from_entries(d, {{l, -1.0}}, -1));
      }
      break;
    case Task::first_ctrl:
      for (std::size_t l = 0; l < d; ++l) {
        ds.points.push_back(DataPoint::from_entries(d, {{l, 1.0}}, l < d / 2 ? -1 : +1));
      }
      break;
    case Task::third_ctrl:
      ds.points.reserve(d * (d - 1));
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          if (a == b) continue;
          ds.points.push_back(
              DataPoint::from_entries(d, {{a, 1.0}, {b, -1.0}}, a < b ? -1 : +1));
        }
      break;
    case Task::parity:
      // 1-based odd positions are labelled +1.
      for (std::size_t l = 0; l < d; ++l) {
        ds.points.push_back(DataPoint::from_entries(d, {{l, 1.0}}, l % 2 == 0 ? +1 : -1));
      }
      break;
  }
  return ds;
}

inline std::vector<std::size_t> nonzero_positions(const std::vector<DataPoint>& pts) {
  std::vector<std::size_t> pos;
  for (const auto& p : pts)
    for (const auto& e : p.support) pos.push_back(e.pos);
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

inline TrainingSet make_training_set(const Dataset& whole, std::vector<DataPoint> pts) {
  TrainingSet tr{whole.d, whole.task, std::move(pts), {}};
  if (single_nonzero(whole.task)) tr.positions = nonzero_positions(tr.points);
  return tr;
}

/// n uniform draws with replacement.
inline TrainingSet sample_training_set(const Dataset& whole, std::size_t n, Rng& rng) {
  if (n == 0) throw ContractViolation("training set size must be at least 1");
  if (whole.points.empty()) throw ContractViolation("cannot sample from an empty dataset");
  std::vector<DataPoint> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(whole.points[rng.index(whole.size())]);
  return make_training_set(whole, std::move(pts));
}

/// A w with y * w^T x > 0 on every point of the whole dataset.
inline Vector linear_separator_witness(Task task, std::size_t d) {
  validate_task_dim(task, d);
  Vector w(d, 1.0);
  switch (task) {
    case Task::cls:
      break;
    case Task::first_ctrl:
      for (std::size_t i = 0; i < d / 2; ++i) w[i] = -1.0;
      break;
    case Task::third_ctrl:
      for (std::size_t i = 0; i < d; ++i) w[i] = static_cast<double>(i + 1);
      break;
    case Task::parity:
      for (std::size_t i = 1; i < d; i += 2) w[i] = -1.0;
      break;
  }
  return w;
}

/// Debug dump: index,y,nonzero_positions:values (1-based positions).
inline void write_dataset_csv(std::ostream& os, const std::vector<DataPoint>& pts) {
  os << "index,y,nonzeros\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    os << i << ',' << pts[i].y << ',';
    for (std::size_t j = 0; j < pts[i].support.size(); ++j) {
      const Entry& e = pts[i].support[j];
      if (j) os << ';';
      os << (e.pos + 1) << ':' << (e.value > 0 ? "+" : "") << e.value;
    }
    os << '\n';
  }
}

}  // namespace convbias

#endif  // CONVBIAS_TASKS_HPP
