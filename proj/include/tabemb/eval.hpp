#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tabemb/embedding.hpp"
#include "tabemb/error.hpp"
#include "tabemb/table.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

enum class DistanceMetric { euclidean, cosine };
enum class PredictMode { normalized, unnormalized };
enum class Task { classification, regression };

NLOHMANN_JSON_SERIALIZE_ENUM(DistanceMetric, {{DistanceMetric::euclidean, "euclidean"},
                                              {DistanceMetric::cosine, "cosine"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PredictMode, {{PredictMode::normalized, "normalized"},
                                           {PredictMode::unnormalized, "unnormalized"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Task, {{Task::classification, "classification"},
                                    {Task::regression, "regression"}})

struct Neighbor {
  std::size_t index;  // into the training list
  double distance;
};

struct NeighborSet {
  std::size_t k = 0;
  std::vector<Neighbor> entries;  // ascending distance, ties by index
};

inline double distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, DistanceMetric metric) {
  if (metric == DistanceMetric::euclidean) return (a - b).norm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::max(0.0, 1.0 - a.dot(b) / (na * nb));
}

/// Exact k nearest training rows. Training rows with an undefined embedding
/// are never returned.
inline NeighborSet knn(const Eigen::VectorXd& query, std::span<const RowEmbedding> train, std::size_t k,
                       DistanceMetric metric = DistanceMetric::euclidean) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<Neighbor> all;
  all.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].defined()) all.push_back({i, distance(query, train[i].vector, metric)});
  if (all.empty()) throw InvalidArgument("k-NN needs at least one training row");
  const std::size_t take = std::min(k, all.size());
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), less);
  all.resize(take);
  return {k, std::move(all)};
}

/// Inverse-distance prediction from `neighbors` (the first `limit` entries
/// when given).
///
/// normalized: sum(y_i / d_i) / sum(1 / d_i); exact matches (d = 0) short-
/// circuit to the mean target of the exact matches.
/// unnormalized: the raw sum(y_i / d_i); zero distances are an error.
inline double predict(const NeighborSet& neighbors, std::span<const double> targets,
                      PredictMode mode = PredictMode::normalized, std::optional<std::size_t> limit = std::nullopt) {
  const std::size_t n = std::min(limit.value_or(neighbors.entries.size()), neighbors.entries.size());
  if (n == 0) throw InvalidArgument("prediction needs at least one neighbor");
  double num = 0.0, den = 0.0, exact_sum = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = neighbors.entries[i];
    if (nb.index >= targets.size()) throw InvalidArgument("neighbor index outside the target list");
    const double y = targets[nb.index];
    lo = std::min(lo, y);
    hi = std::max(hi, y);
    if (nb.distance == 0.0) {
      if (mode == PredictMode::unnormalized) throw ZeroDistance();
      exact_sum += y;
      ++exact;
      continue;
    }
    num += y / nb.distance;
    den += 1.0 / nb.distance;
  }
  if (mode == PredictMode::unnormalized) return num;
  // Rounding can push the quotients an ulp outside the neighbor targets.
  if (exact > 0) return std::clamp(exact_sum / static_cast<double>(exact), lo, hi);
  return std::clamp(num / den, lo, hi);
}

/// Area under the ROC curve via the Mann-Whitney U statistic with average
/// ranks for ties (a tied positive/negative pair counts one half).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw SingleClass();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks i+1 .. j+1 share their average
    const double avg = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum_pos += avg;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("prediction and truth differ in length");
  if (pred.empty()) throw EmptyInput();
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

/// Rows with zero truth are left out and counted in `excluded_zero`.
inline double rmspe(std::span<const double> pred, std::span<const double> truth,
                    std::size_t* excluded_zero = nullptr) {
  if (pred.size() != truth.size()) throw InvalidArgument("prediction and truth differ in length");
  double s = 0.0;
  std::size_t used = 0, skipped = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] == 0.0) {
      ++skipped;
      continue;
    }
    const double r = (truth[i] - pred[i]) / truth[i];
    s += r * r;
    ++used;
  }
  if (excluded_zero) *excluded_zero = skipped;
  if (used == 0) throw EmptyInput();
  return std::sqrt(s / static_cast<double>(used));
}

struct MetricReport {
  Task task = Task::classification;
  std::optional<double> auc;
  std::optional<double> rmse;
  std::optional<double> rmspe;
  std::size_t n_test = 0;  // rows that entered the metric
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t excluded_missing_target = 0;
  std::size_t excluded_undefined = 0;
  std::size_t excluded_zero_truth = 0;
};

struct DimEmbeddings {
  std::size_t d = 0;
  std::vector<RowEmbedding> train;
  std::vector<RowEmbedding> test;
};

struct EvalOptions {
  std::vector<std::size_t> ks{10};
  DistanceMetric metric = DistanceMetric::euclidean;
  PredictMode mode = PredictMode::normalized;
};

/// One report per (d, k). Training rows without a target or embedding are
/// left out of the neighbor pool; such test rows are left out of the metric.
inline std::vector<MetricReport> evaluate(Task task, const std::vector<DimEmbeddings>& dims,
                                          const RealColumn& train_targets, const RealColumn& test_targets,
                                          const EvalOptions& options) {
  if (options.ks.empty()) throw InvalidArgument("no k values to evaluate");
  const std::size_t k_max = *std::max_element(options.ks.begin(), options.ks.end());
  std::vector<MetricReport> reports;

  for (const auto& de : dims) {
    if (de.train.size() != train_targets.size() || de.test.size() != test_targets.size())
      throw InvalidArgument("embedding and target counts differ");
    std::vector<RowEmbedding> pool;
    std::vector<double> pool_targets;
    for (std::size_t i = 0; i < de.train.size(); ++i) {
      if (!de.train[i].defined() || !train_targets[i]) continue;
      pool.push_back(de.train[i]);
      pool_targets.push_back(*train_targets[i]);
    }

    std::size_t missing = 0, undefined = 0;
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < de.test.size(); ++i) {
      if (!test_targets[i])
        ++missing;
      else if (!de.test[i].defined())
        ++undefined;
      else
        used.push_back(i);
    }
    std::vector<NeighborSet> neighbors;
    neighbors.reserve(used.size());
    for (auto i : used) neighbors.push_back(knn(de.test[i].vector, pool, k_max, options.metric));

    for (auto k : options.ks) {
      MetricReport rep;
      rep.task = task;
      rep.d = de.d;
      rep.k = k;
      rep.excluded_missing_target = missing;
      rep.excluded_undefined = undefined;
      std::vector<double> pred, truth;
      for (std::size_t t = 0; t < used.size(); ++t) {
        pred.push_back(predict(neighbors[t], pool_targets, options.mode, k));
        truth.push_back(*test_targets[used[t]]);
      }
      rep.n_test = used.size();
      if (task == Task::classification) {
        std::vector<int> labels;
        for (double y : truth) {
          if (y != 0.0 && y != 1.0) throw InvalidArgument("classification targets must be 0 or 1");
          labels.push_back(static_cast<int>(y));
        }
        rep.auc = auc(pred, labels);
      } else {
        rep.rmse = rmse(pred, truth);
        rep.rmspe = rmspe(pred, truth, &rep.excluded_zero_truth);
      }
      reports.push_back(rep);
    }
  }
  return reports;
}

/// "d<TAB>k<TAB>metric<TAB>value" lines.
inline void write_metric_table(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "d\tk\tmetric\tvalue\n";
  for (const auto& r : reports) {
    auto line = [&](const char* name, const std::optional<double>& v) {
      if (v) out << r.d << '\t' << r.k << '\t' << name << '\t' << format_real(*v) << '\n';
    };
    line("auc", r.auc);
    line("rmse", r.rmse);
    line("rmspe", r.rmspe);
  }
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"task", r.task},
                   {"d", r.d},
                   {"k", r.k},
                   {"n_test", r.n_test},
                   {"excluded_missing_target", r.excluded_missing_target},
                   {"excluded_undefined", r.excluded_undefined},
                   {"excluded_zero_truth", r.excluded_zero_truth}};
  if (r.auc) j["auc"] = *r.auc;
  if (r.rmse) j["rmse"] = *r.rmse;
  if (r.rmspe) j["rmspe"] = *r.rmspe;
  return j;
}

/// Wide table for dimension-sweep plots: one line per d, one column per k,
/// holding the task's headline metric (AUC or RMSPE).
inline void write_plot_data(std::ostream& out, const std::vector<MetricReport>& reports) {
  std::map<std::size_t, std::map<std::size_t, double>> grid;
  std::vector<std::size_t> ks;
  for (const auto& r : reports) {
    const auto v = r.task == Task::classification ? r.auc : r.rmspe;
    if (!v) continue;
    grid[r.d][r.k] = *v;
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
  }
  std::sort(ks.begin(), ks.end());
  out << 'd';
  for (auto k : ks) out << "\tk=" << k;
  out << '\n';
  for (const auto& [d, row] : grid) {
    out << d;
    for (auto k : ks) {
      out << '\t';
      if (auto it = row.find(k); it != row.end()) out << format_real(it->second);
    }
    out << '\n';
  }
}

}  // namespace tabemb
