#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tabemb/error.hpp"
#include "tabemb/schema.hpp"

namespace tabemb {

/// Bin borders of one numeric column.
///
/// Bin ids are dense: 0 is the lower overflow bin (-inf, b_0), 1..m are the
/// interior bins, m+1 is the upper overflow bin (b_last, +inf).
///
/// Quantile layouts with at least two edges have interior bins
/// [b_i, b_{i+1}), the last one closed. A quantile layout with a single edge
/// (constant column) and every per-value layout use point bins instead: each
/// edge is its own interior bin and values take weight 1 on it.
struct BinLayout {
  std::string column;
  BinPolicy::Kind kind = BinPolicy::Kind::quantile;
  std::vector<double> edges;
  /// Whether values in the outermost interior bins leaning outward share
  /// weight with the adjacent overflow bin.
  bool split_into_overflow = true;

  bool point_bins() const noexcept {
    return kind == BinPolicy::Kind::per_distinct_value || edges.size() == 1;
  }
  std::size_t interior_count() const noexcept { return point_bins() ? edges.size() : edges.size() - 1; }
  std::size_t bin_count() const noexcept { return interior_count() + 2; }
  static constexpr std::size_t lower_overflow() noexcept { return 0; }
  std::size_t upper_overflow() const noexcept { return interior_count() + 1; }

  friend bool operator==(const BinLayout&, const BinLayout&) = default;
};

struct BinAssignment {
  std::size_t primary_bin = 0;
  double primary_weight = 1.0;
  std::optional<std::size_t> secondary_bin;
  double secondary_weight = 0.0;
};

/// Fits borders on the non-missing training values of one column.
///
/// Quantile edges use the nearest-rank rule on sorted values: edge j of k is
/// the value of rank ceil(j*N/k) (rank 1 for j = 0), then repeated edges
/// collapse.
inline BinLayout fit_bins(std::vector<double> values, const BinPolicy& policy, std::string column = {}) {
  if (values.empty()) throw EmptyColumn(column);
  std::sort(values.begin(), values.end());
  BinLayout layout;
  layout.column = std::move(column);
  layout.kind = policy.kind;
  if (policy.kind == BinPolicy::Kind::per_distinct_value) {
    layout.edges = values;
  } else {
    if (policy.bins < 1) throw InvalidArgument("quantile bin count must be >= 1");
    const std::size_t n = values.size();
    const std::size_t k = policy.bins;
    layout.edges.reserve(k + 1);
    for (std::size_t j = 0; j <= k; ++j) {
      const std::size_t rank = j == 0 ? 1 : (j * n + k - 1) / k;
      layout.edges.push_back(values[rank - 1]);
    }
  }
  layout.edges.erase(std::unique(layout.edges.begin(), layout.edges.end()), layout.edges.end());
  return layout;
}

inline BinLayout fit_bins(const std::vector<std::optional<double>>& column, const BinPolicy& policy,
                          std::string name = {}) {
  std::vector<double> values;
  values.reserve(column.size());
  for (const auto& v : column)
    if (v) values.push_back(*v);
  return fit_bins(std::move(values), policy, std::move(name));
}

/// Bin membership of `x`. Inside an interior bin [b_i, b_{i+1}] the primary
/// weight is
///   p(x) = 0.5 + (x - b_i) / (b_{i+1} - b_i)   for x <= (b_i + b_{i+1}) / 2
///   p(x) = 0.5 + (b_{i+1} - x) / (b_{i+1} - b_i) otherwise,
/// and the neighbour on the side x leans towards gets 1 - p(x).
inline BinAssignment assign(double x, const BinLayout& layout) {
  const auto& e = layout.edges;
  BinAssignment a;
  if (x < e.front()) {
    a.primary_bin = BinLayout::lower_overflow();
    return a;
  }
  if (x > e.back()) {
    a.primary_bin = layout.upper_overflow();
    return a;
  }
  if (layout.point_bins()) {
    // Nearest point; ties go to the higher one.
    auto hi = std::lower_bound(e.begin(), e.end(), x);
    std::size_t idx = static_cast<std::size_t>(hi - e.begin());
    if (*hi != x && idx > 0 && (x - e[idx - 1]) < (*hi - x)) --idx;
    a.primary_bin = idx + 1;
    return a;
  }

  const std::size_t m = e.size() - 1;  // interior bin count
  std::size_t i = static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), x) - e.begin()) - 1;
  if (i >= m) i = m - 1;  // x == b_m belongs to the closed last bin
  const double lo = e[i], hi = e[i + 1];
  const double width = hi - lo;
  const std::size_t bin = i + 1;

  double p;
  std::size_t neighbour;
  if (x <= (lo + hi) / 2) {
    p = 0.5 + (x - lo) / width;
    neighbour = bin - 1;
  } else {
    p = 0.5 + (hi - x) / width;
    neighbour = bin + 1;
  }
  p = std::clamp(p, 0.5, 1.0);
  a.primary_bin = bin;
  const bool overflow_neighbour = neighbour == BinLayout::lower_overflow() || neighbour == layout.upper_overflow();
  if (p == 1.0 || (overflow_neighbour && !layout.split_into_overflow)) return a;
  a.primary_weight = p;
  a.secondary_bin = neighbour;
  a.secondary_weight = 1.0 - p;
  return a;
}

/// Half-open-ish interval of a bin for display; overflow bins extend to
/// +-infinity.
inline std::pair<double, double> bin_interval(const BinLayout& layout, std::size_t bin) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto& e = layout.edges;
  if (bin == BinLayout::lower_overflow()) return {-inf, e.front()};
  if (bin >= layout.upper_overflow()) return {e.back(), inf};
  if (layout.point_bins()) return {e[bin - 1], e[bin - 1]};
  return {e[bin - 1], e[bin]};
}

}  // namespace tabemb
