#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tabemb/binning.hpp"
#include "tabemb/error.hpp"
#include "tabemb/table.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

using LayoutMap = std::map<std::string, BinLayout>;

/// Fits a layout for every numeric column of `table`.
inline LayoutMap fit_layouts(const TypedTable& table, bool split_into_overflow = true) {
  LayoutMap layouts;
  for (const auto& spec : table.schema.columns) {
    if (spec.role != ColumnRole::numeric) continue;
    auto layout = fit_bins(table.numeric.at(spec.name), spec.bin_policy, spec.name);
    layout.split_into_overflow = split_into_overflow;
    layouts.emplace(spec.name, std::move(layout));
  }
  return layouts;
}

struct Entity {
  enum class Kind : std::uint8_t { categorical = 0, bin = 1 };
  std::string column;
  Kind kind = Kind::categorical;
  std::string value;    // categorical value
  std::size_t bin = 0;  // bin id within the column's layout

  /// Stable human-readable key, unique within a catalog.
  std::string key() const {
    return kind == Kind::categorical ? column + "=" + value : column + "#" + std::to_string(bin);
  }

  friend bool operator==(const Entity&, const Entity&) = default;
};

/// Graph nodes. Ids are assigned in canonical order: columns by name, then
/// categorical values lexicographically or bins by id. The ordering depends
/// only on the set of (column, value) pairs, never on row or column order.
class EntityCatalog {
 public:
  EntityCatalog() = default;

  explicit EntityCatalog(std::vector<Entity> entries) : entries_(std::move(entries)) { index(); }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entity>& entries() const noexcept { return entries_; }
  const Entity& operator[](std::size_t id) const { return entries_.at(id); }

  std::optional<std::size_t> categorical(const std::string& column, const std::string& value) const {
    auto it = categorical_.find({column, value});
    if (it == categorical_.end()) return std::nullopt;
    return it->second;
  }

  /// Node id of a numeric column's bin.
  std::optional<std::size_t> bin(const std::string& column, std::size_t bin_id) const {
    auto it = bin_base_.find(column);
    if (it == bin_base_.end() || bin_id >= it->second.second) return std::nullopt;
    return it->second.first + bin_id;
  }

  friend bool operator==(const EntityCatalog& a, const EntityCatalog& b) { return a.entries_ == b.entries_; }

 private:
  void index() {
    for (std::size_t id = 0; id < entries_.size(); ++id) {
      const auto& e = entries_[id];
      if (e.kind == Entity::Kind::categorical) {
        if (!categorical_.emplace(std::pair{e.column, e.value}, id).second)
          throw InvalidArgument("duplicate entity " + e.key());
      } else {
        // Bins of one column are contiguous and start at bin 0.
        if (e.bin == 0 && !bin_base_.emplace(e.column, std::pair<std::size_t, std::size_t>{id, 0}).second)
          throw InvalidArgument("duplicate entity " + e.key());
        auto it = bin_base_.find(e.column);
        if (it == bin_base_.end() || e.bin != it->second.second || id != it->second.first + e.bin)
          throw InvalidArgument("bins of column '" + e.column + "' are not contiguous");
        ++it->second.second;
      }
    }
  }

  std::vector<Entity> entries_;
  std::map<std::pair<std::string, std::string>, std::size_t> categorical_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> bin_base_;  // first id, count
};

inline EntityCatalog build_catalog(const TypedTable& table, const LayoutMap& layouts) {
  // Column name order, independent of schema order.
  std::map<std::string, ColumnRole> roles;
  for (const auto& spec : table.schema.columns)
    if (spec.is_feature()) roles.emplace(spec.name, spec.role);

  std::vector<Entity> entries;
  for (const auto& [name, role] : roles) {
    if (role == ColumnRole::categorical) {
      std::vector<std::string> values;
      for (const auto& v : table.categorical.at(name))
        if (v) values.push_back(*v);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (auto& v : values) entries.push_back({name, Entity::Kind::categorical, std::move(v), 0});
    } else {
      auto it = layouts.find(name);
      if (it == layouts.end()) {
        if (table.n_rows == 0) continue;
        throw InvalidArgument("no bin layout for numeric column '" + name + "'");
      }
      for (std::size_t b = 0; b < it->second.bin_count(); ++b)
        entries.push_back({name, Entity::Kind::bin, {}, b});
    }
  }
  return EntityCatalog(std::move(entries));
}

struct IncidencePair {
  std::size_t node = 0;
  double weight = 0.0;

  friend bool operator==(const IncidencePair&, const IncidencePair&) = default;
};

enum class UnknownPolicy { skip, error };

/// Entity weights per table row, sorted by node id. Missing cells add
/// nothing; unknown categorical values are skipped or rejected per policy.
struct RowIncidence {
  std::vector<std::vector<IncidencePair>> rows;
  std::size_t unknown_skipped = 0;
};

namespace detail {

struct FeatureColumn {
  const ColumnSpec* spec;
  const TextColumn* text = nullptr;
  const RealColumn* real = nullptr;
  const BinLayout* layout = nullptr;
};

inline std::vector<FeatureColumn> feature_columns(const TypedTable& table, const LayoutMap& layouts) {
  std::vector<FeatureColumn> cols;
  for (const auto& spec : table.schema.columns) {
    if (spec.role == ColumnRole::categorical) {
      cols.push_back({&spec, &table.categorical.at(spec.name)});
    } else if (spec.role == ColumnRole::numeric) {
      auto it = layouts.find(spec.name);
      if (it == layouts.end()) throw InvalidArgument("no bin layout for numeric column '" + spec.name + "'");
      cols.push_back({&spec, nullptr, &table.numeric.at(spec.name), &it->second});
    }
  }
  return cols;
}

inline void append_cell(std::vector<IncidencePair>& out, const FeatureColumn& col, std::size_t row,
                        const EntityCatalog& catalog, UnknownPolicy policy, std::size_t& unknown) {
  if (col.text) {
    const auto& cell = (*col.text)[row];
    if (!cell) return;
    if (auto id = catalog.categorical(col.spec->name, *cell)) {
      out.push_back({*id, 1.0});
    } else if (policy == UnknownPolicy::error) {
      throw UnknownEntity(col.spec->name, *cell);
    } else {
      ++unknown;
    }
    return;
  }
  const auto& cell = (*col.real)[row];
  if (!cell) return;
  const auto base = catalog.bin(col.spec->name, 0);
  if (!base) throw UnknownEntity(col.spec->name, format_real(*cell));
  const auto a = assign(*cell, *col.layout);
  out.push_back({*base + a.primary_bin, a.primary_weight});
  if (a.secondary_bin) out.push_back({*base + *a.secondary_bin, a.secondary_weight});
}

}  // namespace detail

inline RowIncidence build_incidence(const TypedTable& table, const EntityCatalog& catalog,
                                    const LayoutMap& layouts, UnknownPolicy policy = UnknownPolicy::error) {
  const auto cols = detail::feature_columns(table, layouts);
  RowIncidence inc;
  inc.rows.resize(table.n_rows);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    auto& pairs = inc.rows[r];
    for (const auto& col : cols) detail::append_cell(pairs, col, r, catalog, policy, inc.unknown_skipped);
    std::sort(pairs.begin(), pairs.end(),
              [](const IncidencePair& a, const IncidencePair& b) { return a.node < b.node; });
  }
  return inc;
}

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;  // i <= j
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Entity-only graph. Edges are unique, sorted by (i, j), with i <= j.
struct WeightedGraph {
  std::size_t n = 0;
  bool self_loops = true;
  std::vector<Edge> edges;

  friend bool operator==(const WeightedGraph&, const WeightedGraph&) = default;
};

/// Eliminates row nodes: every row adds w(u) * w(v) to edge (u, v) for each
/// pair of its entities, and w(u)^2 to (u, u) when self loops are on.
///
/// Per edge, the contributions are kept as a multiset (value -> count) and
/// summed in ascending value order, so the result is bit-identical for any
/// row order.
inline WeightedGraph reduce(const RowIncidence& incidence, std::size_t n, bool self_loops = true) {
  struct Contribution {
    double value;
    std::uint64_t count;
  };
  std::unordered_map<std::uint64_t, std::vector<Contribution>> acc;
  auto key = [n](std::size_t i, std::size_t j) { return static_cast<std::uint64_t>(i) * n + j; };
  auto add = [&](std::size_t i, std::size_t j, double w) {
    if (w == 0.0) return;
    auto& list = acc[key(i, j)];
    for (auto& c : list)
      if (c.value == w) {
        ++c.count;
        return;
      }
    list.push_back({w, 1});
  };

  for (const auto& row : incidence.rows) {
    for (std::size_t a = 0; a < row.size(); ++a) {
      if (row[a].node >= n) throw InvalidArgument("incidence references node outside the graph");
      if (self_loops) add(row[a].node, row[a].node, row[a].weight * row[a].weight);
      for (std::size_t b = a + 1; b < row.size(); ++b) {
        auto u = row[a].node, v = row[b].node;
        if (u > v) std::swap(u, v);
        add(u, v, row[a].weight * row[b].weight);
      }
    }
  }

  WeightedGraph g;
  g.n = n;
  g.self_loops = self_loops;
  g.edges.reserve(acc.size());
  for (auto& [k, list] : acc) {
    std::sort(list.begin(), list.end(), [](const Contribution& x, const Contribution& y) { return x.value < y.value; });
    double sum = 0.0;
    for (const auto& c : list) sum += c.value * static_cast<double>(c.count);
    if (sum != 0.0) g.edges.push_back({static_cast<std::size_t>(k / n), static_cast<std::size_t>(k % n), sum});
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const Edge& x, const Edge& y) { return x.i != y.i ? x.i < y.i : x.j < y.j; });
  return g;
}

/// "i<TAB>j<TAB>weight" per edge, sorted by (i, j).
inline void write_edge_list(std::ostream& out, const WeightedGraph& g) {
  for (const auto& e : g.edges) out << e.i << '\t' << e.j << '\t' << format_real(e.weight) << '\n';
}

}  // namespace tabemb
