#pragma once

// Shared fixtures and independent reference implementations ("oracles") for
// the unit and acceptance suites. Oracles deliberately avoid the library's
// code paths: plain loops over std::vector, no Eigen.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabemb/pipeline.hpp"

#ifndef TABEMB_SOURCE_DIR
#define TABEMB_SOURCE_DIR "."
#endif

namespace fixtures {

using namespace tabemb;

inline std::filesystem::path source_dir() { return TABEMB_SOURCE_DIR; }

// Six rows, no missing cells; two categorical, one quantile and one
// per-value numeric column.
inline const char* kToyCsv =
    "id,color,size,x,n,label\n"
    "1,red,S,1.0,0,1\n"
    "2,blue,M,2.5,1,0\n"
    "3,red,L,4.0,0,1\n"
    "4,green,S,5.5,2,0\n"
    "5,blue,M,7.0,1,1\n"
    "6,red,L,9.0,0,0\n";

inline TableSchema toy_schema() {
  TableSchema s;
  s.columns = {
      {"id", ColumnRole::excluded, {}, TargetKind::binary, ValueTransform::none},
      {"color", ColumnRole::categorical, {}, TargetKind::binary, ValueTransform::none},
      {"size", ColumnRole::categorical, {}, TargetKind::binary, ValueTransform::none},
      {"x", ColumnRole::numeric, BinPolicy::quantile(3), TargetKind::binary, ValueTransform::none},
      {"n", ColumnRole::numeric, BinPolicy::per_distinct_value(), TargetKind::binary, ValueTransform::none},
      {"label", ColumnRole::target, {}, TargetKind::binary, ValueTransform::none},
  };
  return s;
}

inline TypedTable toy_table() { return parse_table_text(kToyCsv, toy_schema()); }

struct ToyGraph {
  LayoutMap layouts;
  EntityCatalog catalog;
  RowIncidence incidence;
  WeightedGraph graph;
};

inline ToyGraph build(const TypedTable& t, bool self_loops = true) {
  ToyGraph g;
  g.layouts = fit_layouts(t);
  g.catalog = build_catalog(t, g.layouts);
  g.incidence = build_incidence(t, g.catalog, g.layouts);
  g.graph = reduce(g.incidence, g.catalog.size(), self_loops);
  return g;
}

inline std::string edge_list(const WeightedGraph& g) {
  std::ostringstream s;
  write_edge_list(s, g);
  return s.str();
}

inline TableSchema titanic_schema() { return load_schema((source_dir() / "configs/titanic_schema.json").string()); }
inline std::string titanic_csv() { return (source_dir() / "tests/data/titanic.csv").string(); }

/// Re-serializes `csv` with rows shuffled and columns reversed (schema
/// reordered to match).
inline std::pair<std::string, TableSchema> shuffled(const std::string& csv, const TableSchema& schema,
                                                    std::uint64_t seed) {
  auto recs = read_records(csv, ',');
  std::vector<std::vector<std::string>> body(recs.begin() + 1, recs.end());
  SplitMix64 rng(seed);
  for (std::size_t i = body.size(); i > 1; --i) std::swap(body[i - 1], body[rng.below(i)]);
  auto rev = [](std::vector<std::string> r) {
    std::reverse(r.begin(), r.end());
    return r;
  };
  std::string out;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t j = 0; j < r.size(); ++j) out += (j ? "," : "") + quote_field(r[j], ',');
    out += '\n';
  };
  emit(rev(recs[0]));
  for (const auto& r : body) emit(rev(r));
  TableSchema s = schema;
  std::reverse(s.columns.begin(), s.columns.end());
  return {out, s};
}

// --- oracles ---------------------------------------------------------------

/// Piecewise-linear bin weight written out directly for a value inside interior bin [lo, hi].
inline double bin_weight_oracle(double x, double lo, double hi) {
  const double w = hi - lo;
  return x <= (lo + hi) / 2 ? 0.5 + (x - lo) / w : 0.5 + (hi - x) / w;
}

using Grid = std::vector<std::vector<double>>;

/// Two-step entity -> row -> entity walk on the bipartite graph, enumerated
/// edge by edge.
inline Grid bipartite_two_step(const RowIncidence& inc, std::size_t n) {
  std::vector<double> entity_degree(n, 0.0);
  std::vector<double> row_degree(inc.rows.size(), 0.0);
  for (std::size_t r = 0; r < inc.rows.size(); ++r)
    for (const auto& p : inc.rows[r]) {
      entity_degree[p.node] += p.weight;
      row_degree[r] += p.weight;
    }
  Grid t(n, std::vector<double>(n, 0.0));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t r = 0; r < inc.rows.size(); ++r)
      for (const auto& pu : inc.rows[r]) {
        if (pu.node != u) continue;
        const double to_row = pu.weight / entity_degree[u];
        for (const auto& pv : inc.rows[r]) t[u][pv.node] += to_row * pv.weight / row_degree[r];
      }
  return t;
}

inline Grid to_grid(const DenseMatrix& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline Grid matmul(const Grid& a, const Grid& b) {
  Grid c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

/// Straight-line loss for propagation P, weights W, target T.
inline double loss_oracle(const Grid& p, const Grid& w, const Grid& t, double alpha) {
  const Grid z = matmul(p, w);
  double sq = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = 0; j < z.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < z[0].size(); ++k) dot += z[i][k] * z[j][k];
      const double diff = 1.0 / (1.0 + std::exp(-dot)) - t[i][j];
      sq += diff * diff;
      l1 += std::abs(diff);
    }
  return (1.0 - alpha) * std::sqrt(sq) + alpha * l1;
}

/// Central finite differences of loss_oracle with respect to W.
inline Grid fd_gradient(const Grid& p, Grid w, const Grid& t, double alpha, double h = 1e-6) {
  Grid g(w.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      const double keep = w[i][j];
      w[i][j] = keep + h;
      const double up = loss_oracle(p, w, t, alpha);
      w[i][j] = keep - h;
      const double down = loss_oracle(p, w, t, alpha);
      w[i][j] = keep;
      g[i][j] = (up - down) / (2 * h);
    }
  return g;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties one half.
inline double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return hits / pairs;
}

/// Synthetic daily store sales: store level x day-of-week x promo effects
/// plus noise, newest rows first. Stores with Open=0 rows included.
inline std::string store_sales_csv(std::size_t stores, std::size_t days, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> level(stores);
  for (auto& l : level) l = rng.uniform(3000.0, 12000.0);
  const double dow_effect[7] = {1.25, 1.05, 1.0, 0.95, 1.1, 0.9, 0.6};
  std::ostringstream out;
  out << "Store,DayOfWeek,Date,Sales,Customers,Open,Promo,StateHoliday,SchoolHoliday\n";
  for (std::size_t day = days; day-- > 0;) {
    // 2015-01-01 is a Thursday (DayOfWeek 4, Monday = 1).
    const int dow = static_cast<int>((day + 3) % 7) + 1;
    const int doy = static_cast<int>(day) + 1;
    const int month = doy <= 31 ? 1 : doy <= 59 ? 2 : doy <= 90 ? 3 : doy <= 120 ? 4 : doy <= 151 ? 5 : 6;
    const int mday = doy - (month == 1 ? 0 : month == 2 ? 31 : month == 3 ? 59 : month == 4 ? 90 : month == 5 ? 120 : 151);
    const bool promo = (day / 7) % 2 == 0 && dow <= 5;
    const bool school = (day % 30) < 6;
    const char holiday = (day % 45) == 0 ? 'a' : '0';
    char date[16];
    std::snprintf(date, sizeof date, "2015-%02d-%02d", month, mday);
    for (std::size_t s = 0; s < stores; ++s) {
      const bool open = dow != 7 && holiday == '0';
      double sales = 0.0;
      if (open)
        sales = std::round(level[s] * dow_effect[dow - 1] * (promo ? 1.3 : 1.0) * (school ? 1.05 : 1.0) *
                           rng.uniform(0.93, 1.07));
      out << s + 1 << ',' << dow << ',' << date << ',' << sales << ',' << static_cast<int>(sales / 9) << ','
          << (open ? 1 : 0) << ',' << (promo ? 1 : 0) << ',' << holiday << ',' << (school ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

inline TableSchema store_sales_schema() {
  return load_schema((source_dir() / "configs/rossmann_schema.json").string());
}

/// A per-test scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("tabemb_" + tag + "_" + std::to_string(fnv1a64(tag) ^ static_cast<std::uint64_t>(::getpid())));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace fixtures
