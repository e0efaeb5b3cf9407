#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tabemb/error.hpp"
#include "tabemb/schema.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

using TextColumn = std::vector<std::optional<std::string>>;
using RealColumn = std::vector<std::optional<double>>;

/// A table after schema application. Excluded columns are kept as text so
/// they can still drive row filters; they never reach the graph.
struct TypedTable {
  TableSchema schema;
  std::size_t n_rows = 0;
  std::map<std::string, TextColumn> categorical;
  std::map<std::string, RealColumn> numeric;
  std::map<std::string, TextColumn> excluded;
  std::optional<RealColumn> target;

  TypedTable select(const std::vector<std::size_t>& rows) const {
    TypedTable out;
    out.schema = schema;
    out.n_rows = rows.size();
    auto pick = [&](const auto& col) {
      std::decay_t<decltype(col)> r;
      r.reserve(rows.size());
      for (auto i : rows) r.push_back(col[i]);
      return r;
    };
    for (const auto& [k, v] : categorical) out.categorical.emplace(k, pick(v));
    for (const auto& [k, v] : numeric) out.numeric.emplace(k, pick(v));
    for (const auto& [k, v] : excluded) out.excluded.emplace(k, pick(v));
    if (target) out.target = pick(*target);
    return out;
  }

  friend bool operator==(const TypedTable& a, const TypedTable& b) {
    return a.n_rows == b.n_rows && a.categorical == b.categorical && a.numeric == b.numeric &&
           a.excluded == b.excluded && a.target == b.target;
  }
};

// --- delimited text --------------------------------------------------------

/// RFC 4180 records: quoted fields may hold delimiters, doubled quotes and
/// line breaks. Accepts LF or CRLF line ends. Blank lines are skipped, so a
/// single-column record holding an empty value must be written as "".
inline std::vector<std::vector<std::string>> read_records(std::string_view text, char delim) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool record_open = false;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(fields));
    fields.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      record_open = true;
    } else if (c == delim) {
      end_field();
      record_open = true;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // handled by the '\n' branch
    } else if (c == '\n') {
      if (record_open || !fields.empty())
        end_record();  // blank lines are skipped
    } else {
      field.push_back(c);
      field_started = true;
      record_open = true;
    }
  }
  if (in_quotes) throw InvalidArgument("unterminated quoted field at end of input");
  if (record_open || !fields.empty()) end_record();
  return records;
}

inline std::string quote_field(std::string_view s, char delim) {
  const bool needs = s.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos ||
                     (!s.empty() && (s.front() == ' ' || s.back() == ' '));
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

namespace detail {

inline bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

struct IsoDate {
  int year, month, day;
};

inline std::optional<IsoDate> parse_iso_date(std::string_view s) {
  s = trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
  if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1) return std::nullopt;
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const int dim = kDays[*m - 1] + ((*m == 2 && is_leap(*y)) ? 1 : 0);
  if (*d > dim) return std::nullopt;
  return IsoDate{*y, *m, *d};
}

inline std::optional<double> apply_transform(ValueTransform t, std::string_view cell) {
  if (t == ValueTransform::none) return parse_real(cell);
  const auto date = parse_iso_date(cell);
  if (!date) return std::nullopt;
  switch (t) {
    case ValueTransform::month:
      return date->month;
    case ValueTransform::day_of_month:
      return date->day;
    case ValueTransform::day_of_year: {
      static constexpr int kBefore[] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
      int doy = kBefore[date->month - 1] + date->day;
      if (date->month > 2 && is_leap(date->year)) ++doy;
      return doy;
    }
    case ValueTransform::none:
      break;
  }
  return std::nullopt;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Applies `schema` to delimited text.
inline TypedTable parse_table_text(std::string_view text, const TableSchema& schema) {
  schema.validate();
  // Strip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  auto records = read_records(text, schema.delimiter);

  // Map schema column -> position in the file.
  std::vector<std::size_t> position(schema.columns.size());
  std::size_t first_data = 0;
  std::size_t width = schema.columns.size();
  if (schema.has_header) {
    if (records.empty()) throw MissingColumn(schema.columns.front().name);
    const auto& header = records.front();
    width = header.size();
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
      if (it == header.end()) throw MissingColumn(schema.columns[c].name);
      position[c] = static_cast<std::size_t>(it - header.begin());
    }
    for (const auto& h : header)
      if (!schema.find(h)) throw SchemaError("file column '" + h + "' is not declared in the schema");
    first_data = 1;
  } else {
    for (std::size_t c = 0; c < position.size(); ++c) position[c] = c;
  }

  TypedTable t;
  t.schema = schema;
  t.n_rows = records.size() - first_data;
  for (const auto& c : schema.columns) {
    switch (c.role) {
      case ColumnRole::categorical:
        t.categorical[c.name].reserve(t.n_rows);
        break;
      case ColumnRole::numeric:
        t.numeric[c.name].reserve(t.n_rows);
        break;
      case ColumnRole::excluded:
        t.excluded[c.name].reserve(t.n_rows);
        break;
      case ColumnRole::target:
        t.target.emplace().reserve(t.n_rows);
        break;
    }
  }

  for (std::size_t r = first_data; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row = r - first_data;
    if (rec.size() != width)
      throw InvalidArgument("data row " + std::to_string(row) + " has " + std::to_string(rec.size()) +
                            " fields, expected " + std::to_string(width));
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const std::string& cell = rec[position[c]];
      const bool missing = schema.is_missing(cell);
      switch (spec.role) {
        case ColumnRole::categorical:
          t.categorical[spec.name].push_back(missing ? std::nullopt : std::optional<std::string>(cell));
          break;
        case ColumnRole::excluded:
          t.excluded[spec.name].push_back(missing ? std::nullopt : std::optional<std::string>(cell));
          break;
        case ColumnRole::numeric:
        case ColumnRole::target: {
          std::optional<double> v;
          if (!missing) {
            v = detail::apply_transform(spec.transform, cell);
            if (!v) throw NonNumericCell(spec.name, row, cell);
          }
          (spec.role == ColumnRole::numeric ? t.numeric[spec.name] : *t.target).push_back(v);
          break;
        }
      }
    }
  }
  return t;
}

inline TypedTable parse_table(const std::string& path, const TableSchema& schema) {
  return parse_table_text(detail::read_file(path), schema);
}

/// Writes the table in schema column order with the schema's delimiter.
/// Numbers use the shortest exact decimal form, so parsing the output with
/// `schema.without_transforms()` reproduces the table.
inline void write_table(std::ostream& out, const TypedTable& t) {
  const auto& s = t.schema;
  const char d = s.delimiter;
  if (s.has_header) {
    for (std::size_t c = 0; c < s.columns.size(); ++c) {
      if (c) out << d;
      out << quote_field(s.columns[c].name, d);
    }
    out << '\n';
  }
  auto text_cell = [&](const std::optional<std::string>& v) {
    return v ? quote_field(*v, d) : std::string();
  };
  auto real_cell = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    std::string line;
    for (std::size_t c = 0; c < s.columns.size(); ++c) {
      if (c) line.push_back(d);
      const auto& spec = s.columns[c];
      switch (spec.role) {
        case ColumnRole::categorical:
          line += text_cell(t.categorical.at(spec.name)[r]);
          break;
        case ColumnRole::excluded:
          line += text_cell(t.excluded.at(spec.name)[r]);
          break;
        case ColumnRole::numeric:
          line += real_cell(t.numeric.at(spec.name)[r]);
          break;
        case ColumnRole::target:
          line += real_cell((*t.target)[r]);
          break;
      }
    }
    if (line.empty()) line = "\"\"";
    out << line;
    out << '\n';
  }
}

inline void write_table(const std::string& path, const TypedTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  write_table(out, t);
}

// --- row selection ---------------------------------------------------------

struct SplitStrategy {
  enum class Kind { random, chronological_tail, chronological_head };
  Kind kind = Kind::random;
  double fraction = 0.1;
  std::uint64_t seed = 0;

  static SplitStrategy random(double fraction, std::uint64_t seed) { return {Kind::random, fraction, seed}; }
  static SplitStrategy chronological_tail(double fraction) { return {Kind::chronological_tail, fraction, 0}; }
  static SplitStrategy chronological_head(double fraction) { return {Kind::chronological_head, fraction, 0}; }
};

struct TableSplit {
  TypedTable train;
  TypedTable test;
  std::vector<std::size_t> train_rows;  // indices into the input table
  std::vector<std::size_t> test_rows;
};

/// Random splits take round(fraction * n) test rows; chronological splits
/// take ceil(fraction * n) rows from the end (tail) or start (head) of the
/// file. Both partitions keep file order.
inline TableSplit split_rows(const TypedTable& table, const SplitStrategy& strategy) {
  if (!(strategy.fraction > 0.0 && strategy.fraction < 1.0))
    throw InvalidArgument("split fraction must lie strictly between 0 and 1");
  const std::size_t n = table.n_rows;
  const double want = strategy.fraction * static_cast<double>(n);
  const std::size_t n_test = strategy.kind == SplitStrategy::Kind::random
                                 ? static_cast<std::size_t>(std::llround(want))
                                 : static_cast<std::size_t>(std::ceil(want));
  if (n_test == 0 || n_test >= n)
    throw InvalidArgument("split of " + std::to_string(n) + " rows with fraction " +
                          format_real(strategy.fraction) + " leaves an empty partition");

  std::vector<bool> is_test(n, false);
  switch (strategy.kind) {
    case SplitStrategy::Kind::random: {
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      SplitMix64 rng(strategy.seed);
      // Partial Fisher-Yates: the first n_test slots become the test set.
      for (std::size_t i = 0; i < n_test; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
        is_test[idx[i]] = true;
      }
      break;
    }
    case SplitStrategy::Kind::chronological_tail:
      for (std::size_t i = n - n_test; i < n; ++i) is_test[i] = true;
      break;
    case SplitStrategy::Kind::chronological_head:
      for (std::size_t i = 0; i < n_test; ++i) is_test[i] = true;
      break;
  }

  TableSplit s;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? s.test_rows : s.train_rows).push_back(i);
  s.train = table.select(s.train_rows);
  s.test = table.select(s.test_rows);
  return s;
}

/// Keeps rows whose `column` equals `value`. Text columns compare verbatim,
/// numeric columns compare the parsed number. Missing cells never match.
inline TypedTable filter_rows(const TypedTable& table, const std::string& column, const std::string& value) {
  const ColumnSpec* spec = table.schema.find(column);
  if (!spec) throw MissingColumn(column);
  std::vector<std::size_t> keep;
  auto keep_text = [&](const TextColumn& col) {
    for (std::size_t i = 0; i < table.n_rows; ++i)
      if (col[i] && *col[i] == value) keep.push_back(i);
  };
  auto keep_real = [&](const RealColumn& col) {
    const auto v = parse_real(value);
    if (!v) return;
    for (std::size_t i = 0; i < table.n_rows; ++i)
      if (col[i] && *col[i] == *v) keep.push_back(i);
  };
  switch (spec->role) {
    case ColumnRole::categorical:
      keep_text(table.categorical.at(column));
      break;
    case ColumnRole::excluded:
      keep_text(table.excluded.at(column));
      break;
    case ColumnRole::numeric:
      keep_real(table.numeric.at(column));
      break;
    case ColumnRole::target:
      keep_real(*table.target);
      break;
  }
  return table.select(keep);
}

struct GroupMeans {
  std::map<std::string, double> per_group;
  double global = 0.0;
};

namespace detail {

inline const TextColumn* text_column(const TypedTable& t, const std::string& name) {
  if (auto it = t.categorical.find(name); it != t.categorical.end()) return &it->second;
  if (auto it = t.excluded.find(name); it != t.excluded.end()) return &it->second;
  return nullptr;
}

inline std::vector<std::optional<std::string>> group_keys(const TypedTable& t, const std::string& name) {
  if (const auto* col = text_column(t, name)) return *col;
  if (auto it = t.numeric.find(name); it != t.numeric.end()) {
    std::vector<std::optional<std::string>> keys;
    keys.reserve(t.n_rows);
    for (const auto& v : it->second) keys.push_back(v ? std::optional(format_real(*v)) : std::nullopt);
    return keys;
  }
  throw MissingColumn(name);
}

}  // namespace detail

struct NormalizedSplit {
  TypedTable train;
  TypedTable test;
  GroupMeans means;
};

/// Divides every target by the training mean of its group. Test rows whose
/// group has no training target (or is missing) use the global training mean.
inline NormalizedSplit normalize_target_by_group(const TypedTable& train, const TypedTable& test,
                                                 const std::string& group_column) {
  const auto* spec = train.schema.target();
  if (!spec || !train.target || !test.target)
    throw InvalidArgument("group normalization needs a target column");
  if (spec->target_kind != TargetKind::continuous)
    throw InvalidArgument("group normalization needs a continuous target");
  const auto train_keys = detail::group_keys(train, group_column);
  const auto test_keys = detail::group_keys(test, group_column);

  std::map<std::string, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < train.n_rows; ++i) {
    const auto& y = (*train.target)[i];
    if (!y) continue;
    total += *y;
    ++count;
    if (train_keys[i]) {
      auto& a = acc[*train_keys[i]];
      a.first += *y;
      ++a.second;
    }
  }
  if (count == 0) throw InvalidArgument("training set has no target values");

  NormalizedSplit out{train, test, {}};
  out.means.global = total / static_cast<double>(count);
  if (out.means.global == 0.0) throw ZeroGroupMean("<global>");
  for (const auto& [k, a] : acc) {
    const double m = a.first / static_cast<double>(a.second);
    if (m == 0.0) throw ZeroGroupMean(k);
    out.means.per_group.emplace(k, m);
  }

  auto apply = [&](TypedTable& t, const std::vector<std::optional<std::string>>& keys) {
    for (std::size_t i = 0; i < t.n_rows; ++i) {
      auto& y = (*t.target)[i];
      if (!y) continue;
      double m = out.means.global;
      if (keys[i])
        if (auto it = out.means.per_group.find(*keys[i]); it != out.means.per_group.end()) m = it->second;
      *y /= m;
    }
  };
  apply(out.train, train_keys);
  apply(out.test, test_keys);
  return out;
}

}  // namespace tabemb
