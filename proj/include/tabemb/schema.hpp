#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabemb/error.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

enum class ColumnRole { categorical, numeric, excluded, target };
enum class TargetKind { binary, continuous };

/// Cell rewrite applied before numeric parsing. Date transforms expect ISO
/// "YYYY-MM-DD" text.
enum class ValueTransform { none, day_of_year, month, day_of_month };

struct BinPolicy {
  enum class Kind { quantile, per_distinct_value };
  Kind kind = Kind::quantile;
  std::size_t bins = 20;

  static BinPolicy quantile(std::size_t k) { return {Kind::quantile, k}; }
  static BinPolicy per_distinct_value() { return {Kind::per_distinct_value, 0}; }

  friend bool operator==(const BinPolicy&, const BinPolicy&) = default;
};

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::categorical;
  BinPolicy bin_policy{};
  TargetKind target_kind = TargetKind::continuous;
  ValueTransform transform = ValueTransform::none;

  bool is_feature() const noexcept {
    return role == ColumnRole::categorical || role == ColumnRole::numeric;
  }
};

struct TableSchema {
  std::vector<ColumnSpec> columns;
  char delimiter = ',';
  bool has_header = true;
  std::vector<std::string> missing_sentinels{"NA", "NaN", "null"};

  const ColumnSpec* find(std::string_view name) const noexcept {
    auto it = std::find_if(columns.begin(), columns.end(),
                           [&](const ColumnSpec& c) { return c.name == name; });
    return it == columns.end() ? nullptr : &*it;
  }

  const ColumnSpec* target() const noexcept {
    for (const auto& c : columns)
      if (c.role == ColumnRole::target) return &c;
    return nullptr;
  }

  bool is_missing(std::string_view cell) const noexcept {
    if (cell.empty()) return true;
    return std::find(missing_sentinels.begin(), missing_sentinels.end(), cell) !=
           missing_sentinels.end();
  }

  void validate() const {
    std::set<std::string> seen;
    std::size_t features = 0, targets = 0;
    for (const auto& c : columns) {
      if (c.name.empty()) throw SchemaError("column with empty name");
      if (!seen.insert(c.name).second) throw SchemaError("duplicate column '" + c.name + "'");
      if (c.is_feature()) ++features;
      if (c.role == ColumnRole::target) ++targets;
      if (c.role == ColumnRole::numeric && c.bin_policy.kind == BinPolicy::Kind::quantile &&
          c.bin_policy.bins < 1)
        throw SchemaError("column '" + c.name + "': quantile bin count must be >= 1");
    }
    if (features == 0) throw SchemaError("schema needs at least one categorical or numeric column");
    if (targets > 1) throw SchemaError("schema declares more than one target column");
  }

  /// Same schema with every value transform removed; describes tables that
  /// were already transformed and written back out.
  TableSchema without_transforms() const {
    TableSchema s = *this;
    for (auto& c : s.columns) c.transform = ValueTransform::none;
    return s;
  }
};

// --- JSON mapping ----------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(ColumnRole, {{ColumnRole::categorical, "categorical"},
                                          {ColumnRole::numeric, "numeric"},
                                          {ColumnRole::excluded, "excluded"},
                                          {ColumnRole::target, "target"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TargetKind, {{TargetKind::binary, "binary"},
                                          {TargetKind::continuous, "continuous"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ValueTransform, {{ValueTransform::none, "none"},
                                              {ValueTransform::day_of_year, "day_of_year"},
                                              {ValueTransform::month, "month"},
                                              {ValueTransform::day_of_month, "day_of_month"}})

namespace detail {

template <typename Enum>
Enum enum_from_json(const nlohmann::json& j, const std::string& what, const std::string& column) {
  if (!j.is_string()) throw SchemaError("column '" + column + "': " + what + " must be a string");
  // The serializer maps unknown strings to the first enumerator; reject
  // them by round-tripping.
  Enum e = j.get<Enum>();
  if (nlohmann::json(e) != j)
    throw SchemaError("column '" + column + "': unknown " + what + " '" + j.get<std::string>() + "'");
  return e;
}

}  // namespace detail

inline nlohmann::json to_json(const ColumnSpec& c) {
  nlohmann::json j{{"name", c.name}, {"role", c.role}};
  if (c.role == ColumnRole::numeric) {
    if (c.bin_policy.kind == BinPolicy::Kind::per_distinct_value)
      j["bins"] = "per_value";
    else
      j["bins"] = c.bin_policy.bins;
  }
  if (c.role == ColumnRole::target) j["target_kind"] = c.target_kind;
  if (c.transform != ValueTransform::none) j["transform"] = c.transform;
  return j;
}

inline ColumnSpec column_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw SchemaError("every column entry needs a string 'name'");
  ColumnSpec c;
  c.name = j["name"].get<std::string>();
  if (!j.contains("role")) throw SchemaError("column '" + c.name + "': missing 'role'");
  c.role = detail::enum_from_json<ColumnRole>(j["role"], "role", c.name);
  if (j.contains("bins")) {
    const auto& b = j["bins"];
    if (b.is_string() && b.get<std::string>() == "per_value") {
      c.bin_policy = BinPolicy::per_distinct_value();
    } else if (b.is_number_integer() && b.get<long long>() >= 1) {
      c.bin_policy = BinPolicy::quantile(b.get<std::size_t>());
    } else {
      throw SchemaError("column '" + c.name + "': 'bins' must be a positive integer or \"per_value\"");
    }
  }
  if (j.contains("target_kind"))
    c.target_kind = detail::enum_from_json<TargetKind>(j["target_kind"], "target_kind", c.name);
  if (j.contains("transform"))
    c.transform = detail::enum_from_json<ValueTransform>(j["transform"], "transform", c.name);
  return c;
}

inline nlohmann::json to_json(const TableSchema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) cols.push_back(to_json(c));
  return {{"delimiter", std::string(1, s.delimiter)},
          {"has_header", s.has_header},
          {"missing", s.missing_sentinels},
          {"columns", cols}};
}

inline TableSchema schema_from_json(const nlohmann::json& j) try {
  if (!j.is_object()) throw SchemaError("schema must be a JSON object");
  TableSchema s;
  if (j.contains("delimiter")) {
    const auto d = j["delimiter"].get<std::string>();
    if (d == "\\t" || d == "tab")
      s.delimiter = '\t';
    else if (d.size() == 1)
      s.delimiter = d[0];
    else
      throw SchemaError("delimiter must be a single character");
  }
  if (j.contains("has_header")) s.has_header = j["has_header"].get<bool>();
  if (j.contains("missing")) s.missing_sentinels = j["missing"].get<std::vector<std::string>>();
  if (!j.contains("columns") || !j["columns"].is_array())
    throw SchemaError("schema needs a 'columns' array");
  for (const auto& c : j["columns"]) s.columns.push_back(column_from_json(c));
  s.validate();
  return s;
} catch (const nlohmann::json::exception& e) {
  throw SchemaError(std::string("malformed schema: ") + e.what());
}

inline TableSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

inline std::uint64_t schema_fingerprint(const TableSchema& s) { return fnv1a64(to_json(s).dump()); }

}  // namespace tabemb
