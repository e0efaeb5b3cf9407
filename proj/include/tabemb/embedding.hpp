#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tabemb/error.hpp"
#include "tabemb/gae.hpp"
#include "tabemb/graph.hpp"
#include "tabemb/json_io.hpp"
#include "tabemb/schema.hpp"
#include "tabemb/table.hpp"

namespace tabemb {

/// One d-dimensional vector per catalog entity (row i = node i).
struct EmbeddingMatrix {
  DenseMatrix vectors;

  std::size_t size() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.cols()); }
};

struct RowEmbedding {
  Eigen::VectorXd vector;
  std::size_t support = 0;  // contributing (entity, weight) pairs; 0 = undefined

  bool defined() const noexcept { return support > 0; }
};

inline EmbeddingMatrix extract_entity_embeddings(const GaeModel& model, const EntityCatalog& catalog) {
  if (model.nodes() != catalog.size())
    throw InvalidArgument("model has " + std::to_string(model.nodes()) + " nodes but the catalog has " +
                          std::to_string(catalog.size()) + " entities");
  EmbeddingMatrix m{forward(model).embeddings};
  if (!m.vectors.allFinite()) throw InvalidArgument("entity embeddings are not finite");
  return m;
}

struct TrainDigest {
  std::size_t final_epoch = 0;
  double final_loss = 0.0;
  StopReason reason = StopReason::max_epochs;
};

/// Everything needed to embed new rows of the same schema without
/// retraining.
struct ModelBundle {
  TableSchema schema;
  LayoutMap layouts;
  EntityCatalog catalog;
  EmbeddingMatrix embeddings;
  TrainConfig config;
  TargetMode target_mode = TargetMode::transition;
  bool self_loops = true;
  TrainDigest digest;

  std::uint64_t schema_fingerprint() const { return tabemb::schema_fingerprint(schema); }
};

/// Weighted mean of the entity vectors over a row's incidence pairs.
inline RowEmbedding aggregate(const std::vector<IncidencePair>& pairs, const EmbeddingMatrix& emb) {
  RowEmbedding r{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.dim())), 0};
  double total = 0.0;
  for (const auto& p : pairs) {
    r.vector += p.weight * emb.vectors.row(static_cast<Eigen::Index>(p.node)).transpose();
    total += p.weight;
  }
  r.support = pairs.size();
  if (total > 0.0) r.vector /= total;
  return r;
}

/// Embeds row `row` of `table`. Missing cells contribute nothing.
inline RowEmbedding embed_row(const TypedTable& table, std::size_t row, const ModelBundle& bundle,
                              UnknownPolicy policy = UnknownPolicy::skip) {
  if (row >= table.n_rows) throw InvalidArgument("row index out of range");
  const auto cols = detail::feature_columns(table, bundle.layouts);
  std::vector<IncidencePair> pairs;
  std::size_t unknown = 0;
  for (const auto& col : cols) detail::append_cell(pairs, col, row, bundle.catalog, policy, unknown);
  std::sort(pairs.begin(), pairs.end(), [](const IncidencePair& a, const IncidencePair& b) { return a.node < b.node; });
  if (pairs.empty()) throw NoKnownEntities();
  return aggregate(pairs, bundle.embeddings);
}

struct EmbeddedTable {
  std::vector<RowEmbedding> rows;  // same order as the table
  std::size_t unknown_skipped = 0;
  std::size_t undefined_rows = 0;  // rows without any known entity
};

/// Row-wise embed_row; rows without known entities are kept with support 0
/// instead of throwing.
inline EmbeddedTable embed_table(const TypedTable& table, const ModelBundle& bundle,
                                 UnknownPolicy policy = UnknownPolicy::skip) {
  const auto inc = build_incidence(table, bundle.catalog, bundle.layouts, policy);
  EmbeddedTable out;
  out.unknown_skipped = inc.unknown_skipped;
  out.rows.reserve(inc.rows.size());
  for (const auto& pairs : inc.rows) {
    out.rows.push_back(aggregate(pairs, bundle.embeddings));
    if (pairs.empty()) ++out.undefined_rows;
  }
  return out;
}

// --- binary bundle ----------------------------------------------------------
//
// Layout, little-endian:
//   "TGE1" | u32 version
//   blob   schema JSON
//   blob   meta JSON (train config, target mode, self loops, digest)
//   u64 layout count, per layout: str column, u8 kind, u8 split, u64 m, f64[m] edges
//   u64 entity count, per entity: str column, u8 kind, str value, u64 bin
//   u64 n, u64 d, f64[n*d] embeddings (row-major)
//   u64 FNV-1a 64 checksum of every preceding byte
// blob/str = u64 byte length followed by the bytes.

inline constexpr std::string_view kBundleMagic = "TGE1";
inline constexpr std::uint32_t kBundleVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  std::string& bytes() noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw ChecksumMismatch();
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_bundle(const ModelBundle& b) {
  detail::ByteWriter w;
  w.raw(kBundleMagic);
  w.u32(kBundleVersion);
  w.str(to_json(b.schema).dump());
  nlohmann::json meta{{"schema_fingerprint", b.schema_fingerprint()},
                      {"train", to_json(b.config)},
                      {"target_mode", b.target_mode},
                      {"self_loops", b.self_loops},
                      {"final_epoch", b.digest.final_epoch},
                      {"final_loss", b.digest.final_loss},
                      {"stop_reason", b.digest.reason}};
  w.str(meta.dump());
  w.u64(b.layouts.size());
  for (const auto& [name, l] : b.layouts) {
    w.str(name);
    w.u8(l.kind == BinPolicy::Kind::quantile ? 0 : 1);
    w.u8(l.split_into_overflow ? 1 : 0);
    w.u64(l.edges.size());
    for (double e : l.edges) w.f64(e);
  }
  w.u64(b.catalog.size());
  for (const auto& e : b.catalog.entries()) {
    w.str(e.column);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.str(e.value);
    w.u64(e.bin);
  }
  const auto& v = b.embeddings.vectors;
  w.u64(static_cast<std::uint64_t>(v.rows()));
  w.u64(static_cast<std::uint64_t>(v.cols()));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) w.f64(v(i, j));
  const auto sum = fnv1a64(w.bytes());
  w.u64(sum);
  return std::move(w.bytes());
}

inline ModelBundle deserialize_bundle(std::string_view bytes) {
  if (bytes.size() < kBundleMagic.size() || bytes.substr(0, kBundleMagic.size()) != kBundleMagic)
    throw InvalidArgument("not a model bundle (bad magic)");
  if (bytes.size() < kBundleMagic.size() + 4) throw ChecksumMismatch();
  {
    detail::ByteReader head(bytes.substr(kBundleMagic.size(), 4));
    const auto version = head.u32();
    if (version != kBundleVersion) throw FormatVersionMismatch(version, kBundleVersion);
  }
  if (bytes.size() < kBundleMagic.size() + 4 + 8) throw ChecksumMismatch();
  const auto body = bytes.substr(0, bytes.size() - 8);
  {
    detail::ByteReader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a64(body)) throw ChecksumMismatch();
  }

  detail::ByteReader r(body);
  r.raw(kBundleMagic.size());
  r.u32();
  ModelBundle b;
  try {
    b.schema = schema_from_json(nlohmann::json::parse(r.str()));
    const auto meta = nlohmann::json::parse(r.str());
    b.config = train_config_from_json(meta.at("train"));
    b.target_mode = parse_enum<TargetMode>(meta.at("target_mode"), "target mode");
    b.self_loops = meta.at("self_loops").get<bool>();
    b.digest.final_epoch = meta.at("final_epoch").get<std::size_t>();
    b.digest.final_loss = meta.at("final_loss").get<double>();
    b.digest.reason = parse_enum<StopReason>(meta.at("stop_reason"), "stop reason");
    if (meta.at("schema_fingerprint").get<std::uint64_t>() != b.schema_fingerprint())
      throw InvalidArgument("bundle schema fingerprint does not match its schema");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed bundle metadata: ") + e.what());
  }

  const auto n_layouts = r.u64();
  for (std::uint64_t i = 0; i < n_layouts; ++i) {
    BinLayout l;
    l.column = r.str();
    l.kind = r.u8() == 0 ? BinPolicy::Kind::quantile : BinPolicy::Kind::per_distinct_value;
    l.split_into_overflow = r.u8() != 0;
    const auto m = r.u64();
    if (m == 0) throw InvalidArgument("bundle layout without edges");
    for (std::uint64_t k = 0; k < m; ++k) l.edges.push_back(r.f64());
    const auto name = l.column;
    b.layouts.emplace(name, std::move(l));
  }
  const auto n_entities = r.u64();
  std::vector<Entity> entities;
  for (std::uint64_t i = 0; i < n_entities; ++i) {
    Entity e;
    e.column = r.str();
    e.kind = r.u8() == 0 ? Entity::Kind::categorical : Entity::Kind::bin;
    e.value = r.str();
    e.bin = r.u64();
    entities.push_back(std::move(e));
  }
  b.catalog = EntityCatalog(std::move(entities));
  const auto n = r.u64(), d = r.u64();
  if (n != b.catalog.size()) throw InvalidArgument("bundle embedding count differs from catalog size");
  b.embeddings.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < d; ++j)
      b.embeddings.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.f64();
  if (!r.done()) throw InvalidArgument("trailing bytes in bundle");
  return b;
}

inline void save_bundle(const ModelBundle& bundle, const std::string& path) {
  const auto bytes = serialize_bundle(bundle);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidArgument("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline ModelBundle load_bundle(const std::string& path) { return deserialize_bundle(detail::read_file(path)); }

/// "entity_key<TAB>f1 ... <TAB>fd" per entity.
inline void write_entity_embeddings(std::ostream& out, const ModelBundle& b) {
  const auto& v = b.embeddings.vectors;
  for (std::size_t i = 0; i < b.catalog.size(); ++i) {
    out << b.catalog[i].key();
    for (Eigen::Index j = 0; j < v.cols(); ++j) out << '\t' << format_real(v(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

/// "row<TAB>support<TAB>f1 ... <TAB>fd" per row, in table order.
inline void write_row_embeddings(std::ostream& out, const EmbeddedTable& t) {
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out << i << '\t' << r.support;
    for (Eigen::Index j = 0; j < r.vector.size(); ++j) out << '\t' << format_real(r.vector(j));
    out << '\n';
  }
}

}  // namespace tabemb
