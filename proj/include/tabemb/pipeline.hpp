#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabemb/embedding.hpp"
#include "tabemb/error.hpp"
#include "tabemb/eval.hpp"
#include "tabemb/gae.hpp"
#include "tabemb/graph.hpp"
#include "tabemb/json_io.hpp"
#include "tabemb/matrix.hpp"
#include "tabemb/schema.hpp"
#include "tabemb/table.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

namespace fs = std::filesystem;

struct RowFilter {
  std::string column;
  std::string value;
};

/// Everything one pipeline run needs. All randomness derives from `seed`.
struct RunConfig {
  std::string input;
  TableSchema schema;
  std::vector<RowFilter> filters;
  SplitStrategy split;
  std::optional<std::string> normalize_by_group;
  bool self_loops = true;
  bool split_into_overflow = true;
  TargetMode target_mode = TargetMode::transition;
  TrainConfig train;  // dim and seed are set per trained dimension
  std::vector<std::size_t> dims{3};
  std::vector<std::size_t> ks{10};
  std::optional<Task> task;
  DistanceMetric metric = DistanceMetric::euclidean;
  PredictMode predict_mode = PredictMode::normalized;
  UnknownPolicy unknown_policy = UnknownPolicy::skip;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::size_t dense_limit = kDefaultDenseLimit;
  bool debug_exports = false;

  Task resolved_task() const {
    if (task) return *task;
    const auto* t = schema.target();
    if (!t) throw InvalidArgument("no target column; evaluation needs one");
    return t->target_kind == TargetKind::binary ? Task::classification : Task::regression;
  }

  TrainConfig train_config(std::size_t d) const {
    TrainConfig c = train;
    c.dim = d;
    c.seed = derive_seed(seed, "train/d=" + std::to_string(d));
    return c;
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(SplitStrategy::Kind, {{SplitStrategy::Kind::random, "random"},
                                                   {SplitStrategy::Kind::chronological_tail, "chronological_tail"},
                                                   {SplitStrategy::Kind::chronological_head, "chronological_head"}})

/// Effective configuration: every default resolved, paths absolute, schema
/// inlined. Feeding it back yields the same run.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json filters = nlohmann::json::array();
  for (const auto& f : c.filters) filters.push_back({{"column", f.column}, {"value", f.value}});
  auto train = to_json(c.train);
  train.erase("dim");
  train.erase("seed");
  nlohmann::json j{{"input", c.input},
                   {"schema", to_json(c.schema)},
                   {"filters", filters},
                   {"split", {{"strategy", c.split.kind}, {"fraction", c.split.fraction}, {"seed", c.split.seed}}},
                   {"self_loops", c.self_loops},
                   {"split_into_overflow", c.split_into_overflow},
                   {"target_mode", c.target_mode},
                   {"train", train},
                   {"dims", c.dims},
                   {"ks", c.ks},
                   {"metric", c.metric},
                   {"predict_mode", c.predict_mode},
                   {"unknown_policy", c.unknown_policy},
                   {"output_dir", c.output_dir},
                   {"seed", c.seed},
                   {"dense_limit", c.dense_limit},
                   {"debug_exports", c.debug_exports}};
  j["normalize_by_group"] = c.normalize_by_group ? nlohmann::json(*c.normalize_by_group) : nlohmann::json();
  j["task"] = c.task ? nlohmann::json(*c.task) : nlohmann::json();
  return j;
}

/// Relative paths resolve against `base_dir` (the config file's directory).
inline RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir = fs::current_path()) try {
  if (!j.is_object()) throw InvalidArgument("run config must be a JSON object");
  auto resolve = [&](const std::string& p) { return fs::absolute(base_dir / p).lexically_normal().string(); };
  RunConfig c;
  if (!j.contains("input")) throw InvalidArgument("run config needs 'input'");
  c.input = resolve(j["input"].get<std::string>());
  if (!j.contains("schema")) throw InvalidArgument("run config needs 'schema'");
  if (j["schema"].is_string())
    c.schema = load_schema(resolve(j["schema"].get<std::string>()));
  else
    c.schema = schema_from_json(j["schema"]);
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("filters"))
    for (const auto& f : j["filters"]) {
      const auto& v = f.at("value");
      c.filters.push_back({f.at("column").get<std::string>(), v.is_string() ? v.get<std::string>() : v.dump()});
    }
  c.split.seed = derive_seed(c.seed, "split");
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("strategy")) c.split.kind = parse_enum<SplitStrategy::Kind>(s["strategy"], "split strategy");
    if (s.contains("fraction")) c.split.fraction = s["fraction"].get<double>();
    if (s.contains("seed")) c.split.seed = s["seed"].get<std::uint64_t>();
  }
  if (j.contains("normalize_by_group") && !j["normalize_by_group"].is_null())
    c.normalize_by_group = j["normalize_by_group"].get<std::string>();
  if (j.contains("self_loops")) c.self_loops = j["self_loops"].get<bool>();
  if (j.contains("split_into_overflow")) c.split_into_overflow = j["split_into_overflow"].get<bool>();
  if (j.contains("target_mode")) c.target_mode = parse_enum<TargetMode>(j["target_mode"], "target mode");
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("dims")) c.dims = j["dims"].get<std::vector<std::size_t>>();
  if (j.contains("ks")) c.ks = j["ks"].get<std::vector<std::size_t>>();
  if (j.contains("task") && !j["task"].is_null()) c.task = parse_enum<Task>(j["task"], "task");
  if (j.contains("metric")) c.metric = parse_enum<DistanceMetric>(j["metric"], "distance metric");
  if (j.contains("predict_mode")) c.predict_mode = parse_enum<PredictMode>(j["predict_mode"], "predict mode");
  if (j.contains("unknown_policy"))
    c.unknown_policy = parse_enum<UnknownPolicy>(j["unknown_policy"], "unknown policy");
  if (!j.contains("output_dir")) throw InvalidArgument("run config needs 'output_dir'");
  c.output_dir = resolve(j["output_dir"].get<std::string>());
  if (j.contains("dense_limit")) c.dense_limit = j["dense_limit"].get<std::size_t>();
  if (j.contains("debug_exports")) c.debug_exports = j["debug_exports"].get<bool>();

  if (c.dims.empty()) throw InvalidArgument("'dims' must list at least one dimension");
  for (auto d : c.dims)
    if (d < 1) throw InvalidArgument("embedding dimensions must be >= 1");
  if (c.ks.empty()) throw InvalidArgument("'ks' must list at least one k");
  for (auto k : c.ks)
    if (k < 1) throw InvalidArgument("k must be >= 1");
  if (!(c.split.fraction > 0.0 && c.split.fraction < 1.0))
    throw InvalidArgument("split fraction must lie strictly between 0 and 1");
  return c;
} catch (const nlohmann::json::exception& e) {
  throw InvalidArgument(std::string("malformed run config: ") + e.what());
}

inline RunConfig load_run_config(const std::string& path, const nlohmann::json& overrides = nlohmann::json::object()) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config '" + path + "': " + e.what());
  }
  j.merge_patch(overrides);
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

// --- output directory ----------------------------------------------------

/// Exclusive ownership of an output directory for the lifetime of the
/// object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw Error("output directory '" + dir.string() + "' is locked by another run (remove " + path_.string() +
                        " if no run is active)");
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

struct Layout {
  fs::path root;

  fs::path config() const { return root / "effective_config.json"; }
  fs::path ingest() const { return root / "ingest"; }
  fs::path train() const { return root / "train"; }
  fs::path train_dim(std::size_t d) const { return train() / ("d" + std::to_string(d)); }
  fs::path embed() const { return root / "embed"; }
  fs::path embed_dim(std::size_t d) const { return embed() / ("d" + std::to_string(d)); }
  fs::path eval() const { return root / "eval"; }
};

enum class Stage { ingest, train, embed, eval };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::ingest:
      return "ingest";
    case Stage::train:
      return "train";
    case Stage::embed:
      return "embed";
    case Stage::eval:
      return "eval";
  }
  return "?";
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

inline std::string config_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline fs::path stage_dir(const Layout& l, Stage s) {
  switch (s) {
    case Stage::ingest:
      return l.ingest();
    case Stage::train:
      return l.train();
    case Stage::embed:
      return l.embed();
    case Stage::eval:
      return l.eval();
  }
  return l.root;
}

inline std::string stage_stamp(const RunConfig& c, Stage s) {
  nlohmann::json j{{"stage", stage_name(s)}, {"config_hash", fnv1a64(config_text(c))}};
  return j.dump() + "\n";
}

inline fs::path stamp_path(const Layout& l, Stage s) { return stage_dir(l, s) / "stage.json"; }

inline bool stage_done(const RunConfig& c, const Layout& l, Stage s) {
  const auto p = stamp_path(l, s);
  return fs::exists(p) && read_file(p.string()) == stage_stamp(c, s);
}

inline void log(const std::string& msg) { std::cerr << "[tabemb] " << msg << '\n'; }

}  // namespace detail

/// Claims the output directory for `config`: writes the effective config and
/// refuses to mix runs of different configurations unless `force`.
inline void prepare_output(const RunConfig& config, bool force) {
  const Layout l{config.output_dir};
  fs::create_directories(l.root);
  const auto text = detail::config_text(config);
  if (fs::exists(l.config()) && detail::read_file(l.config().string()) != text && !force)
    throw Error("output directory '" + l.root.string() +
                "' holds results of a different configuration; use --force to overwrite");
  detail::write_text(l.config(), text);
}

inline void require_stage(const RunConfig& c, Stage s) {
  if (!detail::stage_done(c, Layout{c.output_dir}, s))
    throw Error(std::string("stage '") + stage_name(s) + "' has not completed for this configuration; run it first");
}

inline void claim_stage(const RunConfig& c, Stage s, bool force) {
  const Layout l{c.output_dir};
  const auto dir = detail::stage_dir(l, s);
  if (fs::exists(dir)) {
    if (!force)
      throw Error(std::string("outputs of stage '") + stage_name(s) + "' already exist in " + dir.string() +
                  "; use --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

inline void finish_stage(const RunConfig& c, Stage s) {
  detail::write_text(detail::stamp_path(Layout{c.output_dir}, s), detail::stage_stamp(c, s));
}

// --- stages --------------------------------------------------------------

struct IngestedTables {
  TypedTable train;
  TypedTable test;
};

/// Parse, filter, split and (optionally) normalize the target per group.
inline IngestedTables ingest_tables(const RunConfig& c) {
  auto table = parse_table(c.input, c.schema);
  for (const auto& f : c.filters) table = filter_rows(table, f.column, f.value);
  auto split = split_rows(table, c.split);
  IngestedTables out{std::move(split.train), std::move(split.test)};
  if (c.normalize_by_group) {
    auto norm = normalize_target_by_group(out.train, out.test, *c.normalize_by_group);
    out.train = std::move(norm.train);
    out.test = std::move(norm.test);
    std::ostringstream means;
    means << "group\tmean\n";
    for (const auto& [g, m] : norm.means.per_group) means << g << '\t' << format_real(m) << '\n';
    means << "<global>\t" << format_real(norm.means.global) << '\n';
    detail::write_text(Layout{c.output_dir}.ingest() / "group_means.tsv", means.str());
  }
  return out;
}

inline TableSchema artifact_schema(const RunConfig& c) {
  auto s = c.schema.without_transforms();
  s.delimiter = ',';
  s.has_header = true;
  return s;
}

inline IngestedTables load_ingested(const RunConfig& c) {
  const Layout l{c.output_dir};
  const auto schema = artifact_schema(c);
  return {parse_table((l.ingest() / "train.csv").string(), schema),
          parse_table((l.ingest() / "test.csv").string(), schema)};
}

inline void cmd_ingest(const RunConfig& c, bool force = false) {
  claim_stage(c, Stage::ingest, force);
  auto tables = ingest_tables(c);
  const Layout l{c.output_dir};
  const auto schema = artifact_schema(c);
  tables.train.schema = schema;
  tables.test.schema = schema;
  write_table((l.ingest() / "train.csv").string(), tables.train);
  write_table((l.ingest() / "test.csv").string(), tables.test);
  detail::write_text(l.ingest() / "schema.json", to_json(schema).dump(2) + "\n");
  detail::log("ingest: " + std::to_string(tables.train.n_rows) + " train rows, " +
              std::to_string(tables.test.n_rows) + " test rows");
  finish_stage(c, Stage::ingest);
}

/// Graph, matrices and propagation built from the training table.
struct GraphArtifacts {
  LayoutMap layouts;
  EntityCatalog catalog;
  WeightedGraph graph;
  DenseMatrix target;
  DenseMatrix propagation;
};

inline GraphArtifacts build_graph(const TypedTable& train, const RunConfig& c) {
  GraphArtifacts g;
  g.layouts = fit_layouts(train, c.split_into_overflow);
  g.catalog = build_catalog(train, g.layouts);
  const auto inc = build_incidence(train, g.catalog, g.layouts, UnknownPolicy::error);
  g.graph = reduce(inc, g.catalog.size(), c.self_loops);
  const DenseMatrix a = adjacency(g.graph, c.dense_limit);
  g.target = reconstruction_target(g.graph, c.target_mode, c.dense_limit);
  g.propagation = gcn_propagation(a);
  return g;
}

inline ModelBundle train_bundle(const GraphArtifacts& g, const RunConfig& c, std::size_t d, TrainTrace* trace_out = nullptr) {
  const auto cfg = c.train_config(d);
  auto res = train(g.target, g.propagation, cfg);
  ModelBundle b;
  b.schema = c.schema;
  b.layouts = g.layouts;
  b.catalog = g.catalog;
  b.embeddings = extract_entity_embeddings(res.model, g.catalog);
  b.config = cfg;
  b.target_mode = c.target_mode;
  b.self_loops = c.self_loops;
  b.digest = {res.trace.final_epoch, res.trace.final_loss, res.trace.reason};
  if (trace_out) *trace_out = std::move(res.trace);
  return b;
}

inline fs::path bundle_path(const RunConfig& c, std::size_t d) {
  return Layout{c.output_dir}.train_dim(d) / "model.tge";
}

inline void cmd_train(const RunConfig& c, bool force = false) {
  require_stage(c, Stage::ingest);
  claim_stage(c, Stage::train, force);
  const Layout l{c.output_dir};
  const auto tables = load_ingested(c);
  const auto g = build_graph(tables.train, c);
  detail::log("train: " + std::to_string(g.catalog.size()) + " entities, " + std::to_string(g.graph.edges.size()) +
              " edges");
  if (c.debug_exports) {
    std::ostringstream edges, adj, tr;
    write_edge_list(edges, g.graph);
    detail::write_text(l.train() / "edges.tsv", edges.str());
    write_matrix(adj, adjacency(g.graph, c.dense_limit));
    detail::write_text(l.train() / "adjacency.txt", adj.str());
    write_matrix(tr, g.target);
    detail::write_text(l.train() / "target.txt", tr.str());
  }
  for (auto d : c.dims) {
    TrainTrace trace;
    const auto bundle = train_bundle(g, c, d, &trace);
    fs::create_directories(l.train_dim(d));
    save_bundle(bundle, bundle_path(c, d).string());
    std::ostringstream t;
    trace.write(t);
    detail::write_text(l.train_dim(d) / "trace.tsv", t.str());
    detail::log("train d=" + std::to_string(d) + ": final loss " + format_real(trace.final_loss) + " after " +
                std::to_string(trace.final_epoch) + " epochs (" + to_string(trace.reason) + ")");
  }
  finish_stage(c, Stage::train);
}

struct EmbedSummary {
  std::size_t rows = 0;
  std::size_t unknown_skipped = 0;
  std::size_t undefined_rows = 0;
};

/// Embeds `table` with `bundle` into a row-embedding file.
inline EmbedSummary embed_to_file(const TypedTable& table, const ModelBundle& bundle, UnknownPolicy policy,
                                  const fs::path& out) {
  const auto emb = embed_table(table, bundle, policy);
  std::ostringstream s;
  write_row_embeddings(s, emb);
  detail::write_text(out, s.str());
  return {emb.rows.size(), emb.unknown_skipped, emb.undefined_rows};
}

/// Standalone embedding of a raw table (schema transforms applied).
inline EmbedSummary cmd_embed(const std::string& bundle_file, const std::string& table_file, const std::string& out_file,
                              UnknownPolicy policy, bool pretransformed = false) {
  const auto bundle = load_bundle(bundle_file);
  const auto schema = pretransformed ? bundle.schema.without_transforms() : bundle.schema;
  const auto table = parse_table(table_file, schema);
  const auto summary = embed_to_file(table, bundle, policy, out_file);
  return summary;
}

inline void cmd_embed_stage(const RunConfig& c, bool force = false) {
  require_stage(c, Stage::train);
  claim_stage(c, Stage::embed, force);
  const Layout l{c.output_dir};
  const auto tables = load_ingested(c);
  for (auto d : c.dims) {
    const auto bundle = load_bundle(bundle_path(c, d).string());
    std::ostringstream ent;
    write_entity_embeddings(ent, bundle);
    detail::write_text(l.embed_dim(d) / "entities.tsv", ent.str());
    embed_to_file(tables.train, bundle, c.unknown_policy, l.embed_dim(d) / "train_rows.tsv");
    const auto s = embed_to_file(tables.test, bundle, c.unknown_policy, l.embed_dim(d) / "test_rows.tsv");
    detail::log("embed d=" + std::to_string(d) + ": " + std::to_string(s.rows) + " test rows, " +
                std::to_string(s.unknown_skipped) + " unknown values skipped, " + std::to_string(s.undefined_rows) +
                " rows undefined");
  }
  finish_stage(c, Stage::embed);
}

inline std::vector<RowEmbedding> read_row_embeddings(const fs::path& p, std::size_t dim) {
  std::vector<RowEmbedding> rows;
  std::istringstream in(detail::read_file(p.string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (;;) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != dim + 2) throw Error("malformed row embedding line in " + p.string());
    RowEmbedding r;
    r.support = static_cast<std::size_t>(parse_real(fields[1]).value_or(0));
    r.vector.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      const auto v = parse_real(fields[j + 2]);
      if (!v) throw Error("malformed row embedding value in " + p.string());
      r.vector(static_cast<Eigen::Index>(j)) = *v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<MetricReport> cmd_eval(const RunConfig& c, bool force = false) {
  require_stage(c, Stage::embed);
  claim_stage(c, Stage::eval, force);
  const Layout l{c.output_dir};
  const auto tables = load_ingested(c);
  if (!tables.train.target) throw InvalidArgument("evaluation needs a target column");
  std::vector<DimEmbeddings> dims;
  for (auto d : c.dims)
    dims.push_back({d, read_row_embeddings(l.embed_dim(d) / "train_rows.tsv", d),
                    read_row_embeddings(l.embed_dim(d) / "test_rows.tsv", d)});
  const auto reports =
      evaluate(c.resolved_task(), dims, *tables.train.target, *tables.test.target, {c.ks, c.metric, c.predict_mode});

  std::ostringstream table, plot;
  write_metric_table(table, reports);
  write_plot_data(plot, reports);
  nlohmann::json rep = nlohmann::json::array();
  for (const auto& r : reports) rep.push_back(to_json(r));
  detail::write_text(l.eval() / "metrics.tsv", table.str());
  detail::write_text(l.eval() / "plot_data.tsv", plot.str());
  detail::write_text(l.eval() / "report.json", rep.dump(2) + "\n");
  finish_stage(c, Stage::eval);
  return reports;
}

/// Runs every stage in order. Stages already completed for this exact
/// configuration are skipped unless `force`; the reports are empty when
/// evaluation itself was skipped.
inline std::vector<MetricReport> cmd_pipeline(const RunConfig& c, bool force = false) {
  const Layout l{c.output_dir};
  bool rerun = force;
  auto run = [&](Stage s, auto&& fn) {
    if (!rerun && detail::stage_done(c, l, s)) {
      detail::log(std::string("stage ") + stage_name(s) + " already complete, skipping");
      return;
    }
    // Everything downstream of a recomputed stage is recomputed too.
    rerun = true;
    fn();
  };
  run(Stage::ingest, [&] { cmd_ingest(c, true); });
  run(Stage::train, [&] { cmd_train(c, true); });
  run(Stage::embed, [&] { cmd_embed_stage(c, true); });
  if (!rerun && detail::stage_done(c, l, Stage::eval)) {
    detail::log("stage eval already complete, skipping");
    return {};
  }
  return cmd_eval(c, true);
}

}  // namespace tabemb
