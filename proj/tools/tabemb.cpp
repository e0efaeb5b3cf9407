// tabemb: table -> entity graph -> GAE embeddings -> k-NN evaluation.
//
// Exit status: 0 success, 1 usage or input error, 2 internal failure.

#include <exception>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabemb/pipeline.hpp"

namespace {

using nlohmann::json;

struct Overrides {
  std::string config;
  std::string input, schema, output;
  std::vector<std::size_t> dims, ks;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, learning_rate, max_grad_norm, split_fraction;
  std::optional<std::size_t> max_epochs, check_window;
  std::string optimizer, target_mode, unknown_policy, task, split_strategy, metric, predict_mode;
  bool no_clip = false;
  bool no_self_loops = false;
  bool force = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "run config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--input", input, "input table");
    app->add_option("--schema", schema, "schema file (JSON)");
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--dims", dims, "embedding dimensions")->delimiter(',');
    app->add_option("--ks", ks, "neighbor counts")->delimiter(',');
    app->add_option("--seed", seed, "master seed");
    app->add_option("--alpha", alpha, "weight of the L1 loss term");
    app->add_option("--lr", learning_rate, "learning rate");
    app->add_option("--max-grad-norm", max_grad_norm, "gradient clipping norm");
    app->add_flag("--no-clip", no_clip, "disable gradient clipping");
    app->add_option("--max-epochs", max_epochs, "epoch cap");
    app->add_option("--check-window", check_window, "epochs between convergence checks");
    app->add_option("--optimizer", optimizer, "gradient_descent | adam");
    app->add_option("--target-mode", target_mode, "transition | adjacency_scaled | sym_normalized");
    app->add_option("--unknown-policy", unknown_policy, "skip | error");
    app->add_option("--task", task, "classification | regression");
    app->add_option("--metric", metric, "euclidean | cosine");
    app->add_option("--predict-mode", predict_mode, "normalized | unnormalized");
    app->add_option("--split-strategy", split_strategy, "random | chronological_tail | chronological_head");
    app->add_option("--split-fraction", split_fraction, "test fraction");
    app->add_flag("--no-self-loops", no_self_loops, "drop row self-contributions");
    app->add_flag("-f,--force", force, "overwrite existing outputs");
  }

  // Command-line values are applied on top of the config file.
  tabemb::RunConfig resolve() const {
    json p = json::object();
    const auto cwd = tabemb::fs::current_path();
    auto abs = [&](const std::string& s) { return tabemb::fs::absolute(cwd / s).string(); };
    if (!input.empty()) p["input"] = abs(input);
    if (!schema.empty()) p["schema"] = abs(schema);
    if (!output.empty()) p["output_dir"] = abs(output);
    if (!dims.empty()) p["dims"] = dims;
    if (!ks.empty()) p["ks"] = ks;
    if (seed) p["seed"] = *seed;
    if (!target_mode.empty()) p["target_mode"] = target_mode;
    if (!unknown_policy.empty()) p["unknown_policy"] = unknown_policy;
    if (!task.empty()) p["task"] = task;
    if (!metric.empty()) p["metric"] = metric;
    if (!predict_mode.empty()) p["predict_mode"] = predict_mode;
    if (no_self_loops) p["self_loops"] = false;
    if (!split_strategy.empty()) p["split"]["strategy"] = split_strategy;
    if (split_fraction) p["split"]["fraction"] = *split_fraction;
    if (alpha) p["train"]["alpha"] = *alpha;
    if (learning_rate) p["train"]["learning_rate"] = *learning_rate;
    if (max_grad_norm) p["train"]["max_grad_norm"] = *max_grad_norm;
    if (no_clip) p["train"]["max_grad_norm"] = nullptr;
    if (max_epochs) p["train"]["max_epochs"] = *max_epochs;
    if (check_window) p["train"]["check_window"] = *check_window;
    if (!optimizer.empty()) p["train"]["optimizer"] = optimizer;

    if (!config.empty()) {
      // merge_patch treats null as deletion, so a disabled clip is set afterwards.
      json patch = p;
      if (no_clip) patch["train"].erase("max_grad_norm");
      std::ifstream in(config);
      json base;
      try {
        in >> base;
      } catch (const json::exception& e) {
        throw tabemb::InvalidArgument("config '" + config + "': " + e.what());
      }
      base.merge_patch(patch);
      if (no_clip) base["train"]["max_grad_norm"] = nullptr;
      return tabemb::run_config_from_json(base, tabemb::fs::absolute(config).parent_path());
    }
    return tabemb::run_config_from_json(p, cwd);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-graph embeddings for tabular data"};
  app.require_subcommand(1);

  Overrides ingest_o, train_o, embed_o, eval_o, pipe_o;
  auto* ingest = app.add_subcommand("ingest", "parse, filter and split the input table");
  ingest_o.attach(ingest);
  auto* train = app.add_subcommand("train", "build the entity graph and train one model per dimension");
  train_o.attach(train);
  auto* eval = app.add_subcommand("eval", "k-NN evaluation over the embedded rows");
  eval_o.attach(eval);
  auto* pipeline = app.add_subcommand("pipeline", "run every stage, resuming completed ones");
  pipe_o.attach(pipeline);

  // With --model the table is embedded standalone; otherwise the ingested
  // train/test rows of the run are.
  std::string bundle, table, out;
  bool pretransformed = false;
  auto* embed = app.add_subcommand("embed", "embed table rows with trained models");
  embed_o.attach(embed);
  auto* model_opt = embed->add_option("-m,--model", bundle, "model bundle (.tge)")->check(CLI::ExistingFile);
  auto* table_opt = embed->add_option("-t,--table", table, "table to embed")->check(CLI::ExistingFile);
  embed->add_option("--rows-out", out, "row embedding file (standalone mode)");
  embed->add_flag("--pretransformed", pretransformed, "table already has value transforms applied");
  model_opt->needs(table_opt);
  table_opt->needs(model_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto staged = [](const Overrides& o, auto&& fn) {
      const auto cfg = o.resolve();
      tabemb::DirLock lock(cfg.output_dir);
      tabemb::prepare_output(cfg, o.force);
      fn(cfg, o.force);
      return cfg;
    };
    auto print_metrics = [](const tabemb::RunConfig& c) {
      std::cout << tabemb::detail::read_file((tabemb::Layout{c.output_dir}.eval() / "metrics.tsv").string());
    };
    if (*ingest) staged(ingest_o, [](const auto& c, bool f) { tabemb::cmd_ingest(c, f); });
    if (*train) staged(train_o, [](const auto& c, bool f) { tabemb::cmd_train(c, f); });
    if (*embed && bundle.empty()) staged(embed_o, [](const auto& c, bool f) { tabemb::cmd_embed_stage(c, f); });
    if (*eval) print_metrics(staged(eval_o, [](const auto& c, bool f) { tabemb::cmd_eval(c, f); }));
    if (*pipeline) print_metrics(staged(pipe_o, [](const auto& c, bool f) { tabemb::cmd_pipeline(c, f); }));
    if (*embed && !bundle.empty()) {
      if (out.empty()) throw tabemb::InvalidArgument("standalone embedding needs --rows-out");
      const auto policy = embed_o.unknown_policy.empty() ? "skip" : embed_o.unknown_policy;
      const auto p = tabemb::parse_enum<tabemb::UnknownPolicy>(json(policy), "unknown policy");
      const auto s = tabemb::cmd_embed(bundle, table, out, p, pretransformed);
      std::cerr << "[tabemb] embed: " << s.rows << " rows, " << s.unknown_skipped << " unknown values skipped, "
                << s.undefined_rows << " rows undefined\n";
    }
  } catch (const tabemb::Error& e) {
    std::cerr << "tabemb: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "tabemb: internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
