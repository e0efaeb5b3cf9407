#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "tabemb/error.hpp"
#include "tabemb/gae.hpp"
#include "tabemb/graph.hpp"
#include "tabemb/matrix.hpp"

namespace tabemb {

NLOHMANN_JSON_SERIALIZE_ENUM(Optimizer, {{Optimizer::gradient_descent, "gradient_descent"},
                                         {Optimizer::adam, "adam"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TargetMode, {{TargetMode::transition, "transition"},
                                          {TargetMode::adjacency_scaled, "adjacency_scaled"},
                                          {TargetMode::sym_normalized, "sym_normalized"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UnknownPolicy, {{UnknownPolicy::skip, "skip"}, {UnknownPolicy::error, "error"}})
NLOHMANN_JSON_SERIALIZE_ENUM(StopReason, {{StopReason::converged, "converged"},
                                          {StopReason::max_epochs, "max_epochs"}})

/// Strict enum parse: unknown strings are errors instead of silently mapping
/// to the first enumerator.
template <typename Enum>
Enum parse_enum(const nlohmann::json& j, const std::string& what) {
  if (!j.is_string()) throw InvalidArgument(what + " must be a string");
  Enum e = j.get<Enum>();
  if (nlohmann::json(e) != j) throw InvalidArgument("unknown " + what + " '" + j.get<std::string>() + "'");
  return e;
}

/// max_grad_norm = +inf (clipping off) is written as null.
inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"dim", c.dim},
                   {"alpha", c.alpha},
                   {"learning_rate", c.learning_rate},
                   {"check_window", c.check_window},
                   {"rel_improvement_stop", c.rel_improvement_stop},
                   {"max_epochs", c.max_epochs},
                   {"log_every", c.log_every},
                   {"seed", c.seed},
                   {"optimizer", c.optimizer},
                   {"adam_beta1", c.adam_beta1},
                   {"adam_beta2", c.adam_beta2},
                   {"adam_epsilon", c.adam_epsilon}};
  j["max_grad_norm"] = std::isfinite(c.max_grad_norm) ? nlohmann::json(c.max_grad_norm) : nlohmann::json();
  return j;
}

/// Reads the keys present in `j` over `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) try {
  if (!j.is_object()) throw InvalidArgument("train config must be an object");
  if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
  if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("max_grad_norm"))
    c.max_grad_norm = j["max_grad_norm"].is_null() ? std::numeric_limits<double>::infinity()
                                                   : j["max_grad_norm"].get<double>();
  if (j.contains("check_window")) c.check_window = j["check_window"].get<std::size_t>();
  if (j.contains("rel_improvement_stop")) c.rel_improvement_stop = j["rel_improvement_stop"].get<double>();
  if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<std::size_t>();
  if (j.contains("log_every")) c.log_every = j["log_every"].get<std::size_t>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("optimizer")) c.optimizer = parse_enum<Optimizer>(j["optimizer"], "optimizer");
  if (j.contains("adam_beta1")) c.adam_beta1 = j["adam_beta1"].get<double>();
  if (j.contains("adam_beta2")) c.adam_beta2 = j["adam_beta2"].get<double>();
  if (j.contains("adam_epsilon")) c.adam_epsilon = j["adam_epsilon"].get<double>();
  c.validate();
  return c;
} catch (const nlohmann::json::exception& e) {
  throw InvalidArgument(std::string("malformed train config: ") + e.what());
}

}  // namespace tabemb
