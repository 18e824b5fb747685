#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dli/balancer.hpp"
#include "dli/error.hpp"
#include "dli/injector.hpp"
#include "dli/poisson.hpp"
#include "dli/transform.hpp"

// JSON mapping for every configuration struct plus the CLI run document.
// Missing keys take their defaults; unknown keys are rejected.

namespace dli {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const char* where) {
  if (!j.is_object()) throw Error(ErrorCode::config, std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw Error(ErrorCode::config, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = {{"rel_tolerance", c.rel_tolerance},
       {"max_iterations", c.max_iterations},
       {"backend", std::string(to_string(c.backend))},
       {"dense_limit", c.dense_limit}};
}

inline void from_json(const nlohmann::json& j, SolverConfig& c) {
  detail::reject_unknown_keys(j, {"rel_tolerance", "max_iterations", "backend", "dense_limit"}, "solver");
  c = SolverConfig{};
  c.rel_tolerance = j.value("rel_tolerance", c.rel_tolerance);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  if (j.contains("backend")) c.backend = parse_solver_backend(j.at("backend").get<std::string>());
  c.dense_limit = j.value("dense_limit", c.dense_limit);
}

inline void to_json(nlohmann::json& j, const TransformParams& t) {
  j = {{"flip_h_probability", t.flip_h_probability},
       {"flip_v_probability", t.flip_v_probability},
       {"max_rotation_deg", t.max_rotation_deg},
       {"scale_min", t.scale_min},
       {"scale_max", t.scale_max},
       {"translate", t.translate}};
}

inline void from_json(const nlohmann::json& j, TransformParams& t) {
  detail::reject_unknown_keys(
      j, {"flip_h_probability", "flip_v_probability", "max_rotation_deg", "scale_min", "scale_max", "translate"},
      "transform");
  t = TransformParams{};
  t.flip_h_probability = j.value("flip_h_probability", t.flip_h_probability);
  t.flip_v_probability = j.value("flip_v_probability", t.flip_v_probability);
  t.max_rotation_deg = j.value("max_rotation_deg", t.max_rotation_deg);
  t.scale_min = j.value("scale_min", t.scale_min);
  t.scale_max = j.value("scale_max", t.scale_max);
  t.translate = j.value("translate", t.translate);
}

inline void to_json(nlohmann::json& j, const InjectionConfig& c) {
  j = {{"poisson_probability", c.poisson_probability},
       {"max_placement_retries", c.max_placement_retries},
       {"transform", c.transform}};
}

inline void from_json(const nlohmann::json& j, InjectionConfig& c) {
  detail::reject_unknown_keys(j, {"poisson_probability", "max_placement_retries", "transform"}, "injection");
  const SolverConfig solver = c.solver;
  c = InjectionConfig{};
  c.solver = solver;
  c.poisson_probability = j.value("poisson_probability", c.poisson_probability);
  c.max_placement_retries = j.value("max_placement_retries", c.max_placement_retries);
  if (j.contains("transform")) c.transform = j.at("transform").get<TransformParams>();
}

struct DatasetSettings {
  std::string root;
  std::string layout = "manifest";
  /// 0 infers C from the data.
  int num_classes = 0;
};

struct BatchSettings {
  int batch_size = 16;
  int num_batches = 1;
  /// Max original defective samples per class in a drawn batch; 0 selects
  /// batch_size / C.
  int per_class_cap = 0;
  /// Raise the most frequent class to the cap before balancing.
  bool top_up = true;
};

struct VerifySettings {
  int solver_instances = 100;
  int max_region_side = 32;
  int gradient_instances = 100;
  int balance_batches = 20;
};

/// Full configuration of a CLI run.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "dli_out";
  int jobs = 1;
  DatasetSettings dataset;
  BatchSettings batch;
  BalanceConfig balance;
  std::optional<std::pair<int, int>> resize;
  VerifySettings verify;

  void validate() const {
    balance.validate();
    if (jobs < 1) throw Error(ErrorCode::config, "jobs must be >= 1");
    if (batch.batch_size < 1) throw Error(ErrorCode::config, "batch_size must be >= 1");
    if (batch.num_batches < 0) throw Error(ErrorCode::config, "num_batches must be >= 0");
    if (batch.per_class_cap < 0) throw Error(ErrorCode::config, "per_class_cap must be >= 0");
    if (resize && (resize->first < 1 || resize->second < 1)) {
      throw Error(ErrorCode::config, "resize dimensions must be positive");
    }
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["jobs"] = c.jobs;
  j["dataset"] = {{"root", c.dataset.root}, {"layout", c.dataset.layout}, {"num_classes", c.dataset.num_classes}};
  j["batch"] = {{"batch_size", c.batch.batch_size},
                {"num_batches", c.batch.num_batches},
                {"per_class_cap", c.batch.per_class_cap},
                {"top_up", c.batch.top_up}};
  j["balance"] = {{"uniformity_slack", c.balance.uniformity_slack}, {"max_rounds", c.balance.max_rounds}};
  j["injection"] = c.balance.injection;
  j["solver"] = c.balance.injection.solver;
  j["resize"] = c.resize ? nlohmann::json{{"height", c.resize->first}, {"width", c.resize->second}}
                         : nlohmann::json(nullptr);
  j["verify"] = {{"solver_instances", c.verify.solver_instances},
                 {"max_region_side", c.verify.max_region_side},
                 {"gradient_instances", c.verify.gradient_instances},
                 {"balance_batches", c.verify.balance_batches}};
  return j;
}

/// Parses a run document. The seed is mandatory.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"seed", "output", "jobs", "dataset", "batch", "balance", "injection", "solver", "resize", "verify"},
      "config");
  if (!j.contains("seed")) throw Error(ErrorCode::config, "config must set 'seed'");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output = j.value("output", c.output);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      detail::reject_unknown_keys(d, {"root", "layout", "num_classes"}, "dataset");
      c.dataset.root = d.value("root", c.dataset.root);
      c.dataset.layout = d.value("layout", c.dataset.layout);
      c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
    }
    if (j.contains("batch")) {
      const auto& b = j.at("batch");
      detail::reject_unknown_keys(b, {"batch_size", "num_batches", "per_class_cap", "top_up"}, "batch");
      c.batch.batch_size = b.value("batch_size", c.batch.batch_size);
      c.batch.num_batches = b.value("num_batches", c.batch.num_batches);
      c.batch.per_class_cap = b.value("per_class_cap", c.batch.per_class_cap);
      c.batch.top_up = b.value("top_up", c.batch.top_up);
    }
    if (j.contains("balance")) {
      const auto& b = j.at("balance");
      detail::reject_unknown_keys(b, {"uniformity_slack", "max_rounds"}, "balance");
      c.balance.uniformity_slack = b.value("uniformity_slack", c.balance.uniformity_slack);
      c.balance.max_rounds = b.value("max_rounds", c.balance.max_rounds);
    }
    if (j.contains("solver")) c.balance.injection.solver = j.at("solver").get<SolverConfig>();
    if (j.contains("injection")) from_json(j.at("injection"), c.balance.injection);
    if (j.contains("resize") && !j.at("resize").is_null()) {
      const auto& r = j.at("resize");
      detail::reject_unknown_keys(r, {"height", "width"}, "resize");
      c.resize = std::pair{r.at("height").get<int>(), r.at("width").get<int>()};
    }
    if (j.contains("verify")) {
      const auto& v = j.at("verify");
      detail::reject_unknown_keys(v, {"solver_instances", "max_region_side", "gradient_instances", "balance_batches"},
                                  "verify");
      c.verify.solver_instances = v.value("solver_instances", c.verify.solver_instances);
      c.verify.max_region_side = v.value("max_region_side", c.verify.max_region_side);
      c.verify.gradient_instances = v.value("gradient_instances", c.verify.gradient_instances);
      c.verify.balance_batches = v.value("balance_batches", c.verify.balance_batches);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace dli
