#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "fraudrl/datagen.hpp"
#include "fraudrl/grpo.hpp"
#include "fraudrl/metrics.hpp"

namespace fraudrl {

inline constexpr int kConfigVersion = 1;

struct SftSettings {
  int epochs = 3;
  int candidates = 16;  // best-of-K sample count
  int batch_size = 12;
};

struct EvalSettings {
  bool type_fraud_only = true;
  double band_center = 24.0;
  double band_half_width = 24.0;
};

// Per-stage overrides: step count and a partial reward-weight patch
// (e.g. a tighter excess_threshold for the length-constrained stage).
struct StageOverride {
  std::optional<int> steps;
  nlohmann::json weights_patch = nlohmann::json::object();
};

// One JSON document with a version field drives every subcommand. Unknown
// keys are rejected so hyperparameter typos cannot pass silently.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  int workers = 1;
  std::optional<Task> task = Task::fraud;  // nullopt: round-robin over all three
  CorpusConfig corpus;
  int corpus_count = 500;
  double train_fraction = 0.8;
  RewardWeights weights;
  GrpoConfig grpo;
  GenerationParams generation;
  double init_stddev = 0.02;
  std::vector<std::string> stages = {"gen-data", "rl", "rs", "ls", "real", "eval"};
  int checkpoint_interval = 100;
  SftSettings sft;
  EvalSettings eval;
  bool log_reward_traces = false;
  std::map<std::string, StageOverride> stage_overrides;

  RewardWeights weights_for_stage(const std::string& stage) const;
  int steps_for_stage(const std::string& stage) const;
  EvalOptions eval_options(Mode mode) const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Canonical full form (all defaults materialized); parsing it reproduces the
// config exactly, which is what replay relies on.
nlohmann::ordered_json run_config_json(const RunConfig& config);

Task task_from_name(const std::string& name);

}  // namespace fraudrl
