#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fraudrl/config.hpp"

namespace fraudrl {

// Stage drivers shared by the CLI and the acceptance harness. Each training
// run writes, under run_dir:
//   config_snapshot.json  the canonical config actually consumed
//   manifest.json         seed, stage, worker count, input/output hashes
//   log.jsonl             one record per step
//   rewards.jsonl         per-rollout reward traces (when enabled)
//   checkpoint_final.json and periodic checkpoint_NNNNNN.json
// A manifest is sufficient to replay the run bit-exactly.

struct TrainRequest {
  std::string stage;  // "sft-warmup" | "rl" | "rs" | "ls" | "real"
  std::string corpus_path;
  std::optional<std::string> init_checkpoint;  // absent: fresh random init
  std::string run_dir;
  std::optional<int> workers;  // overrides config.workers
};

struct TrainOutcome {
  std::string final_checkpoint_path;
  std::string final_checkpoint_sha256;
  double final_accuracy_rate = 0.0;   // last-step training diagnostics
  double final_mean_think_len = 0.0;
};

TrainOutcome run_train_stage(const RunConfig& config, const TrainRequest& request);

struct ReplayOutcome {
  bool identical = false;
  std::string original_sha256;
  std::string replay_sha256;
  std::string replay_dir;
};

// Re-executes a completed run from its snapshot + manifest (verifying input
// hashes first) and compares final checkpoints byte for byte.
ReplayOutcome replay_run(const std::string& run_dir, std::optional<int> workers);

// Reads per-step diagnostics back from a run's log.jsonl.
std::vector<StepStats> read_step_log(const std::string& run_dir);

// Learning-rate grid in the style of a sensitivity table: a fresh policy is
// trained per value on `train` and scored on `eval`.
struct SweepRow {
  double learning_rate = 0.0;
  MetricReport report;
};

std::vector<SweepRow> run_lr_sweep(const RunConfig& config, const std::vector<double>& values,
                                   const std::vector<CallInstance>& train,
                                   const std::vector<CallInstance>& eval_corpus);

std::string sweep_table(const std::vector<SweepRow>& rows);

// Latency profile rows for one or more checkpoints over a corpus.
struct ProfileRow {
  std::string name;
  LatencyProfile latency;
};

std::vector<ProfileRow> run_profile(const RunConfig& config,
                                    const std::vector<std::string>& checkpoint_paths,
                                    const std::vector<CallInstance>& corpus);

std::string profile_table(const std::vector<ProfileRow>& rows);

}  // namespace fraudrl
