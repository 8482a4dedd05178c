#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fraudrl/grpo.hpp"
#include "fraudrl/policy.hpp"

namespace fraudrl {

// Stage 2 reasoning compression: best-of-K rejection sampling selects, per
// instance, the shortest correct response; supervised fine-tuning then pulls
// the policy toward those targets before length-constrained RL.

struct Candidate {
  Rollout rollout;
  bool correct = false;
};

struct CandidateSet {
  std::string instance_id;
  std::vector<Candidate> items;
};

// Index of the shortest correct candidate (ties: lowest index); nullopt when
// none is correct. Equivalent to maximizing 1{correct} / (1 + think_len).
std::optional<int> select_optimal(const CandidateSet& candidates);

struct SftExample {
  Episode episode;
  Rollout target;
};

struct SftDataset {
  std::vector<SftExample> examples;
  int skipped = 0;  // instances with no correct candidate
};

// Samples K candidates per instance from `policy`, keeps the optimal one.
// Deterministic for a given stream; candidate k of instance i draws from
// stream.derive(i).derive(k).
SftDataset build_sft_dataset(const PolicyParameters& policy,
                             std::span<const CallInstance* const> corpus, Task task, int k,
                             const GenerationParams& gen, CounterRng stream,
                             int workers = 1);

void write_sft_dataset_jsonl(const std::string& path, const SftDataset& dataset);

// Supervised warmup targets rendered from ground truth: the think segment
// cites the first cue tokens appearing in the call, the answer is the label.
SftDataset build_warmup_dataset(std::span<const CallInstance> corpus, Task task,
                                int noise_begin, int max_cited_tokens = 8);

struct SftStats {
  double mean_logprob = 0.0;
  double grad_norm = 0.0;
};

// Gradient ascent on mean sequence log-probability of the targets; shares the
// optimizer settings of GrpoConfig.
class SftTrainer {
 public:
  SftTrainer(PolicyParameters init, const GrpoConfig& cfg);

  SftStats step(std::span<const SftExample> batch);

  const PolicyParameters& policy() const { return policy_; }

 private:
  PolicyParameters policy_;
  Optimizer opt_;
};

}  // namespace fraudrl
