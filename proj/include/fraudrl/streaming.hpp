#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fraudrl/grpo.hpp"
#include "fraudrl/policy.hpp"

namespace fraudrl {

// Stage 3: phase-aware training on turn prefixes and the streaming
// early-exit evaluator.

struct PrefixInstance {
  const CallInstance* call = nullptr;
  int visible_turns = 0;
  Phase true_phase = Phase::final;

  Episode episode(Task task) const { return {call, visible_turns, task}; }
};

// Exactly n prefixes, i = 1..n, tagged with their ground-truth phase.
std::vector<PrefixInstance> expand_prefixes(const CallInstance& call);

std::vector<Episode> prefix_episodes(std::span<const CallInstance> corpus, Task task);

struct StreamResult {
  std::optional<int> decided_at_turn;
  int decision = -1;  // label id; -1 when the stream never decided
  int turns_consumed = 0;
  std::vector<std::optional<Phase>> phase_claims;  // one per consumed turn
  bool correct = false;
  double synthetic_duration_s = 0.0;  // consumed tokens * 0.5 s
  Rollout last_rollout;               // the deciding rollout, or the final one
};

// Feeds prefixes i = 1, 2, ... in order, decoding one rollout per prefix,
// and stops at the first well-formed non-abstain answer. If none arrives by
// i = n the final answer stands (abstain or malformed counts as undecided
// and incorrect). Never consults turns beyond the stop point. The stream for
// prefix i derives from rng (unused under greedy decoding, the default).
StreamResult stream_evaluate(const PolicyParameters& params, const CallInstance& call,
                             Task task, const GenerationParams& gen,
                             CounterRng rng = CounterRng(0));

}  // namespace fraudrl
