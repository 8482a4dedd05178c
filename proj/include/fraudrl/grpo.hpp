#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fraudrl/policy.hpp"
#include "fraudrl/reward.hpp"
#include "fraudrl/rng.hpp"
#include "fraudrl/types.hpp"

namespace fraudrl {

enum class RatioGranularity { sequence, per_token };
enum class OptimizerKind { sgd, adam };

struct GrpoConfig {
  int group_size = 9;
  double clip = 0.2;
  double kl_coefficient = 0.04;
  RatioGranularity granularity = RatioGranularity::sequence;
  double std_epsilon = 1e-8;
  double learning_rate = 1e-2;  // desk-scale default
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 12;
  int steps = 300;
  int epochs_per_batch = 1;

  void validate() const;
};

// Group z-scores with population std (divide by G); identical rewards yield
// all-zero advantages through std_epsilon.
std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double std_epsilon);

// exp(d) - d - 1 with d = logp_ref - logp_theta; nonnegative, zero iff equal.
double kl_estimate(double logp_theta, double logp_ref);

// min(ratio * A, clamp(ratio, 1-clip, 1+clip) * A).
double clipped_surrogate(double ratio, double advantage, double clip);

// One instance of training data: a call prefix bound to a task. Full-call
// training uses visible_turns == n.
struct Episode {
  const CallInstance* call = nullptr;
  int visible_turns = 0;
  Task task = Task::fraud;

  EpisodeView view() const { return {call, visible_turns}; }
  Phase true_phase() const { return ground_truth_phase(visible_turns, call->turn_count()); }
};

// A sampled group frozen for objective evaluation: rollouts, their advantages
// and their per-step log-probabilities under the sampling policy.
struct FrozenRollout {
  Rollout rollout;
  RewardBreakdown reward;
  double advantage = 0.0;
  std::vector<double> old_step_logprobs;  // unfiltered, under the sampling snapshot
};

struct FrozenGroup {
  Episode episode;
  std::vector<FrozenRollout> items;
};

struct ObjectiveStats {
  double objective = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;  // rollouts on the active clipped branch
};

// J(theta) = mean over rollouts of [ surrogate - kl_coefficient * kl ], with
// ratios at the configured granularity. Pure in theta; used for both the
// update and the finite-difference check.
ObjectiveStats grpo_objective(const PolicyParameters& theta,
                              const PolicyParameters& reference,
                              std::span<const FrozenGroup> groups,
                              const GrpoConfig& cfg);

// Analytic gradient of grpo_objective. Clipped-out branches contribute zero
// through the ratio; the KL term contributes -kl_coefficient * (1 - r) per
// step weight. Throws NumericError naming the episode on non-finite values.
PolicyGradient grpo_gradient(const PolicyParameters& theta,
                             const PolicyParameters& reference,
                             std::span<const FrozenGroup> groups, const GrpoConfig& cfg,
                             ObjectiveStats* stats_out = nullptr);

class Optimizer {
 public:
  Optimizer(const PolicyParameters& like, const GrpoConfig& cfg);

  // Ascent step: theta += update(gradient).
  void apply(PolicyParameters& params, const PolicyGradient& grad);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParameterBlocks m_, v_;
};

struct StepStats {
  int step = 0;
  double mean_reward = 0.0;
  double accuracy_rate = 0.0;
  double format_rate = 0.0;
  double mean_think_len = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double objective = 0.0;
};

// Per-rollout reward trace hook (step, episode id, group slot, breakdown).
using RolloutTraceSink =
    std::function<void(int step, const Episode&, int slot, const Rollout&,
                       const RewardBreakdown&)>;

class GrpoTrainer {
 public:
  GrpoTrainer(PolicyParameters init, RewardWeights weights, GrpoConfig cfg, Stage stage,
              bool non_sft, GenerationParams gen);

  // Samples group_size rollouts per episode from the step-start snapshot,
  // scores them with the stage composite, normalizes advantages per group and
  // ascends the clipped objective. Sampling parallelizes over the episode x
  // group grid; accumulation order is fixed, so results do not depend on the
  // worker count.
  StepStats step(std::span<const Episode> batch, CounterRng step_stream, int step_index,
                 int workers = 1, const RolloutTraceSink& trace = nullptr);

  const PolicyParameters& policy() const { return policy_; }
  const PolicyParameters& reference() const { return reference_; }
  PolicyParameters& mutable_policy() { return policy_; }

  // Samples and scores one batch without updating (shared with the step path).
  std::vector<FrozenGroup> sample_groups(const PolicyParameters& sampling_policy,
                                         std::span<const Episode> batch,
                                         CounterRng step_stream, int workers) const;

 private:
  PolicyParameters policy_;
  PolicyParameters reference_;
  RewardWeights weights_;
  GrpoConfig cfg_;
  Stage stage_;
  bool non_sft_;
  GenerationParams gen_;
  Optimizer opt_;
};

}  // namespace fraudrl
