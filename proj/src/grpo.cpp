#include "fraudrl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "fraudrl/errors.hpp"
#include "fraudrl/parallel.hpp"

namespace fraudrl {

void GrpoConfig::validate() const {
  if (group_size < 2) throw DataError("grpo config: group_size must be >= 2");
  if (!(clip > 0.0 && clip < 1.0)) throw DataError("grpo config: clip must be in (0, 1)");
  if (!(kl_coefficient >= 0.0)) throw DataError("grpo config: kl_coefficient must be >= 0");
  if (!(std_epsilon > 0.0)) throw DataError("grpo config: std_epsilon must be > 0");
  if (!(learning_rate > 0.0)) throw DataError("grpo config: learning_rate must be > 0");
  if (batch_size < 1) throw DataError("grpo config: batch_size must be >= 1");
  if (steps < 0) throw DataError("grpo config: steps must be >= 0");
  if (epochs_per_batch < 1) throw DataError("grpo config: epochs_per_batch must be >= 1");
}

std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double std_epsilon) {
  const std::size_t g = rewards.size();
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double std = std::sqrt(var / static_cast<double>(g));
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / (std + std_epsilon);
  return out;
}

double kl_estimate(double logp_theta, double logp_ref) {
  double d = logp_ref - logp_theta;
  return std::exp(d) - d - 1.0;
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

// Gradient of min(rho*A, clip(rho)*A) flows through rho exactly when the
// unclipped branch is (weakly) selected.
bool surrogate_grad_flows(double ratio, double advantage, double clip) {
  if (advantage >= 0.0) return ratio <= 1.0 + clip;
  return ratio >= 1.0 - clip;
}

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

struct RolloutTerms {
  double value = 0.0;          // surrogate - kl_coefficient * kl
  double kl = 0.0;             // at the configured granularity
  double clipped_units = 0.0;  // fraction of this rollout's units on the clipped branch
  std::vector<double> step_weights;  // set when gradients are requested
};

RolloutTerms rollout_terms(const PolicyParameters& theta, const PolicyParameters& ref,
                           const Episode& episode, const FrozenRollout& item,
                           const GrpoConfig& cfg, bool want_gradient) {
  RolloutTerms out;
  std::vector<double> lp_theta =
      per_step_logprobs(theta, episode.view(), episode.task, item.rollout);
  std::vector<double> lp_ref =
      per_step_logprobs(ref, episode.view(), episode.task, item.rollout);
  const std::vector<double>& lp_old = item.old_step_logprobs;
  const std::size_t steps = lp_theta.size();
  if (lp_old.size() != steps || lp_ref.size() != steps)
    throw NumericError("grpo: step count mismatch for instance " + episode.call->id);
  const double a = item.advantage;

  if (cfg.granularity == RatioGranularity::sequence) {
    double ratio = std::exp(sum(lp_theta) - sum(lp_old));
    double r = std::exp(sum(lp_ref) - sum(lp_theta));
    out.kl = r - std::log(r) - 1.0;
    double surr = clipped_surrogate(ratio, a, cfg.clip);
    out.value = surr - cfg.kl_coefficient * out.kl;
    out.clipped_units = surrogate_grad_flows(ratio, a, cfg.clip) ? 0.0 : 1.0;
    if (want_gradient) {
      double coeff = (surrogate_grad_flows(ratio, a, cfg.clip) ? a * ratio : 0.0) -
                     cfg.kl_coefficient * (1.0 - r);
      out.step_weights.assign(steps, coeff);
    }
  } else {
    double inv = 1.0 / static_cast<double>(steps);
    if (want_gradient) out.step_weights.assign(steps, 0.0);
    double surr_sum = 0.0, kl_sum = 0.0, clipped = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      double ratio = std::exp(lp_theta[t] - lp_old[t]);
      double r = std::exp(lp_ref[t] - lp_theta[t]);
      surr_sum += clipped_surrogate(ratio, a, cfg.clip);
      kl_sum += r - std::log(r) - 1.0;
      bool flows = surrogate_grad_flows(ratio, a, cfg.clip);
      if (!flows) clipped += 1.0;
      if (want_gradient)
        out.step_weights[t] =
            inv * ((flows ? a * ratio : 0.0) - cfg.kl_coefficient * (1.0 - r));
    }
    out.kl = kl_sum * inv;
    out.value = (surr_sum - cfg.kl_coefficient * kl_sum) * inv;
    out.clipped_units = clipped * inv;
  }
  return out;
}

}  // namespace

ObjectiveStats grpo_objective(const PolicyParameters& theta,
                              const PolicyParameters& reference,
                              std::span<const FrozenGroup> groups,
                              const GrpoConfig& cfg) {
  ObjectiveStats stats;
  double n = 0.0;
  for (const FrozenGroup& group : groups) {
    double inv_g = 1.0 / static_cast<double>(group.items.size());
    for (const FrozenRollout& item : group.items) {
      RolloutTerms terms = rollout_terms(theta, reference, group.episode, item, cfg, false);
      stats.objective += terms.value * inv_g;
      stats.mean_kl += terms.kl;
      stats.clip_fraction += terms.clipped_units;
      n += 1.0;
    }
  }
  double b = static_cast<double>(groups.size());
  if (b > 0.0) stats.objective /= b;
  if (n > 0.0) {
    stats.mean_kl /= n;
    stats.clip_fraction /= n;
  }
  return stats;
}

PolicyGradient grpo_gradient(const PolicyParameters& theta,
                             const PolicyParameters& reference,
                             std::span<const FrozenGroup> groups, const GrpoConfig& cfg,
                             ObjectiveStats* stats_out) {
  PolicyGradient grad = PolicyGradient::zeros_like(theta);
  ObjectiveStats stats;
  double n = 0.0;
  double inv_b = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
  for (const FrozenGroup& group : groups) {
    double scale = inv_b / static_cast<double>(group.items.size());
    for (const FrozenRollout& item : group.items) {
      RolloutTerms terms = rollout_terms(theta, reference, group.episode, item, cfg, true);
      bool finite = std::isfinite(terms.value);
      for (double w : terms.step_weights) finite = finite && std::isfinite(w);
      if (!finite)
        throw NumericError("grpo: non-finite objective for instance " +
                           group.episode.call->id);
      for (double& w : terms.step_weights) w *= scale;
      accumulate_logprob_gradient(theta, group.episode.view(), group.episode.task,
                                  item.rollout, terms.step_weights, grad);
      stats.objective += terms.value * scale;
      stats.mean_kl += terms.kl;
      stats.clip_fraction += terms.clipped_units;
      n += 1.0;
    }
  }
  if (n > 0.0) {
    stats.mean_kl /= n;
    stats.clip_fraction /= n;
  }
  if (!grad.all_finite()) throw NumericError("grpo: non-finite gradient");
  if (stats_out) *stats_out = stats;
  return grad;
}

Optimizer::Optimizer(const PolicyParameters& like, const GrpoConfig& cfg)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_epsilon),
      m_(ParameterBlocks::zeros_like(like)),
      v_(ParameterBlocks::zeros_like(like)) {}

void Optimizer::apply(PolicyParameters& params, const PolicyGradient& grad) {
  if (kind_ == OptimizerKind::sgd) {
    for (int b = 0; b < kBlockCount; ++b)
      params.block[b].noalias() += lr_ * grad.block[b];
    return;
  }
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int b = 0; b < kBlockCount; ++b) {
    m_.block[b] = beta1_ * m_.block[b] + (1.0 - beta1_) * grad.block[b];
    v_.block[b] = beta2_ * v_.block[b].array().matrix() +
                  (1.0 - beta2_) * grad.block[b].array().square().matrix();
    params.block[b].array() +=
        lr_ * (m_.block[b].array() / c1) / ((v_.block[b].array() / c2).sqrt() + eps_);
  }
}

GrpoTrainer::GrpoTrainer(PolicyParameters init, RewardWeights weights, GrpoConfig cfg,
                         Stage stage, bool non_sft, GenerationParams gen)
    : policy_(std::move(init)),
      reference_(policy_),
      weights_(weights),
      cfg_(cfg),
      stage_(stage),
      non_sft_(non_sft),
      gen_(gen),
      opt_(policy_, cfg) {
  cfg_.validate();
  weights_.validate();
}

std::vector<FrozenGroup> GrpoTrainer::sample_groups(const PolicyParameters& sampling_policy,
                                                    std::span<const Episode> batch,
                                                    CounterRng step_stream,
                                                    int workers) const {
  std::vector<FrozenGroup> groups(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    groups[b].episode = batch[b];
    groups[b].items.resize(static_cast<std::size_t>(cfg_.group_size));
  }
  const std::size_t grid = batch.size() * static_cast<std::size_t>(cfg_.group_size);
  parallel_for(grid, workers, [&](std::size_t k) {
    std::size_t b = k / static_cast<std::size_t>(cfg_.group_size);
    std::size_t g = k % static_cast<std::size_t>(cfg_.group_size);
    const Episode& episode = groups[b].episode;
    CounterRng stream = step_stream.derive(b).derive(g);
    FrozenRollout& item = groups[b].items[g];
    item.rollout = sample_rollout(sampling_policy, episode.view(), episode.task, gen_, stream);
    item.old_step_logprobs =
        per_step_logprobs(sampling_policy, episode.view(), episode.task, item.rollout);
    ParseContext ctx{episode.task, sampling_policy.mode, sampling_policy.vocab};
    item.reward = score_rollout(item.rollout, *episode.call, ctx, episode.true_phase(),
                                weights_, stage_, non_sft_);
  });
  for (FrozenGroup& group : groups) {
    std::vector<double> rewards;
    rewards.reserve(group.items.size());
    for (const FrozenRollout& item : group.items) rewards.push_back(item.reward.total);
    std::vector<double> adv = normalize_advantages(rewards, cfg_.std_epsilon);
    for (std::size_t i = 0; i < group.items.size(); ++i) group.items[i].advantage = adv[i];
  }
  return groups;
}

StepStats GrpoTrainer::step(std::span<const Episode> batch, CounterRng step_stream,
                            int step_index, int workers, const RolloutTraceSink& trace) {
  PolicyParameters old = policy_;
  std::vector<FrozenGroup> groups = sample_groups(old, batch, step_stream, workers);

  StepStats stats;
  stats.step = step_index;
  double n = 0.0;
  for (std::size_t b = 0; b < groups.size(); ++b) {
    for (std::size_t g = 0; g < groups[b].items.size(); ++g) {
      const FrozenRollout& item = groups[b].items[g];
      stats.mean_reward += item.reward.total;
      stats.accuracy_rate += item.reward.accuracy;
      stats.format_rate += item.reward.format;
      stats.mean_think_len += item.rollout.think_len;
      n += 1.0;
      if (trace)
        trace(step_index, groups[b].episode, static_cast<int>(g), item.rollout, item.reward);
    }
  }
  if (n > 0.0) {
    stats.mean_reward /= n;
    stats.accuracy_rate /= n;
    stats.format_rate /= n;
    stats.mean_think_len /= n;
  }

  for (int epoch = 0; epoch < cfg_.epochs_per_batch; ++epoch) {
    ObjectiveStats ostats;
    PolicyGradient grad = grpo_gradient(policy_, reference_, groups, cfg_, &ostats);
    if (epoch == 0) {
      stats.mean_kl = ostats.mean_kl;
      stats.clip_fraction = ostats.clip_fraction;
      stats.objective = ostats.objective;
      stats.grad_norm = std::sqrt(grad.squared_norm());
    }
    opt_.apply(policy_, grad);
  }
  return stats;
}

}  // namespace fraudrl
