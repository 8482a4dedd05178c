#include "fraudrl/reward.hpp"

#include <algorithm>
#include <cmath>

#include "fraudrl/errors.hpp"

namespace fraudrl {

void RewardWeights::validate() const {
  for (double v : {accuracy, format, efficiency, phase, depth_ceiling, penalty_cap,
                   phase_bonus, phase_penalty})
    if (!(v >= 0.0)) throw DataError("reward weights: all weights must be nonnegative");
  if (!(excess_curvature > 1.0)) throw DataError("reward weights: excess_curvature must be > 1");
  if (!(depth_norm_len >= 1.0)) throw DataError("reward weights: depth_norm_len must be >= 1");
  if (!(excess_threshold >= 0.0)) throw DataError("reward weights: excess_threshold must be >= 0");
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::rl: return "rl";
    case Stage::lcrl: return "lcrl";
    case Stage::real: return "real";
  }
  return "?";
}

double depth_reward(double think_len, double norm_len, double ceiling) {
  double ratio = std::log(think_len + 1.0) / std::log(norm_len + 1.0);
  return std::min(ratio, 1.0) * ceiling;
}

double efficiency_reward(double think_len, double threshold, double curvature, double cap) {
  double excess = std::max(0.0, think_len - threshold);
  // Evaluated in base 10 with the clamp applied before the division, so that
  // decimal-power thresholds (E+10 = 10, curvature = 1000) divide exactly.
  double num = std::log10(excess + 10.0);
  double den = std::log10(curvature);
  return -(std::clamp(num, 0.1 * den, den) * cap) / den;
}

double accuracy_reward(const std::optional<ParsedOutput>& parsed, const CallInstance& call,
                       Task task) {
  if (!parsed) return 0.0;
  if (parsed->answer == class_count(task)) return 0.0;  // abstain scores no accuracy
  return parsed->answer == instance_label(call, task) ? 1.0 : 0.0;
}

double format_reward(const std::optional<ParsedOutput>& parsed) {
  return parsed ? 1.0 : 0.0;
}

double phase_reward(const std::optional<Phase>& claim, Phase truth, bool decided,
                    double bonus, double penalty) {
  double corr = (claim && *claim == truth) ? 1.0 : 0.0;
  double fail = (truth == Phase::final && !decided) ? 1.0 : 0.0;
  return bonus * corr - penalty * fail;
}

double composite(double r_acc, double r_fmt, double r_depth, double r_eff, double r_phase,
                 const RewardWeights& w, Stage stage, bool non_sft) {
  double indicator = non_sft ? 1.0 : 0.0;
  switch (stage) {
    case Stage::rl:
      return w.accuracy * r_acc + w.format * r_fmt + indicator * r_depth;
    case Stage::lcrl:
      return w.accuracy * r_acc + w.format * r_fmt + w.efficiency * r_eff;
    case Stage::real:
      return w.accuracy * r_acc + w.format * r_fmt + indicator * r_depth +
             w.phase * r_phase;
  }
  return 0.0;
}

RewardBreakdown score_rollout(const Rollout& rollout, const CallInstance& call,
                              const ParseContext& ctx, Phase true_phase,
                              const RewardWeights& w, Stage stage, bool non_sft) {
  auto parsed = parse_output(rollout.rendered, ctx);

  RewardBreakdown out;
  out.stage = stage;
  out.accuracy = accuracy_reward(parsed, call, ctx.task);
  out.format = format_reward(parsed);
  out.depth = depth_reward(rollout.think_len, w.depth_norm_len, w.depth_ceiling);
  out.efficiency = efficiency_reward(rollout.think_len, w.excess_threshold,
                                     w.excess_curvature, w.penalty_cap);
  bool decided = parsed.has_value() && parsed->answer != class_count(ctx.task);
  out.phase = phase_reward(parsed ? parsed->phase_claim : std::nullopt, true_phase,
                           decided, w.phase_bonus, w.phase_penalty);
  out.total = composite(out.accuracy, out.format, out.depth, out.efficiency, out.phase, w,
                        stage, non_sft);
  return out;
}

}  // namespace fraudrl
