#pragma once

#include <optional>

#include "fraudrl/grammar.hpp"
#include "fraudrl/types.hpp"

namespace fraudrl {

// Rule-based reward stack. Component formulas:
//   accuracy    1{answer well-formed and correct}
//   format      1{output matches the grammar}
//   depth       min(ln(|tau|+1)/ln(depth_norm_len+1), 1) * depth_ceiling
//   efficiency  -min(max(ln(E+10)/ln(curvature), 0.1), 1) * penalty_cap,
//                 E = max(0, |tau| - excess_threshold)
//   phase       phase_bonus*1{claim correct} - phase_penalty*1{final and undecided}
struct RewardWeights {
  double accuracy = 5.0;           // alpha
  double format = 1.0;             // beta
  double efficiency = 1.0;         // lambda
  double phase = 5.0;              // delta
  double depth_ceiling = 5.0;
  double penalty_cap = 5.0;
  double depth_norm_len = 200.0;
  double excess_threshold = 200.0;
  double excess_curvature = 1000.0;
  double phase_bonus = 1.0;
  double phase_penalty = 1.0;

  void validate() const;
};

// Training stages select the composite:
//   rl    accuracy*alpha + format*beta + gamma*depth        (gamma = 1{non-SFT})
//   lcrl  accuracy*alpha + format*beta + lambda*efficiency
//   real  accuracy*alpha + format*beta + eta*depth + delta*phase  (eta = 1{non-SFT})
enum class Stage { rl, lcrl, real };

const char* stage_name(Stage s);

double depth_reward(double think_len, double norm_len, double ceiling);
double efficiency_reward(double think_len, double threshold, double curvature, double cap);
double accuracy_reward(const std::optional<ParsedOutput>& parsed, const CallInstance& call,
                       Task task);
double format_reward(const std::optional<ParsedOutput>& parsed);
double phase_reward(const std::optional<Phase>& claim, Phase truth, bool decided,
                    double bonus, double penalty);

double composite(double r_acc, double r_fmt, double r_depth, double r_eff, double r_phase,
                 const RewardWeights& w, Stage stage, bool non_sft);

struct RewardBreakdown {
  double accuracy = 0.0;
  double format = 0.0;
  double depth = 0.0;
  double efficiency = 0.0;
  double phase = 0.0;
  double total = 0.0;
  Stage stage = Stage::rl;
};

// Parses rollout.rendered and applies the component rules. Depth/efficiency
// use the rollout's emitted think count (identical to the parsed count on
// well-formed outputs). `true_phase` is the episode's ground-truth phase.
RewardBreakdown score_rollout(const Rollout& rollout, const CallInstance& call,
                              const ParseContext& ctx, Phase true_phase,
                              const RewardWeights& w, Stage stage, bool non_sft);

}  // namespace fraudrl
