#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fraudrl/grpo.hpp"
#include "fraudrl/reward.hpp"

using namespace fraudrl;

namespace {

CallInstance fraud_call() {
  CallInstance call;
  call.id = "f";
  call.turns.push_back(Turn{1, Speaker::caller, {0, 1}});
  call.fraud_label = 1;
  call.fraud_type_label = 2;
  return call;
}

std::optional<ParsedOutput> parse_fraud(const std::string& text,
                                        Mode mode = Mode::full_call) {
  return parse_output(text, ParseContext{Task::fraud, mode, 96});
}

}  // namespace

TEST_CASE("accuracy reward is the correctness indicator") {
  CallInstance call = fraud_call();
  CHECK(accuracy_reward(parse_fraud("<think> w_1 </think><answer> FRAUD </answer>"), call,
                        Task::fraud) == 1.0);
  CHECK(accuracy_reward(parse_fraud("<think> w_1 </think><answer> FRAUD"), call,
                        Task::fraud) == 0.0);
  CHECK(accuracy_reward(parse_fraud("<think> </think><answer> NOT_FRAUD </answer>"), call,
                        Task::fraud) == 0.0);
  // abstaining never scores accuracy; timing is the phase reward's job
  CHECK(accuracy_reward(
            parse_fraud("<think> </think><answer> ABSTAIN </answer>", Mode::real_time),
            call, Task::fraud) == 0.0);
}

TEST_CASE("format reward is the well-formedness indicator") {
  CHECK(format_reward(parse_fraud("<think> w_1 </think><answer> FRAUD </answer>")) == 1.0);
  CHECK(format_reward(parse_fraud("<think> w_1 </think><answer> FRAUD")) == 0.0);
  CHECK(format_reward(parse_fraud("<think> </think><answer> FRAUD </answer>")) == 1.0);
}

TEST_CASE("depth reward boundary and interior values") {
  CHECK(depth_reward(0, 200, 5) == 0.0);
  CHECK(depth_reward(200, 200, 5) == 5.0);
  CHECK(depth_reward(500, 200, 5) == 5.0);  // clamp above the limit
  // independent route: natural-log evaluation of the same formula
  CHECK(depth_reward(13, 200, 1) ==
        doctest::Approx(std::log(14.0) / std::log(201.0)).epsilon(1e-12));
  CHECK(depth_reward(13, 200, 1) == doctest::Approx(0.49764).epsilon(1e-4));
}

TEST_CASE("efficiency penalty boundary and interior values") {
  // below the threshold the penalty is the constant -cap/3 (curvature 1000), exactly
  CHECK(efficiency_reward(0, 200, 1000, 5) == -5.0 / 3.0);
  CHECK(efficiency_reward(200, 200, 1000, 5) == -5.0 / 3.0);
  CHECK(efficiency_reward(150, 200, 1000, 5) == -5.0 / 3.0);
  // saturation at excess >= 990, exactly
  CHECK(efficiency_reward(1190, 200, 1000, 5) == -5.0);
  CHECK(efficiency_reward(5000, 200, 1000, 5) == -5.0);
  // interior point, independent natural-log route
  double e = 300.0 - 200.0;
  CHECK(efficiency_reward(300, 200, 1000, 5) ==
        doctest::Approx(-std::log(e + 10.0) / std::log(1000.0) * 5.0).epsilon(1e-12));
}

TEST_CASE("depth is nondecreasing and efficiency nonincreasing in think length") {
  double prev_depth = -1.0, prev_eff = 1.0;
  for (int len = 0; len <= 5000; ++len) {
    double d = depth_reward(len, 200, 5);
    double e = efficiency_reward(len, 200, 1000, 5);
    CHECK(d >= prev_depth);
    CHECK(e <= prev_eff + 1e-15);
    CHECK(d >= 0.0);
    CHECK(d <= 5.0);
    CHECK(e >= -5.0);
    CHECK(e <= -5.0 / 3.0);
    prev_depth = d;
    prev_eff = e;
  }
}

TEST_CASE("phase reward combines the bonus and the indecision penalty") {
  CHECK(phase_reward(Phase::early, Phase::early, false, 1, 1) == 1.0);
  CHECK(phase_reward(Phase::late, Phase::final, false, 1, 1) == -1.0);
  // both indicators can fire at once
  CHECK(phase_reward(Phase::final, Phase::final, false, 1, 1) == 0.0);
  CHECK(phase_reward(Phase::final, Phase::final, true, 1, 1) == 1.0);
  CHECK(phase_reward(std::nullopt, Phase::final, false, 1, 1) == -1.0);
  CHECK(phase_reward(std::nullopt, Phase::early, false, 1, 1) == 0.0);
}

TEST_CASE("stage composites") {
  RewardWeights w;
  // SFT-initialized stage-1 run: depth indicator off
  CHECK(composite(1, 1, 3.0, -1.0, 1.0, w, Stage::rl, false) == 6.0);
  // non-SFT stage-1 run: depth active
  CHECK(composite(1, 1, 3.0, -1.0, 1.0, w, Stage::rl, true) == 9.0);
  // length-constrained composite
  CHECK(composite(1, 1, 3.0, -5.0 / 3.0, 1.0, w, Stage::lcrl, true) ==
        doctest::Approx(13.0 / 3.0).epsilon(1e-12));
  // real-time composite, non-SFT
  CHECK(composite(0, 1, 0.0, -1.0, 1.0, w, Stage::real, true) == 6.0);
  // linearity in each weight
  RewardWeights scaled = w;
  scaled.accuracy *= 3.0;
  CHECK(composite(1, 1, 2.0, -1.0, 0.5, scaled, Stage::rl, true) -
            composite(1, 1, 2.0, -1.0, 0.5, w, Stage::rl, true) ==
        2.0 * w.accuracy);
}

TEST_CASE("score_rollout ties the total to the stage formula") {
  CallInstance call = fraud_call();
  RewardWeights w;
  Rollout r;
  r.think_tokens = {1, 0, 1};
  r.think_len = 3;
  r.answer = 1;
  r.well_formed = true;
  std::vector<int> toks = r.think_tokens;
  r.rendered = render({&toks, r.answer, std::nullopt, true}, Task::fraud);

  ParseContext ctx{Task::fraud, Mode::full_call, 96};
  for (Stage stage : {Stage::rl, Stage::lcrl, Stage::real}) {
    for (bool non_sft : {false, true}) {
      RewardBreakdown b = score_rollout(r, call, ctx, Phase::final, w, stage, non_sft);
      CHECK(b.total == composite(b.accuracy, b.format, b.depth, b.efficiency, b.phase, w,
                                 stage, non_sft));
      CHECK(b.accuracy == 1.0);
      CHECK(b.format == 1.0);
    }
  }

  // malformed: no extractable answer
  Rollout bad = r;
  bad.rendered = render({&toks, bad.answer, std::nullopt, false}, Task::fraud);
  RewardBreakdown b = score_rollout(bad, call, ctx, Phase::final, w, Stage::rl, true);
  CHECK(b.accuracy == 0.0);
  CHECK(b.format == 0.0);
  CHECK(b.depth == depth_reward(3, w.depth_norm_len, w.depth_ceiling));
}

TEST_CASE("rewards are pure functions") {
  CallInstance call = fraud_call();
  RewardWeights w;
  Rollout r;
  r.think_tokens = {0};
  r.think_len = 1;
  r.answer = 1;
  r.well_formed = true;
  std::vector<int> toks = r.think_tokens;
  r.rendered = render({&toks, 1, std::nullopt, true}, Task::fraud);
  ParseContext ctx{Task::fraud, Mode::full_call, 96};
  RewardBreakdown a = score_rollout(r, call, ctx, Phase::late, w, Stage::real, true);
  RewardBreakdown b = score_rollout(r, call, ctx, Phase::late, w, Stage::real, true);
  CHECK(a.total == b.total);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.phase == b.phase);
}

TEST_CASE("constant efficiency term cancels in group advantages") {
  // all candidates under the threshold share the constant -cap/3; advantages
  // with and without that constant are identical
  std::vector<double> base = {6.0, 5.0, 1.0, 6.0};
  std::vector<double> with_const = base;
  for (double& r : with_const) r += efficiency_reward(10, 200, 1000, 5);
  auto a = normalize_advantages(base, 1e-8);
  auto b = normalize_advantages(with_const, 1e-8);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}
