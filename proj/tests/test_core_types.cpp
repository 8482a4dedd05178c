#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fraudrl/grammar.hpp"
#include "fraudrl/labels.hpp"
#include "fraudrl/rng.hpp"
#include "fraudrl/types.hpp"

using namespace fraudrl;

TEST_CASE("render follows the tag grammar exactly") {
  std::vector<int> two{3, 17};
  CHECK(render({&two, 1, std::nullopt, true}, Task::fraud) ==
        "<think> w_3 w_17 </think><answer> FRAUD </answer>");

  std::vector<int> none;
  CHECK(render({&none, 0, std::nullopt, true}, Task::fraud) ==
        "<think> </think><answer> NOT_FRAUD </answer>");

  std::vector<int> one{3};
  CHECK(render({&one, 1, std::nullopt, false}, Task::fraud) ==
        "<think> w_3 </think><answer> FRAUD");

  CHECK(render({&one, 2, Phase::early, true}, Task::fraud) ==
        "<phase> early </phase><think> w_3 </think><answer> ABSTAIN </answer>");
}

TEST_CASE("parse accepts exactly the grammar") {
  ParseContext ctx{Task::fraud, Mode::full_call, 96};
  auto ok = parse_output("<think> w_1 </think><answer> FRAUD </answer>", ctx);
  REQUIRE(ok.has_value());
  CHECK(ok->think_tokens == std::vector<int>{1});
  CHECK(ok->answer == 1);
  CHECK(!ok->phase_claim.has_value());

  CHECK(!parse_output("<think> w_1 </think><answer> FRAUD", ctx).has_value());
  CHECK(!parse_output("<answer> FRAUD </answer>", ctx).has_value());
  CHECK(!parse_output("<think> w_1 </think><answer> FRAUD </answer> ", ctx).has_value());
  CHECK(!parse_output("<think> w_1 </think><answer> MAYBE </answer>", ctx).has_value());
  CHECK(!parse_output("<think> w_96 </think><answer> FRAUD </answer>", ctx).has_value());
  CHECK(!parse_output("<think> w_01 </think><answer> FRAUD </answer>", ctx).has_value());
  // Abstain and phase blocks are real-time grammar.
  CHECK(!parse_output("<think> </think><answer> ABSTAIN </answer>", ctx).has_value());
  CHECK(!parse_output("<phase> early </phase><think> </think><answer> FRAUD </answer>", ctx)
             .has_value());

  ParseContext rt{Task::fraud, Mode::real_time, 96};
  auto claimed =
      parse_output("<phase> late </phase><think> w_0 </think><answer> ABSTAIN </answer>", rt);
  REQUIRE(claimed.has_value());
  CHECK(claimed->phase_claim == Phase::late);
  CHECK(claimed->answer == class_count(Task::fraud));
  // The leading phase block is optional in real-time mode.
  auto bare = parse_output("<think> </think><answer> FRAUD </answer>", rt);
  REQUIRE(bare.has_value());
  CHECK(!bare->phase_claim.has_value());
}

TEST_CASE("render/parse round trip on random rollouts") {
  CounterRng rng = CounterRng(2024).derive("roundtrip");
  const int vocab = 96;
  for (int it = 0; it < 10000; ++it) {
    Task task = static_cast<Task>(rng.next_below(3));
    Mode mode = rng.next_below(2) == 0 ? Mode::full_call : Mode::real_time;
    std::vector<int> think(rng.next_below(9));
    for (auto& t : think) t = static_cast<int>(rng.next_below(vocab));
    int rows = class_count(task) + (mode == Mode::real_time ? 1 : 0);
    int answer = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(rows)));
    std::optional<Phase> phase;
    if (mode == Mode::real_time) phase = static_cast<Phase>(rng.next_below(3));
    bool well_formed = rng.next_below(2) == 0;

    std::string text = render({&think, answer, phase, well_formed}, task);
    auto parsed = parse_output(text, ParseContext{task, mode, vocab});
    if (!well_formed) {
      CHECK(!parsed.has_value());
      continue;
    }
    REQUIRE(parsed.has_value());
    CHECK(parsed->think_tokens == think);
    CHECK(parsed->answer == answer);
    CHECK(parsed->phase_claim == phase);
    // parse then render is the identity on well-formed strings
    CHECK(render({&parsed->think_tokens, parsed->answer, parsed->phase_claim, true}, task) ==
          text);
  }
}

TEST_CASE("ground-truth phase partition") {
  CHECK(ground_truth_phase(2, 6) == Phase::early);
  CHECK(ground_truth_phase(3, 6) == Phase::late);
  CHECK(ground_truth_phase(6, 6) == Phase::final);
  CHECK(ground_truth_phase(1, 1) == Phase::final);

  for (int n = 1; n <= 20; ++n) {
    int early = 0, late = 0, final_count = 0;
    for (int i = 1; i <= n; ++i) {
      Phase p = ground_truth_phase(i, n);
      early += p == Phase::early;
      late += p == Phase::late;
      final_count += p == Phase::final;
      // exact partition: early iff 2i < n, final iff i = n
      CHECK((p == Phase::early) == (2 * i < n));
      CHECK((p == Phase::final) == (i == n));
    }
    CHECK(early + late + final_count == n);
    CHECK(final_count == 1);
  }
}

TEST_CASE("built-in label tables match the shipped files") {
  std::string base = std::string(FRAUDRL_SOURCE_DIR) + "/data";
  struct Row {
    Task task;
    const char* file;
  };
  for (const Row& row : {Row{Task::scenario, "scenario_labels.txt"},
                         Row{Task::fraud, "fraud_labels.txt"},
                         Row{Task::fraud_type, "fraud_type_labels.txt"}}) {
    auto from_file = load_label_file(base + "/" + row.file);
    CHECK(from_file == label_names(row.task));
  }
}
