#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fraudrl/datagen.hpp"
#include "fraudrl/errors.hpp"
#include "fraudrl/grammar.hpp"
#include "fraudrl/policy.hpp"

using namespace fraudrl;

namespace {

CorpusConfig small_corpus_config(std::uint64_t seed) {
  CorpusConfig c;
  c.vocab_size = 16;
  c.scenario_cue_width = 1;
  c.fraud_cue_width = 1;
  c.n_turns_min = 2;
  c.n_turns_max = 4;
  c.tokens_per_turn_min = 3;
  c.tokens_per_turn_max = 6;
  c.seed = seed;
  return c;
}

// Independent softmax oracle in extended precision.
std::vector<long double> softmax_oracle(const Vector& logits) {
  std::vector<long double> p(static_cast<std::size_t>(logits.size()));
  long double sum = 0.0L;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    p[static_cast<std::size_t>(i)] = expl(static_cast<long double>(logits[i]));
    sum += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double& coordinate(PolicyParameters& p, int block, Eigen::Index flat) {
  return p.block[block].data()[flat];
}

}  // namespace

TEST_CASE("zero parameters give uniform step distributions") {
  PolicyParameters p = PolicyParameters::zeros(Mode::full_call, 3);
  Vector phi = Vector::Zero(p.feature_dim());
  phi[p.feature_dim() - 1] = 1.0;

  Vector think = step_distribution(p, Task::fraud, Head::think, phi);
  REQUIRE(think.size() == 4);  // w0 w1 w2 stop
  for (int i = 0; i < 4; ++i) CHECK(think[i] == doctest::Approx(0.25).epsilon(1e-12));

  Vector fmt = step_distribution(p, Task::fraud, Head::format, phi);
  CHECK(fmt[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fmt.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("step distributions match an extended-precision oracle") {
  CounterRng rng = CounterRng(5).derive("dist");
  PolicyParameters p =
      PolicyParameters::random_init(Mode::real_time, 16, 0.5, rng.derive("params"));
  for (int trial = 0; trial < 20; ++trial) {
    Vector phi(p.feature_dim());
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = rng.next_gaussian();
    for (Head head : {Head::think, Head::answer, Head::phase, Head::format}) {
      Vector dist = step_distribution(p, Task::scenario, head, phi);
      CHECK(dist.sum() == doctest::Approx(1.0).epsilon(1e-9));
      Vector logits;
      switch (head) {
        case Head::think: logits = p.block[kBlockThink] * phi; break;
        case Head::answer: logits = p.answer_block(Task::scenario) * phi; break;
        case Head::phase: logits = p.block[kBlockPhase] * phi; break;
        case Head::format: {
          logits = Vector(2);
          logits << 0.0, (p.block[kBlockFormat] * phi)(0);
          break;
        }
      }
      auto oracle = softmax_oracle(logits);
      for (Eigen::Index i = 0; i < dist.size(); ++i)
        CHECK(std::abs(dist[i] - static_cast<double>(oracle[static_cast<std::size_t>(i)])) <
              1e-12);
    }
  }
}

TEST_CASE("adding a constant to all logits of a head changes nothing") {
  CounterRng rng = CounterRng(6).derive("shift");
  PolicyParameters p =
      PolicyParameters::random_init(Mode::full_call, 16, 0.3, rng.derive("params"));
  Vector phi(p.feature_dim());
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = rng.next_gaussian();
  phi[p.feature_dim() - 1] = 1.0;  // constant feature

  PolicyParameters shifted = p;
  shifted.block[kBlockThink].col(p.feature_dim() - 1).array() += 17.5;
  Vector a = step_distribution(p, Task::fraud, Head::think, phi);
  Vector b = step_distribution(shifted, Task::fraud, Head::think, phi);
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("sampling contracts") {
  auto corpus = generate_corpus(small_corpus_config(41), 6);
  PolicyParameters p = PolicyParameters::random_init(Mode::full_call, 16, 0.4,
                                                     CounterRng(77).derive("init"));
  EpisodeView view{&corpus[0], corpus[0].turn_count()};
  GenerationParams gen;
  gen.max_think_tokens = 8;

  SUBCASE("greedy is deterministic") {
    GenerationParams greedy = gen;
    greedy.greedy = true;
    Rollout a = sample_rollout(p, view, Task::fraud, greedy, CounterRng(1));
    Rollout b = sample_rollout(p, view, Task::fraud, greedy, CounterRng(999));
    CHECK(a.rendered == b.rendered);
    CHECK(a.think_tokens == b.think_tokens);
    CHECK(a.well_formed == b.well_formed);
  }

  SUBCASE("top_k=1 sampling equals greedy decoding") {
    GenerationParams topk1 = gen;
    topk1.top_k = 1;
    topk1.temperature = 1.7;
    GenerationParams greedy = gen;
    greedy.greedy = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rollout a = sample_rollout(p, view, Task::fraud, topk1, CounterRng(s));
      Rollout b = sample_rollout(p, view, Task::fraud, greedy, CounterRng(s));
      CHECK(a.rendered == b.rendered);
    }
  }

  SUBCASE("think cap zero forces empty reasoning") {
    GenerationParams capped = gen;
    capped.max_think_tokens = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rollout r = sample_rollout(p, view, Task::fraud, capped, CounterRng(s));
      CHECK(r.think_len == 0);
      CHECK(r.forced_stop);
    }
  }

  SUBCASE("temperature zero outside greedy mode is rejected") {
    GenerationParams bad = gen;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(sample_rollout(p, view, Task::fraud, bad, CounterRng(1)), DataError);
  }

  SUBCASE("step logprobs sum to the sequence logprob when unfiltered") {
    GenerationParams unfiltered = gen;
    unfiltered.temperature = 1.0;
    unfiltered.top_k = 17;  // full think support (W + stop)
    unfiltered.top_p = 1.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      Rollout r = sample_rollout(p, view, Task::fraud, unfiltered, CounterRng(s));
      double sum = 0.0;
      for (double lp : r.step_logprobs) sum += lp;
      CHECK(sum == doctest::Approx(sequence_logprob(p, view, Task::fraud, r)).epsilon(1e-9));
      CHECK(r.think_len == static_cast<int>(r.think_tokens.size()));
      auto parsed =
          parse_output(r.rendered, ParseContext{Task::fraud, Mode::full_call, p.vocab});
      CHECK(parsed.has_value() == r.well_formed);
      if (parsed) {
        CHECK(parsed->think_tokens == r.think_tokens);
        CHECK(parsed->answer == r.answer);
      }
    }
  }

  SUBCASE("real-time rollouts carry a phase claim") {
    PolicyParameters rt = p.to_real_time();
    Rollout r = sample_rollout(rt, view, Task::fraud, gen, CounterRng(3));
    CHECK(r.phase_claim.has_value());
    auto parsed =
        parse_output(r.rendered, ParseContext{Task::fraud, Mode::real_time, rt.vocab});
    CHECK(parsed.has_value() == r.well_formed);
  }
}

TEST_CASE("unfiltered sampling reproduces the policy distribution") {
  // temperature 1, top_k = W+1, top_p = 1 must reproduce the softmax within
  // 3-sigma binomial bounds over 1e5 draws.
  PolicyParameters p = PolicyParameters::random_init(Mode::full_call, 16, 0.8,
                                                     CounterRng(11).derive("init"));
  auto corpus = generate_corpus(small_corpus_config(42), 1);
  EpisodeView view{&corpus[0], corpus[0].turn_count()};
  GenerationParams gen;
  gen.temperature = 1.0;
  gen.top_k = 17;
  gen.top_p = 1.0;
  gen.max_think_tokens = 1;  // isolate the first think decision

  Vector phi = base_features(view, p.vocab);
  Vector probs = step_distribution(p, Task::fraud, Head::think, phi);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(probs.size());
  const int draws = 100000;
  CounterRng stream = CounterRng(123).derive("freq");
  for (int i = 0; i < draws; ++i) {
    Rollout r =
        sample_rollout(p, view, Task::fraud, gen, stream.derive(static_cast<std::uint64_t>(i)));
    int first = r.think_len > 0 ? r.think_tokens[0] : p.stop_row();
    counts[first] += 1.0;
  }
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    double expected = probs[i] * draws;
    double sigma = std::sqrt(probs[i] * (1.0 - probs[i]) * draws);
    CHECK(std::abs(counts[i] - expected) <= 3.0 * sigma + 1e-9);
  }
}

TEST_CASE("sequence logprob closed form at zero parameters") {
  PolicyParameters p = PolicyParameters::zeros(Mode::full_call, 3);
  CallInstance call;
  call.id = "t";
  call.turns.push_back(Turn{1, Speaker::caller, {0, 1, 2}});
  call.fraud_label = 1;
  call.fraud_type_label = 0;
  EpisodeView view{&call, 1};

  Rollout r;
  r.think_tokens = {1};
  r.think_len = 1;
  r.answer = 1;
  r.well_formed = true;
  r.forced_stop = false;

  // format 1/2, think token 1/4, stop 1/4, answer 1/2
  double expected = std::log(0.5) + 2.0 * std::log(0.25) + std::log(0.5);
  CHECK(sequence_logprob(p, view, Task::fraud, r) ==
        doctest::Approx(expected).epsilon(1e-12));

  // self-ratio is exactly one
  double lp = sequence_logprob(p, view, Task::fraud, r);
  CHECK(std::exp(lp - lp) == 1.0);
}

TEST_CASE("greedy decisions maximize every per-step factor") {
  auto corpus = generate_corpus(small_corpus_config(43), 3);
  PolicyParameters p = PolicyParameters::random_init(Mode::full_call, 16, 0.4,
                                                     CounterRng(7).derive("init"));
  EpisodeView view{&corpus[1], corpus[1].turn_count()};
  GenerationParams greedy;
  greedy.greedy = true;
  greedy.max_think_tokens = 6;
  Rollout r = sample_rollout(p, view, Task::fraud, greedy, CounterRng(0));
  std::vector<double> lp = per_step_logprobs(p, view, Task::fraud, r);

  // flipping the format choice or the answer cannot increase the logprob
  Rollout flip = r;
  flip.well_formed = !r.well_formed;
  flip.rendered = render({&flip.think_tokens, flip.answer, std::nullopt, flip.well_formed},
                         Task::fraud);
  CHECK(sequence_logprob(p, view, Task::fraud, flip) <=
        sequence_logprob(p, view, Task::fraud, r) + 1e-12);

  Rollout other = r;
  other.answer = 1 - r.answer;
  other.rendered =
      render({&other.think_tokens, other.answer, std::nullopt, other.well_formed}, Task::fraud);
  CHECK(sequence_logprob(p, view, Task::fraud, other) <=
        sequence_logprob(p, view, Task::fraud, r) + 1e-12);
  CHECK(lp.size() == static_cast<std::size_t>(rollout_step_count(p, r)));
}

TEST_CASE("logprob gradient matches central finite differences") {
  auto corpus = generate_corpus(small_corpus_config(44), 4);
  for (Mode mode : {Mode::full_call, Mode::real_time}) {
    PolicyParameters p = PolicyParameters::random_init(
        mode, 16, 0.3, CounterRng(mode == Mode::full_call ? 21 : 22).derive("init"));
    EpisodeView view{&corpus[2], mode == Mode::real_time ? 2 : corpus[2].turn_count()};
    GenerationParams gen;
    gen.max_think_tokens = 6;
    Rollout r = sample_rollout(p, view, Task::scenario, gen, CounterRng(9));
    PolicyGradient grad = logprob_gradient(p, view, Task::scenario, r);

    CounterRng pick = CounterRng(31).derive("coords");
    const double h = 1e-5;
    for (int c = 0; c < 50; ++c) {
      int b = static_cast<int>(pick.next_below(kBlockCount));
      if (p.block[b].size() == 0) {
        --c;
        continue;
      }
      Eigen::Index flat =
          static_cast<Eigen::Index>(pick.next_below(static_cast<std::uint64_t>(p.block[b].size())));
      PolicyParameters lo = p, hi = p;
      coordinate(lo, b, flat) -= h;
      coordinate(hi, b, flat) += h;
      double fd = (sequence_logprob(hi, view, Task::scenario, r) -
                   sequence_logprob(lo, view, Task::scenario, r)) /
                  (2.0 * h);
      double an = grad.block[b].data()[flat];
      double rel = std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-6});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("expected score over answer choices is zero") {
  auto corpus = generate_corpus(small_corpus_config(45), 1);
  PolicyParameters p = PolicyParameters::random_init(Mode::full_call, 16, 0.4,
                                                     CounterRng(13).derive("init"));
  EpisodeView view{&corpus[0], corpus[0].turn_count()};
  GenerationParams gen;
  gen.max_think_tokens = 4;
  Rollout base = sample_rollout(p, view, Task::scenario, gen, CounterRng(5));

  FeatureState state(view, p.vocab);
  for (int tok : base.think_tokens) state.push_think_token(tok);
  Vector probs = step_distribution(p, Task::scenario, Head::answer, state.phi());

  Matrix expectation =
      Matrix::Zero(p.answer_block(Task::scenario).rows(), p.feature_dim());
  for (int a = 0; a < class_count(Task::scenario); ++a) {
    Rollout variant = base;
    variant.answer = a;
    PolicyGradient g = logprob_gradient(p, view, Task::scenario, variant);
    expectation += probs[a] * g.block[kBlockAnswerScenario];
  }
  CHECK(expectation.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient at zero parameters of an empty-think rollout") {
  PolicyParameters p = PolicyParameters::zeros(Mode::full_call, 3);
  CallInstance call;
  call.id = "t";
  call.turns.push_back(Turn{1, Speaker::caller, {0, 2}});
  call.fraud_label = 0;
  EpisodeView view{&call, 1};

  Rollout r;
  r.answer = 1;
  r.well_formed = true;
  r.forced_stop = false;  // explicit stop as the sole think step

  PolicyGradient g = logprob_gradient(p, view, Task::fraud, r);
  Vector phi = base_features(view, 3);
  // answer block rows: (onehot(1) - uniform) outer phi
  Matrix expected = Matrix::Zero(2, p.feature_dim());
  expected.row(0) = -0.5 * phi.transpose();
  expected.row(1) = 0.5 * phi.transpose();
  CHECK((g.block[kBlockAnswerFraud] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("checkpoints round trip byte-exactly") {
  PolicyParameters p = PolicyParameters::random_init(Mode::real_time, 16, 0.3,
                                                     CounterRng(3).derive("init"));
  std::string path =
      (std::filesystem::temp_directory_path() / "fraudrl_ckpt_test.json").string();
  save_checkpoint(Checkpoint{p, true}, path);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.sft_warmstarted);
  CHECK(loaded.params.mode == Mode::real_time);
  CHECK(loaded.params.vocab == 16);
  for (int b = 0; b < kBlockCount; ++b)
    CHECK((loaded.params.block[b] - p.block[b]).cwiseAbs().maxCoeff() == 0.0);

  std::string again =
      (std::filesystem::temp_directory_path() / "fraudrl_ckpt_test2.json").string();
  save_checkpoint(loaded, again);
  std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}
