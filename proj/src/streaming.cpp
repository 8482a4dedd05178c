#include "fraudrl/streaming.hpp"

#include "fraudrl/grammar.hpp"

namespace fraudrl {

std::vector<PrefixInstance> expand_prefixes(const CallInstance& call) {
  int n = call.turn_count();
  std::vector<PrefixInstance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    out.push_back(PrefixInstance{&call, i, ground_truth_phase(i, n)});
  return out;
}

std::vector<Episode> prefix_episodes(std::span<const CallInstance> corpus, Task task) {
  std::vector<Episode> out;
  for (const CallInstance& call : corpus)
    for (const PrefixInstance& p : expand_prefixes(call)) out.push_back(p.episode(task));
  return out;
}

StreamResult stream_evaluate(const PolicyParameters& params, const CallInstance& call,
                             Task task, const GenerationParams& gen, CounterRng rng) {
  StreamResult out;
  const int n = call.turn_count();
  ParseContext ctx{task, params.mode, params.vocab};
  double consumed_tokens = 0.0;
  for (int i = 1; i <= n; ++i) {
    consumed_tokens += static_cast<double>(call.turns[static_cast<std::size_t>(i - 1)].tokens.size());
    EpisodeView prefix{&call, i};
    Rollout rollout = sample_rollout(params, prefix, task, gen,
                                     rng.derive(static_cast<std::uint64_t>(i)));
    auto parsed = parse_output(rollout.rendered, ctx);
    out.phase_claims.push_back(parsed ? parsed->phase_claim : std::nullopt);
    out.turns_consumed = i;
    bool decided = parsed && parsed->answer != class_count(task);
    out.last_rollout = std::move(rollout);
    if (decided) {
      out.decided_at_turn = i;
      out.decision = parsed->answer;
      break;
    }
  }
  out.correct = out.decided_at_turn && out.decision == instance_label(call, task);
  out.synthetic_duration_s = consumed_tokens * 0.5;
  return out;
}

}  // namespace fraudrl
