#include "fraudrl/compress.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "fraudrl/errors.hpp"
#include "fraudrl/grammar.hpp"
#include "fraudrl/parallel.hpp"

namespace fraudrl {

std::optional<int> select_optimal(const CandidateSet& candidates) {
  std::optional<int> best;
  for (std::size_t i = 0; i < candidates.items.size(); ++i) {
    const Candidate& c = candidates.items[i];
    if (!c.correct) continue;
    if (!best ||
        c.rollout.think_len < candidates.items[static_cast<std::size_t>(*best)].rollout.think_len)
      best = static_cast<int>(i);
  }
  return best;
}

SftDataset build_sft_dataset(const PolicyParameters& policy,
                             std::span<const CallInstance* const> corpus, Task task, int k,
                             const GenerationParams& gen, CounterRng stream, int workers) {
  if (k < 1) throw DataError("build_sft_dataset: k must be >= 1");
  std::vector<std::optional<SftExample>> picks(corpus.size());
  parallel_for(corpus.size(), workers, [&](std::size_t i) {
    const CallInstance& call = *corpus[i];
    Episode episode{&call, call.turn_count(), task};
    CandidateSet set;
    set.instance_id = call.id;
    set.items.reserve(static_cast<std::size_t>(k));
    CounterRng instance_stream = stream.derive(i);
    ParseContext ctx{task, policy.mode, policy.vocab};
    for (int c = 0; c < k; ++c) {
      Candidate cand;
      cand.rollout = sample_rollout(policy, episode.view(), task, gen,
                                    instance_stream.derive(static_cast<std::uint64_t>(c)));
      auto parsed = parse_output(cand.rollout.rendered, ctx);
      cand.correct = accuracy_reward(parsed, call, task) == 1.0;
      set.items.push_back(std::move(cand));
    }
    if (auto best = select_optimal(set))
      picks[i] = SftExample{episode, set.items[static_cast<std::size_t>(*best)].rollout};
  });
  SftDataset out;
  for (auto& pick : picks) {
    if (pick)
      out.examples.push_back(std::move(*pick));
    else
      ++out.skipped;
  }
  return out;
}

void write_sft_dataset_jsonl(const std::string& path, const SftDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open sft dataset for writing: " + path);
  for (const auto& ex : dataset.examples) {
    nlohmann::ordered_json j{{"instance_id", ex.episode.call->id},
                             {"rendered_target", ex.target.rendered},
                             {"think_len", ex.target.think_len}};
    out << j.dump() << '\n';
  }
}

SftDataset build_warmup_dataset(std::span<const CallInstance> corpus, Task task,
                                int noise_begin, int max_cited_tokens) {
  SftDataset out;
  for (const CallInstance& call : corpus) {
    if (task == Task::fraud_type && call.fraud_label != 1) {
      ++out.skipped;
      continue;
    }
    Rollout target;
    for (const Turn& turn : call.turns) {
      for (int tok : turn.tokens) {
        if (tok >= noise_begin) continue;
        if (static_cast<int>(target.think_tokens.size()) >= max_cited_tokens) break;
        target.think_tokens.push_back(tok);
      }
      if (static_cast<int>(target.think_tokens.size()) >= max_cited_tokens) break;
    }
    target.think_len = static_cast<int>(target.think_tokens.size());
    target.answer = instance_label(call, task);
    target.well_formed = true;
    RenderInput rin{&target.think_tokens, target.answer, std::nullopt, true};
    target.rendered = render(rin, task);
    out.examples.push_back(SftExample{Episode{&call, call.turn_count(), task}, target});
  }
  return out;
}

SftTrainer::SftTrainer(PolicyParameters init, const GrpoConfig& cfg)
    : policy_(std::move(init)), opt_(policy_, cfg) {}

SftStats SftTrainer::step(std::span<const SftExample> batch) {
  if (batch.empty()) throw DataError("sft step: empty batch");
  PolicyGradient grad = PolicyGradient::zeros_like(policy_);
  SftStats stats;
  double inv = 1.0 / static_cast<double>(batch.size());
  for (const SftExample& ex : batch) {
    stats.mean_logprob +=
        inv * sequence_logprob(policy_, ex.episode.view(), ex.episode.task, ex.target);
    std::vector<double> w(
        static_cast<std::size_t>(rollout_step_count(policy_, ex.target)), inv);
    accumulate_logprob_gradient(policy_, ex.episode.view(), ex.episode.task, ex.target, w,
                                grad);
  }
  if (!grad.all_finite() || !std::isfinite(stats.mean_logprob))
    throw NumericError("sft step: non-finite gradient");
  stats.grad_norm = std::sqrt(grad.squared_norm());
  opt_.apply(policy_, grad);
  return stats;
}

}  // namespace fraudrl
