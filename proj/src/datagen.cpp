#include "fraudrl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "fraudrl/errors.hpp"
#include "fraudrl/parallel.hpp"

namespace fraudrl {

void CorpusConfig::validate() const {
  if (scenario_cue_width < 1) throw DataError("corpus config: scenario_cue_width must be >= 1");
  if (fraud_cue_width < 1) throw DataError("corpus config: fraud_cue_width must be >= 1");
  if (noise_begin() >= vocab_size)
    throw DataError("corpus config: 7*scenario_cue_width + 7*fraud_cue_width must be < vocab_size");
  if (!(signal_density > 0.0 && signal_density <= 1.0))
    throw DataError("corpus config: signal_density must be in (0, 1]");
  if (!(fraud_onset_fraction >= 0.0 && fraud_onset_fraction < 1.0))
    throw DataError("corpus config: fraud_onset_fraction must be in [0, 1)");
  if (!(p_fraud >= 0.0 && p_fraud <= 1.0))
    throw DataError("corpus config: p_fraud must be in [0, 1]");
  if (n_turns_min < 1 || n_turns_max < n_turns_min)
    throw DataError("corpus config: need 1 <= n_turns_min <= n_turns_max");
  if (tokens_per_turn_min < 1 || tokens_per_turn_max < tokens_per_turn_min)
    throw DataError("corpus config: need 1 <= tokens_per_turn_min <= tokens_per_turn_max");
  for (const auto* priors : {&scenario_priors, &fraud_type_priors}) {
    if (priors->empty()) continue;
    std::size_t want = priors == &scenario_priors ? kScenarioClasses : kFraudTypeClasses;
    if (priors->size() != want) throw DataError("corpus config: priors must have 7 entries");
    double sum = 0.0;
    for (double p : *priors) {
      if (p < 0.0) throw DataError("corpus config: priors must be nonnegative");
      sum += p;
    }
    if (sum <= 0.0) throw DataError("corpus config: priors must not sum to zero");
  }
}

namespace {

int draw_class(CounterRng& rng, const std::vector<double>& priors, int n) {
  if (priors.empty()) return static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
  double sum = 0.0;
  for (double p : priors) sum += p;
  double u = rng.next_double() * sum;
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += priors[i];
    if (u < cum) return i;
  }
  return n - 1;
}

CallInstance generate_instance(const CorpusConfig& cfg, int index, CounterRng rng) {
  CallInstance call;
  call.seed = rng.key();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "call-%06d", index);
  call.id = buf;

  int n = rng.next_int(cfg.n_turns_min, cfg.n_turns_max);
  call.fraud_label = rng.next_double() < cfg.p_fraud ? 1 : 0;
  call.scenario_label = draw_class(rng, cfg.scenario_priors, kScenarioClasses);
  if (call.fraud_label == 1)
    call.fraud_type_label = draw_class(rng, cfg.fraud_type_priors, kFraudTypeClasses);

  int noise_width = cfg.vocab_size - cfg.noise_begin();
  call.turns.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    Turn turn;
    turn.index = i;
    turn.speaker = (i % 2 == 1) ? Speaker::caller : Speaker::callee;
    int len = rng.next_int(cfg.tokens_per_turn_min, cfg.tokens_per_turn_max);
    turn.tokens.reserve(static_cast<std::size_t>(len));
    // Fraud evidence appears strictly after the first n*q turns, so the first
    // turn of a fraud call is indistinguishable from a benign one (for q > 0).
    bool fraud_evident = call.fraud_label == 1 &&
                         static_cast<double>(i) > n * cfg.fraud_onset_fraction;
    int signal_draws = 0;
    for (int t = 0; t < len; ++t) {
      int token;
      if (rng.next_double() < cfg.signal_density) {
        bool use_fraud_block = fraud_evident && signal_draws % 2 == 1;
        ++signal_draws;
        if (use_fraud_block)
          token = cfg.fraud_block_begin(*call.fraud_type_label) +
                  static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.fraud_cue_width)));
        else
          token = cfg.scenario_block_begin(call.scenario_label) +
                  static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.scenario_cue_width)));
      } else {
        token = cfg.noise_begin() +
                static_cast<int>(rng.next_below(static_cast<std::uint64_t>(noise_width)));
      }
      turn.tokens.push_back(token);
    }
    call.turns.push_back(std::move(turn));
  }
  return call;
}

}  // namespace

std::vector<CallInstance> generate_corpus(const CorpusConfig& config, int count,
                                          int workers) {
  config.validate();
  if (count < 0) throw DataError("generate_corpus: count must be >= 0");
  std::vector<CallInstance> corpus(static_cast<std::size_t>(count));
  CounterRng base = CounterRng(config.seed).derive("instance");
  parallel_for(static_cast<std::size_t>(count), workers, [&](std::size_t i) {
    corpus[i] = generate_instance(config, static_cast<int>(i),
                                  base.derive(static_cast<std::uint64_t>(i)));
  });
  return corpus;
}

SplitResult stratified_split(const std::vector<CallInstance>& corpus,
                             double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("stratified_split: train_fraction must be in (0, 1)");

  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& c = corpus[i];
    strata[{c.scenario_label, c.fraud_label, c.fraud_type_label.value_or(-1)}].push_back(i);
  }

  std::vector<char> in_train(corpus.size(), 0);
  SplitResult out;
  CounterRng root = CounterRng(seed).derive("split");
  std::uint64_t stratum_index = 0;
  for (auto& [key, members] : strata) {
    CounterRng rng = root.derive(stratum_index++);
    std::size_t m = members.size();
    if (m < 2) {
      ++out.tiny_strata;
      for (std::size_t i : members) in_train[i] = 1;
      continue;
    }
    for (std::size_t j = m - 1; j > 0; --j)
      std::swap(members[j], members[rng.next_below(j + 1)]);
    auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m)));
    take = std::clamp<std::size_t>(take, 1, m - 1);
    for (std::size_t j = 0; j < take; ++j) in_train[members[j]] = 1;
  }
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (in_train[i] ? out.train : out.eval).push_back(corpus[i]);
  return out;
}

namespace {

nlohmann::ordered_json instance_to_json(const CallInstance& c) {
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& t : c.turns) {
    turns.push_back({{"index", t.index},
                     {"speaker", t.speaker == Speaker::caller ? "caller" : "callee"},
                     {"tokens", t.tokens}});
  }
  nlohmann::ordered_json j{{"id", c.id},
                           {"turns", std::move(turns)},
                           {"scenario_label", c.scenario_label},
                           {"fraud_label", c.fraud_label}};
  if (c.fraud_type_label) j["fraud_type_label"] = *c.fraud_type_label;
  j["seed"] = c.seed;
  return j;
}

CallInstance instance_from_json(const nlohmann::json& j) {
  CallInstance c;
  c.id = j.at("id").get<std::string>();
  for (const auto& tj : j.at("turns")) {
    Turn t;
    t.index = tj.at("index").get<int>();
    std::string speaker = tj.at("speaker").get<std::string>();
    if (speaker != "caller" && speaker != "callee")
      throw DataError("corpus: unknown speaker '" + speaker + "'");
    t.speaker = speaker == "caller" ? Speaker::caller : Speaker::callee;
    t.tokens = tj.at("tokens").get<std::vector<int>>();
    c.turns.push_back(std::move(t));
  }
  c.scenario_label = j.at("scenario_label").get<int>();
  c.fraud_label = j.at("fraud_label").get<int>();
  if (j.contains("fraud_type_label")) c.fraud_type_label = j.at("fraud_type_label").get<int>();
  if ((c.fraud_label == 1) != c.fraud_type_label.has_value())
    throw DataError("corpus: fraud_type_label must be present iff fraud_label=1 (id " + c.id + ")");
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void write_corpus_jsonl(const std::string& path, const std::vector<CallInstance>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open corpus file for writing: " + path);
  for (const auto& c : corpus) out << instance_to_json(c).dump() << '\n';
}

std::vector<CallInstance> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<CallInstance> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      corpus.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace fraudrl
