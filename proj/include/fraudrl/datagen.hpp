#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fraudrl/rng.hpp"
#include "fraudrl/types.hpp"

namespace fraudrl {

// Vocabulary layout: 7 disjoint scenario-cue blocks of width scenario_cue_width,
// then 7 disjoint fraud-type-cue blocks of width fraud_cue_width, then noise.
struct CorpusConfig {
  int vocab_size = 96;
  int scenario_cue_width = 4;
  int fraud_cue_width = 4;
  int n_turns_min = 4;
  int n_turns_max = 10;
  int tokens_per_turn_min = 6;
  int tokens_per_turn_max = 12;
  double signal_density = 0.4;       // probability a token is a cue draw
  double fraud_onset_fraction = 0.25;  // turns i > n*q of a fraud call carry fraud cues
  double p_fraud = 0.5;
  std::vector<double> scenario_priors;    // empty = uniform
  std::vector<double> fraud_type_priors;  // empty = uniform
  std::uint64_t seed = 0;

  void validate() const;  // throws DataError naming the violated bound

  int scenario_block_begin(int s) const { return s * scenario_cue_width; }
  int fraud_block_begin(int f) const {
    return kScenarioClasses * scenario_cue_width + f * fraud_cue_width;
  }
  int noise_begin() const {
    return kScenarioClasses * scenario_cue_width + kFraudTypeClasses * fraud_cue_width;
  }
  bool is_cue_token(int token) const { return token < noise_begin(); }
};

// Deterministic: byte-identical output for equal (config, count), any worker
// count. Instance i is generated from the sub-stream derive("instance", i) of
// the corpus seed.
std::vector<CallInstance> generate_corpus(const CorpusConfig& config, int count,
                                          int workers = 1);

struct SplitResult {
  std::vector<CallInstance> train;
  std::vector<CallInstance> eval;
  int tiny_strata = 0;  // strata with < 2 members, placed wholly in train
};

// Stratified by (scenario, fraud, fraud_type); each stratum with >= 2 members
// contributes at least one instance to each side.
SplitResult stratified_split(const std::vector<CallInstance>& corpus,
                             double train_fraction, std::uint64_t seed);

void write_corpus_jsonl(const std::string& path, const std::vector<CallInstance>& corpus);
std::vector<CallInstance> read_corpus_jsonl(const std::string& path);

}  // namespace fraudrl
