#include "fraudrl/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fraudrl/errors.hpp"

namespace fraudrl {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!obj.is_object()) throw DataError("config: " + context + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw DataError("config: unknown key '" + key + "' in " + context);
}

template <class T>
void get_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

const std::set<std::string> kStageNames = {"gen-data", "sft-warmup", "rl", "rs",
                                           "ls",       "real",       "eval"};

CorpusConfig parse_corpus(const json& j) {
  check_keys(j, {"vocab_size", "scenario_cue_width", "fraud_cue_width", "n_turns_min",
                 "n_turns_max", "tokens_per_turn_min", "tokens_per_turn_max",
                 "signal_density", "fraud_onset_fraction", "p_fraud", "scenario_priors",
                 "fraud_type_priors"},
             "corpus");
  CorpusConfig c;
  get_to(j, "vocab_size", c.vocab_size);
  get_to(j, "scenario_cue_width", c.scenario_cue_width);
  get_to(j, "fraud_cue_width", c.fraud_cue_width);
  get_to(j, "n_turns_min", c.n_turns_min);
  get_to(j, "n_turns_max", c.n_turns_max);
  get_to(j, "tokens_per_turn_min", c.tokens_per_turn_min);
  get_to(j, "tokens_per_turn_max", c.tokens_per_turn_max);
  get_to(j, "signal_density", c.signal_density);
  get_to(j, "fraud_onset_fraction", c.fraud_onset_fraction);
  get_to(j, "p_fraud", c.p_fraud);
  get_to(j, "scenario_priors", c.scenario_priors);
  get_to(j, "fraud_type_priors", c.fraud_type_priors);
  return c;
}

RewardWeights parse_weights_patch(const json& j, RewardWeights base) {
  check_keys(j, {"accuracy", "format", "efficiency", "phase", "depth_ceiling",
                 "penalty_cap", "depth_norm_len", "excess_threshold", "excess_curvature",
                 "phase_bonus", "phase_penalty"},
             "weights");
  get_to(j, "accuracy", base.accuracy);
  get_to(j, "format", base.format);
  get_to(j, "efficiency", base.efficiency);
  get_to(j, "phase", base.phase);
  get_to(j, "depth_ceiling", base.depth_ceiling);
  get_to(j, "penalty_cap", base.penalty_cap);
  get_to(j, "depth_norm_len", base.depth_norm_len);
  get_to(j, "excess_threshold", base.excess_threshold);
  get_to(j, "excess_curvature", base.excess_curvature);
  get_to(j, "phase_bonus", base.phase_bonus);
  get_to(j, "phase_penalty", base.phase_penalty);
  return base;
}

GrpoConfig parse_grpo(const json& j) {
  check_keys(j, {"group_size", "clip", "kl_coefficient", "ratio_granularity",
                 "std_epsilon", "learning_rate", "optimizer", "adam_beta1", "adam_beta2",
                 "adam_epsilon", "batch_size", "steps", "epochs_per_batch"},
             "grpo");
  GrpoConfig g;
  get_to(j, "group_size", g.group_size);
  get_to(j, "clip", g.clip);
  get_to(j, "kl_coefficient", g.kl_coefficient);
  if (j.contains("ratio_granularity")) {
    std::string gr = j.at("ratio_granularity").get<std::string>();
    if (gr == "sequence")
      g.granularity = RatioGranularity::sequence;
    else if (gr == "per-token")
      g.granularity = RatioGranularity::per_token;
    else
      throw DataError("config: ratio_granularity must be 'sequence' or 'per-token'");
  }
  get_to(j, "std_epsilon", g.std_epsilon);
  get_to(j, "learning_rate", g.learning_rate);
  if (j.contains("optimizer")) {
    std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "adam")
      g.optimizer = OptimizerKind::adam;
    else if (opt == "sgd")
      g.optimizer = OptimizerKind::sgd;
    else
      throw DataError("config: optimizer must be 'adam' or 'sgd'");
  }
  get_to(j, "adam_beta1", g.adam_beta1);
  get_to(j, "adam_beta2", g.adam_beta2);
  get_to(j, "adam_epsilon", g.adam_epsilon);
  get_to(j, "batch_size", g.batch_size);
  get_to(j, "steps", g.steps);
  get_to(j, "epochs_per_batch", g.epochs_per_batch);
  return g;
}

GenerationParams parse_generation(const json& j) {
  check_keys(j, {"temperature", "top_p", "top_k", "max_think_tokens"}, "generation");
  GenerationParams g;
  get_to(j, "temperature", g.temperature);
  get_to(j, "top_p", g.top_p);
  get_to(j, "top_k", g.top_k);
  get_to(j, "max_think_tokens", g.max_think_tokens);
  if (!(g.temperature >= 0.0)) throw DataError("config: temperature must be >= 0");
  if (!(g.top_p > 0.0 && g.top_p <= 1.0)) throw DataError("config: top_p must be in (0, 1]");
  if (g.top_k < 1) throw DataError("config: top_k must be >= 1");
  if (g.max_think_tokens < 0) throw DataError("config: max_think_tokens must be >= 0");
  return g;
}

}  // namespace

Task task_from_name(const std::string& name) {
  if (name == "scenario") return Task::scenario;
  if (name == "fraud") return Task::fraud;
  if (name == "fraud_type") return Task::fraud_type;
  throw DataError("config: unknown task '" + name + "'");
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, {"version", "seed", "out_dir", "workers", "task", "corpus", "corpus_count",
                 "train_fraction", "weights", "grpo", "generation", "init_stddev", "stages",
                 "checkpoint_interval", "sft", "eval", "log_reward_traces",
                 "stage_overrides"},
             "top level");
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != kConfigVersion)
    throw DataError("config: missing or unsupported version (expected " +
                    std::to_string(kConfigVersion) + ")");

  RunConfig c;
  get_to(j, "seed", c.seed);
  get_to(j, "out_dir", c.out_dir);
  get_to(j, "workers", c.workers);
  if (c.workers < 1) throw DataError("config: workers must be >= 1");
  if (j.contains("task")) {
    std::string t = j.at("task").get<std::string>();
    c.task = t == "all" ? std::nullopt : std::optional<Task>(task_from_name(t));
  }
  if (j.contains("corpus")) c.corpus = parse_corpus(j.at("corpus"));
  get_to(j, "corpus_count", c.corpus_count);
  get_to(j, "train_fraction", c.train_fraction);
  if (j.contains("weights")) c.weights = parse_weights_patch(j.at("weights"), RewardWeights{});
  if (j.contains("grpo")) c.grpo = parse_grpo(j.at("grpo"));
  if (j.contains("generation")) c.generation = parse_generation(j.at("generation"));
  get_to(j, "init_stddev", c.init_stddev);
  if (j.contains("stages")) {
    c.stages = j.at("stages").get<std::vector<std::string>>();
    std::size_t cursor = 0;
    const std::vector<std::string> order = {"gen-data", "sft-warmup", "rl", "rs",
                                            "ls",       "real",       "eval"};
    for (const auto& s : c.stages) {
      if (!kStageNames.count(s)) throw DataError("config: unknown stage '" + s + "'");
      auto pos = std::find(order.begin() + static_cast<long>(cursor), order.end(), s);
      if (pos == order.end())
        throw DataError("config: stages must be an ordered subset of "
                        "[gen-data, sft-warmup, rl, rs, ls, real, eval]");
      cursor = static_cast<std::size_t>(pos - order.begin()) + 1;
    }
  }
  get_to(j, "checkpoint_interval", c.checkpoint_interval);
  if (j.contains("sft")) {
    check_keys(j.at("sft"), {"epochs", "candidates", "batch_size"}, "sft");
    get_to(j.at("sft"), "epochs", c.sft.epochs);
    get_to(j.at("sft"), "candidates", c.sft.candidates);
    get_to(j.at("sft"), "batch_size", c.sft.batch_size);
  }
  if (j.contains("eval")) {
    check_keys(j.at("eval"), {"type_fraud_only", "band_center", "band_half_width"}, "eval");
    get_to(j.at("eval"), "type_fraud_only", c.eval.type_fraud_only);
    get_to(j.at("eval"), "band_center", c.eval.band_center);
    get_to(j.at("eval"), "band_half_width", c.eval.band_half_width);
  }
  get_to(j, "log_reward_traces", c.log_reward_traces);
  if (j.contains("stage_overrides")) {
    check_keys(j.at("stage_overrides"), {"rl", "ls", "real"}, "stage_overrides");
    for (const auto& [stage, oj] : j.at("stage_overrides").items()) {
      check_keys(oj, {"steps", "weights"}, "stage_overrides." + stage);
      StageOverride ov;
      if (oj.contains("steps")) ov.steps = oj.at("steps").get<int>();
      if (oj.contains("weights")) {
        parse_weights_patch(oj.at("weights"), c.weights);  // key validation
        ov.weights_patch = oj.at("weights");
      }
      c.stage_overrides[stage] = std::move(ov);
    }
  }

  c.corpus.seed = c.seed;  // corpus generation draws from the run seed
  c.corpus.validate();
  c.weights.validate();
  c.grpo.validate();
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw DataError("config: train_fraction must be in (0, 1)");
  if (c.corpus_count < 0) throw DataError("config: corpus_count must be >= 0");
  if (c.checkpoint_interval < 1) throw DataError("config: checkpoint_interval must be >= 1");
  if (c.sft.epochs < 1 || c.sft.candidates < 1 || c.sft.batch_size < 1)
    throw DataError("config: sft settings must be >= 1");
  if (!(c.init_stddev >= 0.0)) throw DataError("config: init_stddev must be >= 0");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("config " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

RewardWeights RunConfig::weights_for_stage(const std::string& stage) const {
  auto it = stage_overrides.find(stage);
  if (it == stage_overrides.end() || it->second.weights_patch.empty()) return weights;
  return parse_weights_patch(it->second.weights_patch, weights);
}

int RunConfig::steps_for_stage(const std::string& stage) const {
  auto it = stage_overrides.find(stage);
  if (it != stage_overrides.end() && it->second.steps) return *it->second.steps;
  return grpo.steps;
}

EvalOptions RunConfig::eval_options(Mode mode) const {
  EvalOptions opt;
  opt.mode = mode;
  opt.type_fraud_only = eval.type_fraud_only;
  opt.band = QualityBand{eval.band_center, eval.band_half_width};
  opt.layout = corpus;
  opt.workers = workers;
  return opt;
}

nlohmann::ordered_json run_config_json(const RunConfig& c) {
  nlohmann::ordered_json corpus{{"vocab_size", c.corpus.vocab_size},
                                {"scenario_cue_width", c.corpus.scenario_cue_width},
                                {"fraud_cue_width", c.corpus.fraud_cue_width},
                                {"n_turns_min", c.corpus.n_turns_min},
                                {"n_turns_max", c.corpus.n_turns_max},
                                {"tokens_per_turn_min", c.corpus.tokens_per_turn_min},
                                {"tokens_per_turn_max", c.corpus.tokens_per_turn_max},
                                {"signal_density", c.corpus.signal_density},
                                {"fraud_onset_fraction", c.corpus.fraud_onset_fraction},
                                {"p_fraud", c.corpus.p_fraud}};
  if (!c.corpus.scenario_priors.empty()) corpus["scenario_priors"] = c.corpus.scenario_priors;
  if (!c.corpus.fraud_type_priors.empty())
    corpus["fraud_type_priors"] = c.corpus.fraud_type_priors;

  nlohmann::ordered_json weights{{"accuracy", c.weights.accuracy},
                                 {"format", c.weights.format},
                                 {"efficiency", c.weights.efficiency},
                                 {"phase", c.weights.phase},
                                 {"depth_ceiling", c.weights.depth_ceiling},
                                 {"penalty_cap", c.weights.penalty_cap},
                                 {"depth_norm_len", c.weights.depth_norm_len},
                                 {"excess_threshold", c.weights.excess_threshold},
                                 {"excess_curvature", c.weights.excess_curvature},
                                 {"phase_bonus", c.weights.phase_bonus},
                                 {"phase_penalty", c.weights.phase_penalty}};

  nlohmann::ordered_json grpo{
      {"group_size", c.grpo.group_size},
      {"clip", c.grpo.clip},
      {"kl_coefficient", c.grpo.kl_coefficient},
      {"ratio_granularity",
       c.grpo.granularity == RatioGranularity::sequence ? "sequence" : "per-token"},
      {"std_epsilon", c.grpo.std_epsilon},
      {"learning_rate", c.grpo.learning_rate},
      {"optimizer", c.grpo.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
      {"adam_beta1", c.grpo.adam_beta1},
      {"adam_beta2", c.grpo.adam_beta2},
      {"adam_epsilon", c.grpo.adam_epsilon},
      {"batch_size", c.grpo.batch_size},
      {"steps", c.grpo.steps},
      {"epochs_per_batch", c.grpo.epochs_per_batch}};

  nlohmann::ordered_json overrides = nlohmann::ordered_json::object();
  for (const auto& [stage, ov] : c.stage_overrides) {
    nlohmann::ordered_json oj = nlohmann::ordered_json::object();
    if (ov.steps) oj["steps"] = *ov.steps;
    if (!ov.weights_patch.empty()) oj["weights"] = ov.weights_patch;
    overrides[stage] = std::move(oj);
  }

  nlohmann::ordered_json j{
      {"version", kConfigVersion},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"workers", c.workers},
      {"task", c.task ? task_name(*c.task) : "all"},
      {"corpus", std::move(corpus)},
      {"corpus_count", c.corpus_count},
      {"train_fraction", c.train_fraction},
      {"weights", std::move(weights)},
      {"grpo", std::move(grpo)},
      {"generation",
       {{"temperature", c.generation.temperature},
        {"top_p", c.generation.top_p},
        {"top_k", c.generation.top_k},
        {"max_think_tokens", c.generation.max_think_tokens}}},
      {"init_stddev", c.init_stddev},
      {"stages", c.stages},
      {"checkpoint_interval", c.checkpoint_interval},
      {"sft",
       {{"epochs", c.sft.epochs},
        {"candidates", c.sft.candidates},
        {"batch_size", c.sft.batch_size}}},
      {"eval",
       {{"type_fraud_only", c.eval.type_fraud_only},
        {"band_center", c.eval.band_center},
        {"band_half_width", c.eval.band_half_width}}},
      {"log_reward_traces", c.log_reward_traces},
  };
  if (!overrides.empty()) j["stage_overrides"] = std::move(overrides);
  return j;
}

}  // namespace fraudrl
