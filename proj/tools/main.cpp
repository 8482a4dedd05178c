// Command-line front end: corpus generation, staged training, evaluation,
// learning-rate sweeps, latency profiling and bit-exact run replay.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fraudrl/config.hpp"
#include "fraudrl/errors.hpp"
#include "fraudrl/run.hpp"
#include "fraudrl/streaming.hpp"

namespace {

using namespace fraudrl;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int cmd_gen_data(const RunConfig& config, std::optional<int> count, const std::string& out,
                 const std::string& split_train, const std::string& split_eval) {
  int n = count.value_or(config.corpus_count);
  std::vector<CallInstance> corpus = generate_corpus(config.corpus, n, config.workers);
  write_corpus_jsonl(out, corpus);
  std::printf("wrote %zu instances to %s\n", corpus.size(), out.c_str());
  if (!split_train.empty() || !split_eval.empty()) {
    if (split_train.empty() || split_eval.empty())
      throw DataError("--split-train and --split-eval must be given together");
    SplitResult split = stratified_split(corpus, config.train_fraction, config.seed);
    write_corpus_jsonl(split_train, split.train);
    write_corpus_jsonl(split_eval, split.eval);
    std::printf("split %zu/%zu (train/eval)", split.train.size(), split.eval.size());
    if (split.tiny_strata > 0)
      std::printf("; %d strata with < 2 members placed wholly in train",
                  split.tiny_strata);
    std::printf("\n");
  }
  return kExitOk;
}

int cmd_train(const RunConfig& config, const TrainRequest& request) {
  TrainOutcome outcome = run_train_stage(config, request);
  std::printf("stage %s finished; final checkpoint %s (sha256 %s)\n",
              request.stage.c_str(), outcome.final_checkpoint_path.c_str(),
              outcome.final_checkpoint_sha256.substr(0, 12).c_str());
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint,
             const std::string& corpus_path, const std::string& mode_name,
             const std::string& report_path, const std::string& streams_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  std::vector<CallInstance> corpus = read_corpus_jsonl(corpus_path);
  Mode mode = mode_name == "real" ? Mode::real_time : Mode::full_call;
  if (mode == Mode::real_time && ckpt.params.mode != Mode::real_time)
    throw DataError("real-time evaluation needs a real-time checkpoint (stage real)");

  std::vector<StreamResult> streams;
  MetricReport report =
      evaluate_policy(ckpt.params, config.generation, corpus, config.eval_options(mode),
                      mode == Mode::real_time ? &streams : nullptr);
  std::fputs(report_table(report).c_str(), stdout);
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw DataError("cannot open report file: " + report_path);
    out << report_json(report).dump(2) << '\n';
  }
  if (!streams_path.empty() && mode == Mode::real_time) {
    std::ofstream out(streams_path, std::ios::binary);
    if (!out) throw DataError("cannot open stream log: " + streams_path);
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const StreamResult& s = streams[i];
      nlohmann::ordered_json claims = nlohmann::ordered_json::array();
      for (const auto& claim : s.phase_claims)
        claims.push_back(claim ? nlohmann::ordered_json(std::string(phase_name(*claim)))
                               : nlohmann::ordered_json(nullptr));
      nlohmann::ordered_json j{
          {"decided_at_turn",
           s.decided_at_turn ? nlohmann::ordered_json(*s.decided_at_turn)
                             : nlohmann::ordered_json(nullptr)},
          {"decision", s.decision},
          {"turns_consumed", s.turns_consumed},
          {"correct", s.correct},
          {"phase_claims", std::move(claims)}};
      out << j.dump() << '\n';
    }
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& config, const std::string& param,
              const std::vector<double>& values, const std::string& train_path,
              const std::string& eval_path, const std::string& out_path) {
  if (param != "lr" && param != "learning_rate")
    throw DataError("sweep: only --param lr is supported");
  std::vector<CallInstance> train = read_corpus_jsonl(train_path);
  std::vector<CallInstance> eval_corpus = read_corpus_jsonl(eval_path);
  std::vector<SweepRow> rows = run_lr_sweep(config, values, train, eval_corpus);
  std::fputs(sweep_table(rows).c_str(), stdout);
  if (!out_path.empty()) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json rj = report_json(row.report);
      rj["learning_rate"] = row.learning_rate;
      j.push_back(std::move(rj));
    }
    std::ofstream out(out_path, std::ios::binary);
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_profile(const RunConfig& config, const std::vector<std::string>& checkpoints,
                const std::string& corpus_path) {
  std::vector<CallInstance> corpus = read_corpus_jsonl(corpus_path);
  std::vector<ProfileRow> rows = run_profile(config, checkpoints, corpus);
  std::fputs(profile_table(rows).c_str(), stdout);
  return kExitOk;
}

int cmd_replay(const std::string& run_dir, std::optional<int> workers) {
  ReplayOutcome outcome = replay_run(run_dir, workers);
  if (outcome.identical) {
    std::printf("replay: final checkpoint byte-identical (sha256 %s)\n",
                outcome.replay_sha256.substr(0, 12).c_str());
    return kExitOk;
  }
  std::printf("replay: MISMATCH (original %s, replay %s)\n",
              outcome.original_sha256.substr(0, 12).c_str(),
              outcome.replay_sha256.substr(0, 12).c_str());
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale RL pipeline for streaming fraud-call classification"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required(false);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic call corpus");
  std::optional<int> gen_count;
  std::string gen_out = "corpus.jsonl", gen_split_train, gen_split_eval;
  gen->add_option("--count", gen_count, "Instance count (default: config corpus_count)");
  gen->add_option("--out", gen_out, "Corpus output path");
  gen->add_option("--split-train", gen_split_train, "Also write a stratified train split");
  gen->add_option("--split-eval", gen_split_eval, "Also write the matching eval split");

  // train
  auto* train = app.add_subcommand("train", "Run one training stage");
  TrainRequest request;
  std::string init_ckpt;
  int train_workers = 0;
  train->add_option("--stage", request.stage, "sft-warmup|rl|rs|ls|real")->required();
  train->add_option("--corpus", request.corpus_path, "Training corpus (JSONL)")->required();
  train->add_option("--init", init_ckpt, "Initial checkpoint (default: fresh random init)");
  train->add_option("--run-dir", request.run_dir, "Output directory for this run")->required();
  train->add_option("--workers", train_workers, "Worker threads (default: config)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_corpus, eval_mode = "full", eval_report, eval_streams;
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  ev->add_option("--corpus", eval_corpus, "Evaluation corpus (JSONL)")->required();
  ev->add_option("--mode", eval_mode, "full|real (default full)");
  ev->add_option("--report", eval_report, "Write the metric report JSON here");
  ev->add_option("--streams", eval_streams, "Write per-instance stream results here (real mode)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Learning-rate sensitivity grid");
  std::string sweep_param = "lr", sweep_train, sweep_eval, sweep_out;
  std::vector<double> sweep_values;
  sweep->add_option("--param", sweep_param, "Swept parameter (lr)");
  sweep->add_option("--values", sweep_values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--corpus", sweep_train, "Training corpus")->required();
  sweep->add_option("--eval-corpus", sweep_eval, "Evaluation corpus")->required();
  sweep->add_option("--out", sweep_out, "Write the grid as JSON here");

  // profile
  auto* prof = app.add_subcommand("profile", "Latency profile (p50/p95/throughput)");
  std::vector<std::string> prof_ckpts;
  std::string prof_corpus;
  prof->add_option("--checkpoint", prof_ckpts, "Checkpoint(s), one row each")->required();
  prof->add_option("--corpus", prof_corpus, "Corpus to decode")->required();

  // replay
  auto* replay = app.add_subcommand("replay", "Re-execute a run and verify bit-exactness");
  std::string replay_dir;
  std::optional<int> replay_workers;
  replay->add_option("--run", replay_dir, "Run directory to replay")->required();
  replay->add_option("--workers", replay_workers, "Worker count for the replay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config;
    if (!config_path.empty())
      config = load_run_config(config_path);
    else if (!replay->parsed())
      config = parse_run_config(nlohmann::json{{"version", kConfigVersion}});

    if (gen->parsed())
      return cmd_gen_data(config, gen_count, gen_out, gen_split_train, gen_split_eval);
    if (train->parsed()) {
      if (!init_ckpt.empty()) request.init_checkpoint = init_ckpt;
      if (train_workers > 0) request.workers = train_workers;
      return cmd_train(config, request);
    }
    if (ev->parsed())
      return cmd_eval(config, eval_ckpt, eval_corpus, eval_mode, eval_report, eval_streams);
    if (sweep->parsed())
      return cmd_sweep(config, sweep_param, sweep_values, sweep_train, sweep_eval, sweep_out);
    if (prof->parsed()) return cmd_profile(config, prof_ckpts, prof_corpus);
    if (replay->parsed()) return cmd_replay(replay_dir, replay_workers);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
