#include "fraudrl/run.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fraudrl/compress.hpp"
#include "fraudrl/encode.hpp"
#include "fraudrl/errors.hpp"
#include "fraudrl/streaming.hpp"

namespace fraudrl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kSnapshotName = "config_snapshot.json";
constexpr const char* kLogName = "log.jsonl";
constexpr const char* kTracesName = "rewards.jsonl";
constexpr const char* kFinalCheckpoint = "checkpoint_final.json";

Stage stage_kind(const std::string& stage) {
  if (stage == "rl") return Stage::rl;
  if (stage == "ls") return Stage::lcrl;
  if (stage == "real") return Stage::real;
  throw DataError("not a GRPO stage: " + stage);
}

std::vector<Task> tasks_for(const std::optional<Task>& task) {
  if (task) return {*task};
  return {Task::scenario, Task::fraud, Task::fraud_type};
}

std::vector<const CallInstance*> applicable_instances(const std::vector<CallInstance>& corpus,
                                                    Task task) {
  std::vector<const CallInstance*> out;
  for (const auto& call : corpus)
    if (task != Task::fraud_type || call.fraud_label == 1) out.push_back(&call);
  return out;
}

// Deterministic epoch-shuffled batches over an index pool. A batch never
// straddles epochs; a short tail starts the next epoch instead.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t pool_size, CounterRng stream)
      : order_(pool_size), stream_(stream) {
    for (std::size_t i = 0; i < pool_size; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t batch_size) {
    if (order_.empty()) throw DataError("batch scheduler: empty pool");
    batch_size = std::min(batch_size, order_.size());
    if (cursor_ + batch_size > order_.size()) reshuffle();
    std::vector<std::size_t> out(order_.begin() + static_cast<long>(cursor_),
                                 order_.begin() + static_cast<long>(cursor_ + batch_size));
    cursor_ += batch_size;
    return out;
  }

 private:
  void reshuffle() {
    CounterRng rng = stream_.derive(epoch_++);
    for (std::size_t j = order_.size(); j > 1; --j)
      std::swap(order_[j - 1], order_[rng.next_below(j)]);
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  CounterRng stream_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

ordered_json step_stats_json(const StepStats& s) {
  return ordered_json{{"step", s.step},
                      {"mean_reward", s.mean_reward},
                      {"accuracy_rate", s.accuracy_rate},
                      {"format_rate", s.format_rate},
                      {"mean_think_len", s.mean_think_len},
                      {"mean_kl", s.mean_kl},
                      {"clip_fraction", s.clip_fraction},
                      {"grad_norm", s.grad_norm},
                      {"objective", s.objective}};
}

struct RunDirWriter {
  fs::path dir;
  std::ofstream log;
  std::ofstream traces;
  bool want_traces = false;

  explicit RunDirWriter(const std::string& run_dir, bool trace_rewards) : dir(run_dir) {
    if (fs::exists(dir)) throw DataError("run directory already exists: " + run_dir);
    fs::create_directories(dir);
    log.open(dir / kLogName, std::ios::binary);
    if (!log) throw DataError("cannot open run log in " + run_dir);
    want_traces = trace_rewards;
    if (want_traces) {
      traces.open(dir / kTracesName, std::ios::binary);
      if (!traces) throw DataError("cannot open reward trace log in " + run_dir);
    }
  }

  void write_step(const StepStats& s) { log << step_stats_json(s).dump() << '\n'; }

  RolloutTraceSink trace_sink() {
    if (!want_traces) return nullptr;
    return [this](int step, const Episode& episode, int slot, const Rollout& rollout,
                  const RewardBreakdown& reward) {
      ordered_json j{{"step", step},
                     {"instance", episode.call->id},
                     {"visible_turns", episode.visible_turns},
                     {"task", task_name(episode.task)},
                     {"slot", slot},
                     {"think_len", rollout.think_len},
                     {"accuracy", reward.accuracy},
                     {"format", reward.format},
                     {"depth", reward.depth},
                     {"efficiency", reward.efficiency},
                     {"phase", reward.phase},
                     {"total", reward.total}};
      traces << j.dump() << '\n';
    };
  }
};

std::string write_final_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::path path = dir / kFinalCheckpoint;
  save_checkpoint(ckpt, path.string());
  return path.string();
}

void maybe_periodic_checkpoint(const Checkpoint& ckpt, const fs::path& dir, int step,
                               int interval) {
  if (interval <= 0 || (step + 1) % interval != 0) return;
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06d.json", step + 1);
  save_checkpoint(ckpt, (dir / name).string());
}

}  // namespace

TrainOutcome run_train_stage(const RunConfig& config, const TrainRequest& request) {
  const int workers = request.workers.value_or(config.workers);
  const std::string& stage = request.stage;
  if (stage != "sft-warmup" && stage != "rl" && stage != "rs" && stage != "ls" &&
      stage != "real")
    throw DataError("unknown training stage: " + stage);

  std::vector<CallInstance> corpus = read_corpus_jsonl(request.corpus_path);
  if (corpus.empty()) throw DataError("training corpus is empty: " + request.corpus_path);

  CounterRng root(config.seed);
  Checkpoint init;
  if (request.init_checkpoint) {
    init = load_checkpoint(*request.init_checkpoint);
    if (init.params.vocab != config.corpus.vocab_size)
      throw DataError("checkpoint vocabulary does not match the configured corpus");
  } else {
    if (stage == "rs" || stage == "ls" || stage == "real")
      throw DataError("stage '" + stage + "' needs --init (a predecessor checkpoint)");
    init.params = PolicyParameters::random_init(Mode::full_call, config.corpus.vocab_size,
                                                config.init_stddev, root.derive("init"));
    init.sft_warmstarted = false;
  }
  const bool non_sft = !init.sft_warmstarted;

  RunDirWriter out(request.run_dir, config.log_reward_traces);
  std::string snapshot = run_config_json(config).dump(2) + "\n";
  {
    std::ofstream snap(out.dir / kSnapshotName, std::ios::binary);
    snap << snapshot;
  }

  TrainOutcome outcome;
  Checkpoint final_ckpt;

  if (stage == "sft-warmup" || stage == "rs") {
    SftDataset dataset;
    if (stage == "sft-warmup") {
      if (init.params.mode != Mode::full_call)
        throw DataError("sft-warmup expects a full-call policy");
      for (Task task : tasks_for(config.task)) {
        SftDataset part = build_warmup_dataset(corpus, task, config.corpus.noise_begin());
        dataset.skipped += part.skipped;
        for (auto& ex : part.examples) dataset.examples.push_back(std::move(ex));
      }
    } else {
      Task task = config.task.value_or(Task::fraud);
      std::vector<const CallInstance*> pool = applicable_instances(corpus, task);
      dataset = build_sft_dataset(init.params, pool, task, config.sft.candidates,
                                  config.generation, root.derive("rs-sample"), workers);
      write_sft_dataset_jsonl((out.dir / "sft_dataset.jsonl").string(), dataset);
      std::fprintf(stderr, "rs: %zu selected, %d skipped (no correct candidate)\n",
                   dataset.examples.size(), dataset.skipped);
    }
    if (dataset.examples.empty())
      throw DataError("sft stage produced an empty dataset (no usable targets)");

    SftTrainer trainer(init.params, config.grpo);
    BatchScheduler scheduler(dataset.examples.size(), root.derive("batches").derive(stage));
    const auto steps_per_epoch = static_cast<int>(
        (dataset.examples.size() + config.sft.batch_size - 1) /
        static_cast<std::size_t>(config.sft.batch_size));
    int step = 0;
    for (int epoch = 0; epoch < config.sft.epochs; ++epoch) {
      for (int k = 0; k < steps_per_epoch; ++k, ++step) {
        std::vector<SftExample> batch;
        for (std::size_t idx :
             scheduler.next(static_cast<std::size_t>(config.sft.batch_size)))
          batch.push_back(dataset.examples[idx]);
        SftStats stats = trainer.step(batch);
        ordered_json j{{"step", step},
                       {"mean_logprob", stats.mean_logprob},
                       {"grad_norm", stats.grad_norm}};
        out.log << j.dump() << '\n';
        maybe_periodic_checkpoint(
            Checkpoint{trainer.policy(), stage == "sft-warmup" || init.sft_warmstarted},
            out.dir, step, config.checkpoint_interval);
      }
    }
    final_ckpt.params = trainer.policy();
    final_ckpt.sft_warmstarted = stage == "sft-warmup" || init.sft_warmstarted;
  } else {
    PolicyParameters policy = init.params;
    if (stage == "real") policy = policy.to_real_time();

    std::vector<Task> tasks = tasks_for(config.task);
    std::vector<std::vector<Episode>> pools;
    std::vector<BatchScheduler> schedulers;
    for (Task task : tasks) {
      std::vector<Episode> pool;
      if (stage == "real") {
        for (const CallInstance* call : applicable_instances(corpus, task))
          for (const PrefixInstance& p : expand_prefixes(*call))
            pool.push_back(p.episode(task));
      } else {
        for (const CallInstance* call : applicable_instances(corpus, task))
          pool.push_back(Episode{call, call->turn_count(), task});
      }
      if (pool.empty()) throw DataError("no training episodes for task");
      schedulers.emplace_back(pool.size(),
                              root.derive("batches").derive(stage).derive(task_name(task)));
      pools.push_back(std::move(pool));
    }

    GrpoConfig grpo = config.grpo;
    grpo.steps = config.steps_for_stage(stage);
    GrpoTrainer trainer(std::move(policy), config.weights_for_stage(stage), grpo,
                        stage_kind(stage), non_sft, config.generation);
    CounterRng train_stream = root.derive("train").derive(stage);
    RolloutTraceSink trace = out.trace_sink();
    StepStats last;
    for (int step = 0; step < grpo.steps; ++step) {
      std::size_t t = static_cast<std::size_t>(step) % tasks.size();
      std::vector<Episode> batch;
      for (std::size_t idx :
           schedulers[t].next(static_cast<std::size_t>(grpo.batch_size)))
        batch.push_back(pools[t][idx]);
      last = trainer.step(batch, train_stream.derive(static_cast<std::uint64_t>(step)),
                          step, workers, trace);
      out.write_step(last);
      maybe_periodic_checkpoint(Checkpoint{trainer.policy(), init.sft_warmstarted},
                                out.dir, step, config.checkpoint_interval);
    }
    final_ckpt.params = trainer.policy();
    final_ckpt.sft_warmstarted = init.sft_warmstarted;
    outcome.final_accuracy_rate = last.accuracy_rate;
    outcome.final_mean_think_len = last.mean_think_len;
  }

  outcome.final_checkpoint_path = write_final_checkpoint(final_ckpt, out.dir);
  outcome.final_checkpoint_sha256 = sha256_file_hex(outcome.final_checkpoint_path);

  ordered_json inputs{{"corpus",
                       {{"path", fs::absolute(request.corpus_path).string()},
                        {"sha256", sha256_file_hex(request.corpus_path)}}}};
  if (request.init_checkpoint)
    inputs["init_checkpoint"] = {{"path", fs::absolute(*request.init_checkpoint).string()},
                                 {"sha256", sha256_file_hex(*request.init_checkpoint)}};
  ordered_json manifest{
      {"format", "fraudrl-run-manifest"},
      {"version", 1},
      {"rng", kRngVersion},
      {"stage", stage},
      {"seed", config.seed},
      {"workers", workers},
      {"config_sha256", sha256_hex(snapshot)},
      {"inputs", std::move(inputs)},
      {"outputs",
       {{"final_checkpoint", kFinalCheckpoint},
        {"final_checkpoint_sha256", outcome.final_checkpoint_sha256}}},
  };
  std::ofstream mf(out.dir / kManifestName, std::ios::binary);
  mf << manifest.dump(2) << '\n';
  return outcome;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

ReplayOutcome replay_run(const std::string& run_dir, std::optional<int> workers) {
  fs::path dir(run_dir);
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifestName));
  } catch (const json::exception& e) {
    throw DataError("manifest in " + run_dir + ": " + e.what());
  }
  if (manifest.value("format", "") != "fraudrl-run-manifest")
    throw DataError("not a run directory (bad manifest): " + run_dir);
  if (manifest.value("rng", "") != kRngVersion)
    throw DataError("run was recorded with a different RNG version");

  RunConfig config = load_run_config((dir / kSnapshotName).string());

  TrainRequest request;
  request.stage = manifest.at("stage").get<std::string>();
  request.corpus_path = manifest.at("inputs").at("corpus").at("path").get<std::string>();
  if (sha256_file_hex(request.corpus_path) !=
      manifest.at("inputs").at("corpus").at("sha256").get<std::string>())
    throw DataError("replay: corpus file changed since the original run");
  if (manifest.at("inputs").contains("init_checkpoint")) {
    const auto& ij = manifest.at("inputs").at("init_checkpoint");
    request.init_checkpoint = ij.at("path").get<std::string>();
    if (sha256_file_hex(*request.init_checkpoint) != ij.at("sha256").get<std::string>())
      throw DataError("replay: init checkpoint changed since the original run");
  }
  int replay_workers = workers.value_or(manifest.at("workers").get<int>());
  request.workers = replay_workers;
  request.run_dir = (dir / ("replay_w" + std::to_string(replay_workers))).string();

  TrainOutcome outcome = run_train_stage(config, request);

  ReplayOutcome result;
  result.replay_dir = request.run_dir;
  result.original_sha256 =
      manifest.at("outputs").at("final_checkpoint_sha256").get<std::string>();
  result.replay_sha256 = outcome.final_checkpoint_sha256;
  std::string original_bytes =
      read_file(dir / manifest.at("outputs").at("final_checkpoint").get<std::string>());
  std::string replay_bytes = read_file(fs::path(outcome.final_checkpoint_path));
  result.identical =
      result.original_sha256 == result.replay_sha256 && original_bytes == replay_bytes;
  return result;
}

std::vector<StepStats> read_step_log(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / kLogName);
  if (!in) throw DataError("cannot open run log in " + run_dir);
  std::vector<StepStats> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    StepStats s;
    s.step = j.value("step", 0);
    s.mean_reward = j.value("mean_reward", 0.0);
    s.accuracy_rate = j.value("accuracy_rate", 0.0);
    s.format_rate = j.value("format_rate", 0.0);
    s.mean_think_len = j.value("mean_think_len", 0.0);
    s.mean_kl = j.value("mean_kl", 0.0);
    s.clip_fraction = j.value("clip_fraction", 0.0);
    s.grad_norm = j.value("grad_norm", 0.0);
    s.objective = j.value("objective", 0.0);
    out.push_back(s);
  }
  return out;
}

std::vector<SweepRow> run_lr_sweep(const RunConfig& config, const std::vector<double>& values,
                                   const std::vector<CallInstance>& train,
                                   const std::vector<CallInstance>& eval_corpus) {
  if (values.empty()) throw DataError("sweep: no learning-rate values given");
  std::vector<SweepRow> rows;
  for (double lr : values) {
    RunConfig cfg = config;
    cfg.grpo.learning_rate = lr;
    CounterRng root(cfg.seed);
    PolicyParameters policy = PolicyParameters::random_init(
        Mode::full_call, cfg.corpus.vocab_size, cfg.init_stddev, root.derive("init"));

    std::vector<Task> tasks = tasks_for(cfg.task);
    std::vector<std::vector<Episode>> pools;
    std::vector<BatchScheduler> schedulers;
    for (Task task : tasks) {
      std::vector<Episode> pool;
      for (const CallInstance* call : applicable_instances(train, task))
        pool.push_back(Episode{call, call->turn_count(), task});
      if (pool.empty()) throw DataError("sweep: no training episodes for task");
      schedulers.emplace_back(pool.size(),
                              root.derive("batches").derive("rl").derive(task_name(task)));
      pools.push_back(std::move(pool));
    }

    GrpoConfig grpo = cfg.grpo;
    grpo.steps = cfg.steps_for_stage("rl");
    GrpoTrainer trainer(std::move(policy), cfg.weights_for_stage("rl"), grpo, Stage::rl,
                        /*non_sft=*/true, cfg.generation);
    CounterRng train_stream = root.derive("train").derive("rl");
    for (int step = 0; step < grpo.steps; ++step) {
      std::size_t t = static_cast<std::size_t>(step) % tasks.size();
      std::vector<Episode> batch;
      for (std::size_t idx : schedulers[t].next(static_cast<std::size_t>(grpo.batch_size)))
        batch.push_back(pools[t][idx]);
      trainer.step(batch, train_stream.derive(static_cast<std::uint64_t>(step)), step,
                   cfg.workers);
    }

    SweepRow row;
    row.learning_rate = lr;
    row.report = evaluate_policy(trainer.policy(), cfg.generation, eval_corpus,
                                 cfg.eval_options(Mode::full_call));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = "  lr        Sce.    Fra.    FT.     AVG\n";
  char line[128];
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "  %-9.2g %-7.2f %-7.2f %-7.2f %-7.2f\n",
                  row.learning_rate, row.report.f1_scenario, row.report.f1_fraud,
                  row.report.f1_type, row.report.avg);
    out += line;
  }
  return out;
}

std::vector<ProfileRow> run_profile(const RunConfig& config,
                                    const std::vector<std::string>& checkpoint_paths,
                                    const std::vector<CallInstance>& corpus) {
  if (corpus.empty()) throw DataError("profile: empty corpus");
  std::vector<ProfileRow> rows;
  for (const std::string& path : checkpoint_paths) {
    Checkpoint ckpt = load_checkpoint(path);
    MetricReport report =
        evaluate_policy(ckpt.params, config.generation, corpus,
                        config.eval_options(ckpt.params.mode == Mode::real_time
                                                ? Mode::real_time
                                                : Mode::full_call));
    ProfileRow row;
    row.name = fs::path(path).stem().string();
    row.latency = LatencyProfile{report.latency_p50_ms, report.latency_p95_ms,
                                 report.throughput_per_s};
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string profile_table(const std::vector<ProfileRow>& rows) {
  std::string out = "  checkpoint              p50(ms)   p95(ms)   throughput(/s)\n";
  char line[160];
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "  %-23s %-9.3f %-9.3f %-9.2f\n", row.name.c_str(),
                  row.latency.p50_ms, row.latency.p95_ms, row.latency.throughput_per_s);
    out += line;
  }
  return out;
}

}  // namespace fraudrl
