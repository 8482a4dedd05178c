#include "fraudrl/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "fraudrl/errors.hpp"
#include "fraudrl/grammar.hpp"
#include "fraudrl/parallel.hpp"

namespace fraudrl {

double weighted_f1(std::span<const int> predictions, std::span<const int> labels,
                   int class_count) {
  if (labels.empty() || predictions.size() != labels.size())
    throw DataError("weighted_f1: need equal-length, non-empty prediction/label lists");
  std::vector<double> tp(static_cast<std::size_t>(class_count), 0.0);
  std::vector<double> fp(tp), fn(tp), support(tp);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    if (y < 0 || y >= class_count) throw DataError("weighted_f1: label out of range");
    support[static_cast<std::size_t>(y)] += 1.0;
    int p = predictions[i];
    if (p == y) {
      tp[static_cast<std::size_t>(y)] += 1.0;
    } else {
      fn[static_cast<std::size_t>(y)] += 1.0;
      if (p >= 0 && p < class_count) fp[static_cast<std::size_t>(p)] += 1.0;
    }
  }
  double total = static_cast<double>(labels.size());
  double weighted = 0.0;
  for (int c = 0; c < class_count; ++c) {
    auto k = static_cast<std::size_t>(c);
    double precision_den = tp[k] + fp[k];
    double recall_den = tp[k] + fn[k];
    double precision = precision_den > 0.0 ? tp[k] / precision_den : 0.0;
    double recall = recall_den > 0.0 ? tp[k] / recall_den : 0.0;
    double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                           : 0.0;
    weighted += (support[k] / total) * f1;
  }
  return weighted * 100.0;
}

double fin_metric(double avg, double sum_quality) {
  if (!(sum_quality >= 0.0 && sum_quality <= 15.0))
    throw DataError("fin_metric: sum_quality must be in [0, 15]");
  return 0.75 * avg + 0.25 * (sum_quality / 15.0);
}

double tem_metric(double avg, double mean_think_tokens) {
  if (!(mean_think_tokens > 1.0))
    throw DataError("tem_metric: mean_think_tokens must be > 1");
  return avg / std::log10(mean_think_tokens);
}

QualityScore proxy_quality_score(const Rollout& rollout, const EpisodeView& episode,
                                 const ParseContext& ctx, const CorpusConfig& layout,
                                 const QualityBand& band) {
  auto parsed = parse_output(rollout.rendered, ctx);
  bool well_formed = parsed.has_value();
  bool decided = well_formed && parsed->answer != class_count(ctx.task);

  QualityScore out;
  std::set<int> cues;
  for (int i = 0; i < episode.visible_turns; ++i)
    for (int tok : episode.call->turns[static_cast<std::size_t>(i)].tokens)
      if (layout.is_cue_token(tok)) cues.insert(tok);
  if (cues.empty()) {
    out.evidence = 5.0;  // vacuously complete coverage
  } else {
    std::set<int> cited(rollout.think_tokens.begin(), rollout.think_tokens.end());
    double hit = 0.0;
    for (int cue : cues) hit += cited.count(cue) ? 1.0 : 0.0;
    out.evidence = 5.0 * hit / static_cast<double>(cues.size());
  }
  double fit = 1.0 - std::abs(rollout.think_len - band.center) / band.half_width;
  out.length_fit = 5.0 * std::clamp(fit, 0.0, 1.0);
  double checks = (well_formed ? 1.0 : 0.0) + (rollout.think_len > 0 ? 1.0 : 0.0) +
                  (decided ? 1.0 : 0.0);
  out.structure = checks * 5.0 / 3.0;
  return out;
}

LatencyProfile latency_profile(std::span<const double> timings_ms) {
  if (timings_ms.empty()) throw DataError("latency_profile: empty timing list");
  std::vector<double> sorted(timings_ms.begin(), timings_ms.end());
  std::sort(sorted.begin(), sorted.end());
  auto nearest_rank = [&](double pct) {
    auto rank = static_cast<std::size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(sorted.size())));
    if (rank < 1) rank = 1;
    return sorted[rank - 1];
  };
  LatencyProfile out;
  out.p50_ms = nearest_rank(50.0);
  out.p95_ms = nearest_rank(95.0);
  double total_ms = 0.0;
  for (double t : timings_ms) total_ms += t;
  out.throughput_per_s =
      total_ms > 0.0 ? static_cast<double>(timings_ms.size()) / (total_ms / 1000.0) : 0.0;
  return out;
}

Predictor greedy_predictor(const PolicyParameters& params, const GenerationParams& gen) {
  GenerationParams g = gen;
  g.greedy = true;
  return [params, g](const EpisodeView& episode, Task task) {
    return sample_rollout(params, episode, task, g, CounterRng(0));
  };
}

namespace {

int predicted_id(const std::optional<ParsedOutput>& parsed, Task task) {
  if (!parsed || parsed->answer == class_count(task)) return class_count(task);  // reserved wrong
  return parsed->answer;
}

double now_ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct TaskEval {
  std::vector<int> predictions;
  std::vector<int> labels;
};

}  // namespace

MetricReport evaluate(const Predictor& predictor, std::span<const CallInstance> corpus,
                      const EvalOptions& options, Mode policy_mode, int think_vocab,
                      std::vector<StreamResult>*) {
  if (corpus.empty()) throw DataError("evaluate: empty corpus");
  if (options.mode == Mode::real_time)
    throw DataError("evaluate: real-time mode needs a policy (use evaluate_policy)");

  struct Cell {
    int prediction = -1;
    double quality_sum = 0.0;
    double think_len = 0.0;
    double elapsed_ms = 0.0;
    bool used = false;
    int label = 0;
  };

  const std::array<Task, 3> tasks{Task::scenario, Task::fraud, Task::fraud_type};
  std::vector<Cell> cells(corpus.size() * tasks.size());
  parallel_for(cells.size(), options.workers, [&](std::size_t k) {
    const CallInstance& call = corpus[k / tasks.size()];
    Task task = tasks[k % tasks.size()];
    if (task == Task::fraud_type && options.type_fraud_only && call.fraud_label != 1) return;
    Cell& cell = cells[k];
    EpisodeView view{&call, call.turn_count()};
    auto t0 = std::chrono::steady_clock::now();
    Rollout rollout = predictor(view, task);
    cell.elapsed_ms = now_ms_since(t0);
    ParseContext ctx{task, policy_mode, think_vocab};
    cell.prediction = predicted_id(parse_output(rollout.rendered, ctx), task);
    cell.quality_sum =
        proxy_quality_score(rollout, view, ctx, options.layout, options.band).sum();
    cell.think_len = rollout.think_len;
    cell.label = instance_label(call, task);
    cell.used = true;
  });

  std::array<TaskEval, 3> per_task;
  double quality = 0.0, think = 0.0, n = 0.0;
  std::vector<double> timings;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const Cell& cell = cells[k];
    if (!cell.used) continue;
    auto& te = per_task[k % tasks.size()];
    te.predictions.push_back(cell.prediction);
    te.labels.push_back(cell.label);
    quality += cell.quality_sum;
    think += cell.think_len;
    timings.push_back(cell.elapsed_ms);
    n += 1.0;
  }

  MetricReport report;
  report.f1_scenario =
      weighted_f1(per_task[0].predictions, per_task[0].labels, kScenarioClasses);
  report.f1_fraud = weighted_f1(per_task[1].predictions, per_task[1].labels, kFraudClasses);
  report.f1_type = per_task[2].labels.empty()
                       ? 0.0
                       : weighted_f1(per_task[2].predictions, per_task[2].labels,
                                     kFraudTypeClasses);
  report.avg = (report.f1_scenario + report.f1_fraud + report.f1_type) / 3.0;
  report.sum_quality = n > 0.0 ? quality / n : 0.0;
  report.fin = fin_metric(report.avg, report.sum_quality);
  report.mean_think_tokens = n > 0.0 ? think / n : 0.0;
  if (report.mean_think_tokens > 1.0)
    report.tem = tem_metric(report.avg, report.mean_think_tokens);
  LatencyProfile lat = latency_profile(timings);
  report.latency_p50_ms = lat.p50_ms;
  report.latency_p95_ms = lat.p95_ms;
  report.throughput_per_s = lat.throughput_per_s;
  return report;
}

MetricReport evaluate_policy(const PolicyParameters& params, const GenerationParams& gen,
                             std::span<const CallInstance> corpus, const EvalOptions& options,
                             std::vector<StreamResult>* stream_results_out) {
  if (options.mode == Mode::full_call)
    return evaluate(greedy_predictor(params, gen), corpus, options, params.mode,
                    params.vocab, nullptr);

  if (corpus.empty()) throw DataError("evaluate: empty corpus");
  GenerationParams greedy = gen;
  greedy.greedy = true;

  struct Cell {
    StreamResult stream;
    double quality_sum = 0.0;
    double think_len = 0.0;
    double elapsed_ms = 0.0;
    bool used = false;
    int label = 0;
    Task task = Task::fraud;
  };
  const std::array<Task, 3> tasks{Task::scenario, Task::fraud, Task::fraud_type};
  std::vector<Cell> cells(corpus.size() * tasks.size());
  parallel_for(cells.size(), options.workers, [&](std::size_t k) {
    const CallInstance& call = corpus[k / tasks.size()];
    Task task = tasks[k % tasks.size()];
    if (task == Task::fraud_type && options.type_fraud_only && call.fraud_label != 1) return;
    Cell& cell = cells[k];
    auto t0 = std::chrono::steady_clock::now();
    cell.stream = stream_evaluate(params, call, task, greedy);
    cell.elapsed_ms = now_ms_since(t0);
    EpisodeView consumed{&call, cell.stream.turns_consumed};
    ParseContext ctx{task, params.mode, params.vocab};
    cell.quality_sum = proxy_quality_score(cell.stream.last_rollout, consumed, ctx,
                                           options.layout, options.band)
                           .sum();
    cell.think_len = cell.stream.last_rollout.think_len;
    cell.label = instance_label(call, task);
    cell.task = task;
    cell.used = true;
  });

  std::array<TaskEval, 3> per_task;
  std::array<double, 3> turns_sum{}, turns_n{};
  double quality = 0.0, think = 0.0, n = 0.0, turns = 0.0, duration = 0.0;
  double undecided_final = 0.0;
  std::vector<double> timings;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const Cell& cell = cells[k];
    if (!cell.used) continue;
    std::size_t t = k % tasks.size();
    int pred = cell.stream.decided_at_turn ? cell.stream.decision
                                           : class_count(cell.task);  // reserved wrong
    per_task[t].predictions.push_back(pred);
    per_task[t].labels.push_back(cell.label);
    quality += cell.quality_sum;
    think += cell.think_len;
    turns += cell.stream.turns_consumed;
    turns_sum[t] += cell.stream.turns_consumed;
    turns_n[t] += 1.0;
    duration += cell.stream.synthetic_duration_s;
    if (!cell.stream.decided_at_turn) undecided_final += 1.0;
    timings.push_back(cell.elapsed_ms);
    n += 1.0;
    if (stream_results_out) stream_results_out->push_back(cell.stream);
  }

  MetricReport report;
  report.f1_scenario =
      weighted_f1(per_task[0].predictions, per_task[0].labels, kScenarioClasses);
  report.f1_fraud = weighted_f1(per_task[1].predictions, per_task[1].labels, kFraudClasses);
  report.f1_type = per_task[2].labels.empty()
                       ? 0.0
                       : weighted_f1(per_task[2].predictions, per_task[2].labels,
                                     kFraudTypeClasses);
  report.avg = (report.f1_scenario + report.f1_fraud + report.f1_type) / 3.0;
  report.sum_quality = n > 0.0 ? quality / n : 0.0;
  report.fin = fin_metric(report.avg, report.sum_quality);
  report.mean_think_tokens = n > 0.0 ? think / n : 0.0;
  if (report.mean_think_tokens > 1.0)
    report.tem = tem_metric(report.avg, report.mean_think_tokens);
  LatencyProfile lat = latency_profile(timings);
  report.latency_p50_ms = lat.p50_ms;
  report.latency_p95_ms = lat.p95_ms;
  report.throughput_per_s = lat.throughput_per_s;
  report.turns_consumed_mean = n > 0.0 ? turns / n : 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (turns_n[t] > 0.0)
      report.turns_mean_by_task[task_name(tasks[t])] = turns_sum[t] / turns_n[t];
  report.synthetic_duration_mean_s = n > 0.0 ? duration / n : 0.0;
  report.final_abstention_rate = n > 0.0 ? undecided_final / n : 0.0;
  return report;
}

nlohmann::ordered_json report_json(const MetricReport& r) {
  nlohmann::ordered_json j{
      {"f1_scenario", r.f1_scenario},
      {"f1_fraud", r.f1_fraud},
      {"f1_type", r.f1_type},
      {"avg", r.avg},
      {"sum_quality", r.sum_quality},
      {"fin", r.fin},
      {"tem", r.tem ? nlohmann::ordered_json(*r.tem) : nlohmann::ordered_json(nullptr)},
      {"mean_think_tokens", r.mean_think_tokens},
      {"latency_p50_ms", r.latency_p50_ms},
      {"latency_p95_ms", r.latency_p95_ms},
      {"throughput_per_s", r.throughput_per_s},
  };
  if (r.turns_consumed_mean) {
    j["turns_consumed_mean"] = *r.turns_consumed_mean;
    j["turns_mean_by_task"] = r.turns_mean_by_task;
    j["synthetic_duration_mean_s"] = *r.synthetic_duration_mean_s;
    j["final_abstention_rate"] = *r.final_abstention_rate;
  }
  return j;
}

std::string report_table(const MetricReport& r) {
  char line[256];
  std::string out;
  out += "  Sce.    Fra.    FT.     AVG     SUM    Fin.    TEM     tokens  p50ms   p95ms   thr/s\n";
  std::snprintf(line, sizeof(line),
                "  %-7.2f %-7.2f %-7.2f %-7.2f %-6.2f %-7.2f %-7.2f %-7.2f %-7.3f %-7.3f %-7.2f\n",
                r.f1_scenario, r.f1_fraud, r.f1_type, r.avg, r.sum_quality, r.fin,
                r.tem.value_or(0.0), r.mean_think_tokens, r.latency_p50_ms,
                r.latency_p95_ms, r.throughput_per_s);
  out += line;
  if (r.turns_consumed_mean) {
    std::snprintf(line, sizeof(line),
                  "  turns %.3f  duration %.2fs  final-undecided %.4f\n",
                  *r.turns_consumed_mean, *r.synthetic_duration_mean_s,
                  *r.final_abstention_rate);
    out += line;
  }
  return out;
}

}  // namespace fraudrl
