#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fraudrl/datagen.hpp"
#include "fraudrl/policy.hpp"
#include "fraudrl/streaming.hpp"

namespace fraudrl {

// Support-weighted mean of per-class F1, scaled to [0, 100]. Predictions
// outside [0, class_count) (the reserved wrong id for abstain/malformed
// outputs) can never match a label.
double weighted_f1(std::span<const int> predictions, std::span<const int> labels,
                   int class_count);

// 0.75 * avg + 0.25 * (sum_quality / 15); sum_quality must lie in [0, 15].
double fin_metric(double avg, double sum_quality);

// avg / log10(mean_think_tokens); requires mean_think_tokens > 1.
double tem_metric(double avg, double mean_think_tokens);

struct QualityBand {
  double center = 24.0;
  double half_width = 24.0;
};

// Deterministic proxy for the three 0-5 reasoning-quality scores:
//   evidence   fraction of the instance's distinct visible cue tokens cited
//              in the think segment, x5
//   length_fit 1 - |think_len - center| / half_width, clamped to [0,1], x5
//   structure  (well-formed + non-empty think + decided) x 5/3
struct QualityScore {
  double evidence = 0.0;
  double length_fit = 0.0;
  double structure = 0.0;

  double sum() const { return evidence + length_fit + structure; }
};

QualityScore proxy_quality_score(const Rollout& rollout, const EpisodeView& episode,
                                 const ParseContext& ctx, const CorpusConfig& layout,
                                 const QualityBand& band);

struct LatencyProfile {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double throughput_per_s = 0.0;  // count / total time
};

// Nearest-rank percentiles (no interpolation); rejects an empty list.
LatencyProfile latency_profile(std::span<const double> timings_ms);

struct MetricReport {
  double f1_scenario = 0.0;
  double f1_fraud = 0.0;
  double f1_type = 0.0;
  double avg = 0.0;
  double sum_quality = 0.0;
  double fin = 0.0;
  std::optional<double> tem;  // absent when mean_think_tokens <= 1
  double mean_think_tokens = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  double throughput_per_s = 0.0;
  // Real-time mode only:
  std::optional<double> turns_consumed_mean;
  std::map<std::string, double> turns_mean_by_task;
  std::optional<double> synthetic_duration_mean_s;
  std::optional<double> final_abstention_rate;
};

struct EvalOptions {
  Mode mode = Mode::full_call;
  bool type_fraud_only = true;  // FraudType scored on fraud instances only
  QualityBand band;
  CorpusConfig layout;  // cue-block geometry for the evidence score
  int workers = 1;
};

// Decodes one rollout for a call prefix (full call when visible == n).
using Predictor = std::function<Rollout(const EpisodeView&, Task)>;

Predictor greedy_predictor(const PolicyParameters& params, const GenerationParams& gen);

// Greedy evaluation over all three tasks; real-time mode streams each call
// and adds turns statistics. Per-instance wall times feed the latency block.
MetricReport evaluate(const Predictor& predictor, std::span<const CallInstance> corpus,
                      const EvalOptions& options, Mode policy_mode, int think_vocab,
                      std::vector<StreamResult>* stream_results_out = nullptr);

MetricReport evaluate_policy(const PolicyParameters& params, const GenerationParams& gen,
                             std::span<const CallInstance> corpus, const EvalOptions& options,
                             std::vector<StreamResult>* stream_results_out = nullptr);

nlohmann::ordered_json report_json(const MetricReport& report);
std::string report_table(const MetricReport& report);

}  // namespace fraudrl
