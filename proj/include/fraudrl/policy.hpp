#pragma once

#include <array>
#include <optional>
#include <string>

#include "fraudrl/features.hpp"
#include "fraudrl/rng.hpp"
#include "fraudrl/types.hpp"

namespace fraudrl {

struct GenerationParams {
  double temperature = 0.9;
  double top_p = 0.9;
  int top_k = 50;
  int max_think_tokens = 64;
  bool greedy = false;
};

// Parameter blocks. All heads are linear maps of phi; the think head's last
// row is the stop action, the format "head" is a single logit against zero,
// and in real-time mode each answer head gains a trailing abstain row and the
// phase head becomes active.
enum BlockId : int {
  kBlockThink = 0,
  kBlockAnswerScenario,
  kBlockAnswerFraud,
  kBlockAnswerFraudType,
  kBlockPhase,
  kBlockFormat,
  kBlockCount,
};

const char* block_name(int id);

struct PolicyParameters {
  Mode mode = Mode::full_call;
  int vocab = 0;
  std::array<Matrix, kBlockCount> block;

  static PolicyParameters zeros(Mode mode, int vocab);
  static PolicyParameters random_init(Mode mode, int vocab, double stddev, CounterRng rng);

  // Adds a zero abstain row to each answer head and a zero phase head.
  PolicyParameters to_real_time() const;

  int feature_dim() const { return fraudrl::feature_dim(vocab); }
  int stop_row() const { return vocab; }
  int answer_rows(Task t) const {
    return class_count(t) + (mode == Mode::real_time ? 1 : 0);
  }
  Matrix& answer_block(Task t) { return block[kBlockAnswerScenario + static_cast<int>(t)]; }
  const Matrix& answer_block(Task t) const {
    return block[kBlockAnswerScenario + static_cast<int>(t)];
  }
  bool all_finite() const;
};

// Gradient / optimizer-moment storage with the same block shapes.
struct ParameterBlocks {
  std::array<Matrix, kBlockCount> block;

  static ParameterBlocks zeros_like(const PolicyParameters& p);
  void set_zero();
  double squared_norm() const;
  bool all_finite() const;
  ParameterBlocks& add_scaled(const ParameterBlocks& other, double scale);
};
using PolicyGradient = ParameterBlocks;

enum class Head { think, answer, phase, format };

// Unfiltered step distribution of a head at phi (softmax of logits; the
// format head is the two-point distribution [1-sigmoid, sigmoid]).
Vector step_distribution(const PolicyParameters& params, Task task, Head head,
                         const Vector& phi);

// Temperature / top-k / top-p filter applied to one step's logits. Returns
// probabilities over the full support with zeros outside the nucleus.
Vector filter_distribution(const Vector& logits, const GenerationParams& gen);

// Generation order: format once, think/stop until stop or the think cap
// (a forced stop contributes no step), phase (real-time), answer. Each
// decision draws from its own derived sub-stream of `rng`, so inserting or
// removing a head leaves the other draws unchanged. step_logprobs record the
// sampled action's log-probability under the filtered distribution; greedy
// mode records it under the unfiltered one.
Rollout sample_rollout(const PolicyParameters& params, const EpisodeView& episode,
                       Task task, const GenerationParams& gen, CounterRng rng);

// Log-probability of `rollout` under `params`, summed over UNFILTERED step
// distributions. Filtering is a sampling device only; policy ratios are
// between policies.
double sequence_logprob(const PolicyParameters& params, const EpisodeView& episode,
                        Task task, const Rollout& rollout);

std::vector<double> per_step_logprobs(const PolicyParameters& params,
                                      const EpisodeView& episode, Task task,
                                      const Rollout& rollout);

// Accumulates sum_t weight[t] * d/dtheta log p_theta(step t) into `out`.
// weight.size() must equal the rollout's step count (an all-equal vector
// recovers scale * d/dtheta sequence_logprob).
void accumulate_logprob_gradient(const PolicyParameters& params,
                                 const EpisodeView& episode, Task task,
                                 const Rollout& rollout,
                                 const std::vector<double>& step_weights,
                                 PolicyGradient& out);

PolicyGradient logprob_gradient(const PolicyParameters& params,
                                const EpisodeView& episode, Task task,
                                const Rollout& rollout);

// Number of step factors in the rollout's likelihood (format + think tokens
// + explicit stop + phase (real-time) + answer).
int rollout_step_count(const PolicyParameters& params, const Rollout& rollout);

// Checkpoint file: single JSON document, shape metadata plus row-major
// base64 doubles per block; byte-stable for replay comparison.
struct Checkpoint {
  PolicyParameters params;
  bool sft_warmstarted = false;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fraudrl
