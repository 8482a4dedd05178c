#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fraudrl {

using Scalar = double;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kScenarioClasses = 7;
inline constexpr int kFraudClasses = 2;
inline constexpr int kFraudTypeClasses = 7;

enum class Speaker { caller, callee };

struct Turn {
  int index = 0;  // 1-based, consecutive
  Speaker speaker = Speaker::caller;
  std::vector<int> tokens;
};

struct CallInstance {
  std::string id;
  std::vector<Turn> turns;
  int scenario_label = 0;
  int fraud_label = 0;
  std::optional<int> fraud_type_label;  // present exactly when fraud_label == 1
  std::uint64_t seed = 0;

  int turn_count() const { return static_cast<int>(turns.size()); }
};

enum class Task { scenario, fraud, fraud_type };
enum class Mode { full_call, real_time };

struct TaskKind {
  Task task = Task::fraud;
  Mode mode = Mode::full_call;
};

constexpr int class_count(Task t) {
  switch (t) {
    case Task::scenario: return kScenarioClasses;
    case Task::fraud: return kFraudClasses;
    case Task::fraud_type: return kFraudTypeClasses;
  }
  return 0;
}

constexpr const char* task_name(Task t) {
  switch (t) {
    case Task::scenario: return "scenario";
    case Task::fraud: return "fraud";
    case Task::fraud_type: return "fraud_type";
  }
  return "?";
}

// Label of `call` for `t`. FraudType is only defined on fraud instances;
// returns -1 (matches nothing) otherwise.
inline int instance_label(const CallInstance& call, Task t) {
  switch (t) {
    case Task::scenario: return call.scenario_label;
    case Task::fraud: return call.fraud_label;
    case Task::fraud_type: return call.fraud_type_label.value_or(-1);
  }
  return -1;
}

enum class Phase { early, late, final };

// Partition of turn i within an n-turn call: early when i < n/2, late when
// n/2 <= i < n, final when i = n. Comparisons use integer doubling (2i vs n)
// so that odd n never hits a floating tie.
Phase ground_truth_phase(int turn_index, int total_turns);

// One sampled policy output. `answer` is a row index of the task's answer
// head; in real-time mode row class_count(task) means abstain.
struct Rollout {
  std::vector<int> think_tokens;
  int think_len = 0;  // always == think_tokens.size()
  int answer = 0;
  std::optional<Phase> phase_claim;
  bool well_formed = true;
  bool forced_stop = false;  // think cap reached; no explicit stop step was drawn
  std::vector<double> step_logprobs;  // under the filtered sampling distributions
  std::string rendered;
};

inline bool is_abstain(const Rollout& r, Task t) { return r.answer == class_count(t); }

// A call prefix: the first `visible_turns` turns. Full call when
// visible_turns == call->turn_count().
struct EpisodeView {
  const CallInstance* call = nullptr;
  int visible_turns = 0;

  bool is_full_call() const { return visible_turns == call->turn_count(); }
};

}  // namespace fraudrl
