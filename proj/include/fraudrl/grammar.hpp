#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fraudrl/types.hpp"

namespace fraudrl {

// Rendered-output grammar connecting policy outputs to the reward parser.
//
// Well-formed, full call:
//   <think> w_3 w_17 </think><answer> FRAUD </answer>
// Well-formed, real time (phase block leads):
//   <phase> early </phase><think> </think><answer> ABSTAIN </answer>
// Malformed outputs omit the closing </answer> tag (and nothing else).

std::string_view phase_name(Phase p);
std::optional<Phase> phase_from_name(std::string_view name);

struct RenderInput {
  const std::vector<int>* think_tokens = nullptr;
  int answer = 0;
  std::optional<Phase> phase;
  bool well_formed = true;
};

std::string render(const RenderInput& in, Task task);

struct ParsedOutput {
  std::vector<int> think_tokens;
  int answer = 0;  // class_count(task) means abstain (real-time mode only)
  std::optional<Phase> phase_claim;
};

struct ParseContext {
  Task task = Task::fraud;
  Mode mode = Mode::full_call;
  int think_vocab = 0;  // token ids must satisfy 0 <= id < think_vocab
};

// Exact-match parser; any deviation from the grammar (including a missing
// closing tag, an out-of-range token id or an unknown label) yields nullopt.
// The leading phase block is optional and only legal in real-time mode.
std::optional<ParsedOutput> parse_output(std::string_view text, const ParseContext& ctx);

}  // namespace fraudrl
