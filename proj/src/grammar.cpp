#include "fraudrl/grammar.hpp"

#include "fraudrl/labels.hpp"

namespace fraudrl {

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::early: return "early";
    case Phase::late: return "late";
    case Phase::final: return "final";
  }
  return "?";
}

std::optional<Phase> phase_from_name(std::string_view name) {
  if (name == "early") return Phase::early;
  if (name == "late") return Phase::late;
  if (name == "final") return Phase::final;
  return std::nullopt;
}

std::string render(const RenderInput& in, Task task) {
  std::string out;
  if (in.phase) {
    out += "<phase> ";
    out += phase_name(*in.phase);
    out += " </phase>";
  }
  out += "<think> ";
  for (int tok : *in.think_tokens) {
    out += "w_";
    out += std::to_string(tok);
    out += ' ';
  }
  out += "</think>";
  out += "<answer> ";
  if (in.answer == class_count(task))
    out += kAbstainLabel;
  else
    out += label_name(task, in.answer);
  if (in.well_formed) out += " </answer>";
  return out;
}

namespace {

bool consume(std::string_view& s, std::string_view prefix) {
  if (s.substr(0, prefix.size()) != prefix) return false;
  s.remove_prefix(prefix.size());
  return true;
}

// Reads the maximal run of characters before the next space.
std::string_view take_word(std::string_view& s) {
  std::size_t n = s.find(' ');
  if (n == std::string_view::npos) n = s.size();
  std::string_view word = s.substr(0, n);
  s.remove_prefix(n);
  return word;
}

// "w_<id>" with canonical decimal digits and id < vocab.
std::optional<int> parse_token(std::string_view word, int vocab) {
  if (!consume(word, "w_") || word.empty() || word.size() > 9) return std::nullopt;
  long value = 0;
  for (char c : word) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  if (word.size() > 1 && word[0] == '0') return std::nullopt;  // no leading zeros
  if (value >= vocab) return std::nullopt;
  return static_cast<int>(value);
}

}  // namespace

std::optional<ParsedOutput> parse_output(std::string_view text, const ParseContext& ctx) {
  ParsedOutput out;
  std::string_view s = text;

  if (consume(s, "<phase> ")) {
    if (ctx.mode != Mode::real_time) return std::nullopt;
    auto phase = phase_from_name(take_word(s));
    if (!phase || !consume(s, " </phase>")) return std::nullopt;
    out.phase_claim = phase;
  }

  if (!consume(s, "<think> ")) return std::nullopt;
  while (!consume(s, "</think>")) {
    auto tok = parse_token(take_word(s), ctx.think_vocab);
    if (!tok || !consume(s, " ")) return std::nullopt;
    out.think_tokens.push_back(*tok);
  }

  if (!consume(s, "<answer> ")) return std::nullopt;
  auto id = label_id(ctx.task, ctx.mode, take_word(s));
  if (!id || !consume(s, " </answer>") || !s.empty()) return std::nullopt;
  out.answer = *id;
  return out;
}

}  // namespace fraudrl
