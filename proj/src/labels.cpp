#include "fraudrl/labels.hpp"

#include <fstream>

#include "fraudrl/errors.hpp"

namespace fraudrl {

namespace {

std::vector<std::string> numbered(const char* prefix, int n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(std::string(prefix) + std::to_string(i));
  return out;
}

}  // namespace

const std::vector<std::string>& label_names(Task t) {
  static const std::vector<std::string> scenario = numbered("SCENARIO_", kScenarioClasses);
  static const std::vector<std::string> fraud = {"NOT_FRAUD", "FRAUD"};
  static const std::vector<std::string> fraud_type = numbered("FRAUD_TYPE_", kFraudTypeClasses);
  switch (t) {
    case Task::scenario: return scenario;
    case Task::fraud: return fraud;
    case Task::fraud_type: return fraud_type;
  }
  return fraud;
}

const std::string& label_name(Task t, int id) {
  return label_names(t).at(static_cast<std::size_t>(id));
}

std::optional<int> label_id(Task t, Mode mode, std::string_view name) {
  if (mode == Mode::real_time && name == kAbstainLabel) return class_count(t);
  const auto& names = label_names(t);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<std::string> load_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace fraudrl
