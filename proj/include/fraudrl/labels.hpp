#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fraudrl/types.hpp"

namespace fraudrl {

inline constexpr std::string_view kAbstainLabel = "ABSTAIN";

// Built-in label tables. The same tables are shipped as data files (one label
// per line, line order defines the id) so external tools can parse outputs
// bit-exactly; load_label_file reads that format.
const std::vector<std::string>& label_names(Task t);

const std::string& label_name(Task t, int id);

// Maps a label string to an answer row. ABSTAIN maps to class_count(t) in
// real-time mode and is invalid in full-call mode. Unknown names: nullopt.
std::optional<int> label_id(Task t, Mode mode, std::string_view name);

std::vector<std::string> load_label_file(const std::string& path);

}  // namespace fraudrl
