#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dfx/core/dfa.hpp"

namespace dfx {

struct LanguageInfo {
  std::string name;
  std::string alphabet;
  // Human-readable definition; a regex when the grammar is regex-defined.
  std::string definition;
};

// tomita1..tomita7, mod2..mod5, parity, d2, d4, aa_star, abab_star.
const std::vector<LanguageInfo>& builtin_languages();

// Minimal DFA of a builtin grammar; throws ConfigError for unknown names.
Dfa builtin_language(std::string_view name);

// Either a builtin grammar id or a regex over `alphabet`.
Dfa language_from_spec(std::string_view grammar_or_regex, std::string_view alphabet);

}  // namespace dfx
