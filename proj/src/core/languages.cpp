#include "dfx/core/languages.hpp"

#include <algorithm>
#include <functional>

#include "dfx/core/error.hpp"

namespace dfx {

namespace {

// D_0 = ε, D_n = (0 D_{n-1} 1)*
std::string depth_bounded_dyck(int depth) {
  std::string r;
  for (int i = 0; i < depth; ++i) r = "(0" + r + "1)*";
  return r;
}

// Tomita 3 is the complement of this pattern.
constexpr std::string_view kTomita3Complement = "((0|1)*0)*1(11)*(0(0|1)*1)*0(00)*(1(0|1)*)*";

Dfa from_transition(const Alphabet& alphabet, std::size_t n, const std::function<StateId(StateId, std::size_t)>& step,
                    const std::function<bool(StateId)>& accept) {
  std::vector<bool> accepting(n);
  std::vector<StateId> delta;
  for (StateId s = 0; s < n; ++s) {
    accepting[s] = accept(s);
    for (std::size_t a = 0; a < alphabet.size(); ++a) delta.push_back(step(s, a));
  }
  return minimize(Dfa(alphabet, n, 0, std::move(accepting), std::move(delta)));
}

Dfa mod_n(std::size_t n) {
  return from_transition(
      Alphabet("01"), n, [n](StateId s, std::size_t bit) { return static_cast<StateId>((2 * s + bit) % n); },
      [](StateId s) { return s == 0; });
}

Dfa from_regex(std::string_view pattern, std::string_view symbols) {
  const Alphabet alphabet(symbols);
  return regex_to_dfa(parse_regex(pattern, alphabet), alphabet);
}

}  // namespace

const std::vector<LanguageInfo>& builtin_languages() {
  static const std::vector<LanguageInfo> kLanguages = {
      {"tomita1", "01", "1*"},
      {"tomita2", "01", "(10)*"},
      {"tomita3", "01", "complement of " + std::string(kTomita3Complement)},
      {"tomita4", "01", "no \"000\" substring"},
      {"tomita5", "01", "even number of 0s and even number of 1s"},
      {"tomita6", "01", "(#0 - #1) divisible by 3"},
      {"tomita7", "01", "0*1*0*1*"},
      {"mod2", "01", "binary value divisible by 2 (empty word = 0)"},
      {"mod3", "01", "binary value divisible by 3 (empty word = 0)"},
      {"mod4", "01", "binary value divisible by 4 (empty word = 0)"},
      {"mod5", "01", "binary value divisible by 5 (empty word = 0)"},
      {"parity", "01", "even number of 1s"},
      {"d2", "01", depth_bounded_dyck(2)},
      {"d4", "01", depth_bounded_dyck(4)},
      {"aa_star", "ab", "(aa)*"},
      {"abab_star", "ab", "(abab)*"},
  };
  return kLanguages;
}

Dfa builtin_language(std::string_view name) {
  const Alphabet binary("01");
  if (name == "tomita1") return from_regex("1*", "01");
  if (name == "tomita2") return from_regex("(10)*", "01");
  if (name == "tomita3") return complement(from_regex(kTomita3Complement, "01"));
  if (name == "tomita4") return complement(from_regex("(0|1)*000(0|1)*", "01"));
  if (name == "tomita5") {
    // state = 2 * (#0 mod 2) + (#1 mod 2)
    return from_transition(
        binary, 4, [](StateId s, std::size_t bit) { return bit == 0 ? s ^ 2u : s ^ 1u; },
        [](StateId s) { return s == 0; });
  }
  if (name == "tomita6") {
    return from_transition(
        binary, 3, [](StateId s, std::size_t bit) { return bit == 0 ? (s + 1) % 3 : (s + 2) % 3; },
        [](StateId s) { return s == 0; });
  }
  if (name == "tomita7") return from_regex("0*1*0*1*", "01");
  if (name == "mod2") return mod_n(2);
  if (name == "mod3") return mod_n(3);
  if (name == "mod4") return mod_n(4);
  if (name == "mod5") return mod_n(5);
  if (name == "parity") {
    return from_transition(
        binary, 2, [](StateId s, std::size_t bit) { return s ^ static_cast<StateId>(bit); },
        [](StateId s) { return s == 0; });
  }
  if (name == "d2") return from_regex(depth_bounded_dyck(2), "01");
  if (name == "d4") return from_regex(depth_bounded_dyck(4), "01");
  if (name == "aa_star") return from_regex("(aa)*", "ab");
  if (name == "abab_star") return from_regex("(abab)*", "ab");
  throw ConfigError("unknown grammar '" + std::string(name) + "'");
}

Dfa language_from_spec(std::string_view grammar_or_regex, std::string_view alphabet) {
  const auto& langs = builtin_languages();
  const bool builtin =
      std::any_of(langs.begin(), langs.end(), [&](const LanguageInfo& l) { return l.name == grammar_or_regex; });
  if (builtin) {
    Dfa dfa = builtin_language(grammar_or_regex);
    if (!alphabet.empty() && dfa.alphabet().symbols() != alphabet)
      throw ConfigError("grammar '" + std::string(grammar_or_regex) + "' is defined over {" + dfa.alphabet().symbols() +
                        "}, not {" + std::string(alphabet) + "}");
    return dfa;
  }
  if (alphabet.empty()) throw ConfigError("a regex language needs an explicit alphabet");
  return from_regex(grammar_or_regex, alphabet);
}

}  // namespace dfx
