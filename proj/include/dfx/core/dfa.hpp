#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dfx/core/alphabet.hpp"
#include "dfx/core/regex.hpp"

namespace dfx {

using StateId = std::uint32_t;

// Complete deterministic finite automaton. The transition table is total:
// dead states are kept explicit.
class Dfa {
 public:
  // Validates totality and ranges; throws ConfigError on violation.
  // `delta` is row-major: delta[state * |alphabet| + symbol_index].
  Dfa(Alphabet alphabet, std::size_t n_states, StateId initial, std::vector<bool> accepting,
      std::vector<StateId> delta);

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  std::size_t n_states() const noexcept { return accepting_.size(); }
  StateId initial() const noexcept { return initial_; }
  bool is_accepting(StateId s) const { return accepting_.at(s); }
  const std::vector<bool>& accepting() const noexcept { return accepting_; }
  const std::vector<StateId>& table() const noexcept { return delta_; }

  StateId next(StateId s, std::size_t symbol_index) const { return delta_[s * alphabet_.size() + symbol_index]; }
  // Δ′: the state reached from `from` after reading `word`.
  StateId run(std::string_view word, StateId from) const;
  StateId run(std::string_view word) const { return run(word, initial_); }
  bool accepts(std::string_view word) const { return accepting_[run(word)]; }

  friend bool operator==(const Dfa&, const Dfa&) = default;

 private:
  Alphabet alphabet_;
  StateId initial_;
  std::vector<bool> accepting_;
  std::vector<StateId> delta_;
};

// Hopcroft minimization after pruning unreachable states. States of the
// result are numbered in BFS order from the initial state (symbols in
// alphabet order), so equal languages give identical Dfa values.
Dfa minimize(const Dfa& dfa);

// Shortest word (ties broken in alphabet order) on which the two automata
// disagree, or nullopt when the languages coincide.
std::optional<Word> equivalent(const Dfa& a, const Dfa& b);

Dfa complement(const Dfa& dfa);

// Thompson NFA, subset construction, then minimize().
Dfa regex_to_dfa(const Regex& regex, const Alphabet& alphabet);

// Graphviz rendering; deterministic for identical inputs.
std::string to_dot(const Dfa& dfa, std::string_view name = "dfa");

// Versioned JSON {version, alphabet, n_states, initial, accepting, delta}.
nlohmann::json dfa_to_json(const Dfa& dfa);
Dfa dfa_from_json(const nlohmann::json& j);

}  // namespace dfx
