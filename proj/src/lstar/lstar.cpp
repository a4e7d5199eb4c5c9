#include "dfx/lstar/lstar.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "dfx/core/error.hpp"

namespace dfx {

ObservationTable::ObservationTable(Alphabet alphabet, MembershipFn membership)
    : alphabet_(std::move(alphabet)), membership_(std::move(membership)) {
  suffixes_.push_back(Word{});
  add_prefix(Word{});
}

const std::vector<bool>& ObservationTable::row(const Word& u) const {
  auto it = rows_.find(u);
  if (it == rows_.end()) throw ConfigError("no row for '" + u + "' in the observation table");
  return it->second;
}

void ObservationTable::fill(const Word& u) {
  auto& r = rows_[u];
  while (r.size() < suffixes_.size()) {
    ++membership_calls_;
    r.push_back(membership_(u + suffixes_[r.size()]));
  }
}

void ObservationTable::add_prefix(const Word& u) {
  if (!prefix_set_.insert(u).second) return;
  prefixes_.push_back(u);
  fill(u);
  for (char a : alphabet_.symbols()) fill(u + a);
}

void ObservationTable::add_suffix(const Word& e) {
  if (std::find(suffixes_.begin(), suffixes_.end(), e) != suffixes_.end()) return;
  suffixes_.push_back(e);
  for (auto& [u, r] : rows_) fill(u);
}

std::optional<Word> ObservationTable::unclosed_extension() const {
  std::set<std::vector<bool>> s_rows;
  for (const auto& s : prefixes_) s_rows.insert(row(s));
  for (const auto& s : prefixes_)
    for (char a : alphabet_.symbols())
      if (!s_rows.count(row(s + a))) return s + a;
  return std::nullopt;
}

std::optional<Word> ObservationTable::inconsistency() const {
  // Comparing each prefix with the first one sharing its row is enough: if
  // two members of a class disagree, one of them disagrees with the first.
  std::map<std::vector<bool>, const Word*> first;
  for (const auto& s2 : prefixes_) {
    auto [it, fresh] = first.emplace(row(s2), &s2);
    if (fresh) continue;
    const Word& s1 = *it->second;
    for (char a : alphabet_.symbols()) {
      const auto& r1 = row(s1 + a);
      const auto& r2 = row(s2 + a);
      for (std::size_t k = 0; k < suffixes_.size(); ++k)
        if (r1[k] != r2[k]) return a + suffixes_[k];
    }
  }
  return std::nullopt;
}

std::size_t ObservationTable::distinct_prefix_rows() const {
  std::set<std::vector<bool>> seen;
  for (const auto& s : prefixes_) seen.insert(row(s));
  return seen.size();
}

Dfa ObservationTable::hypothesis(bool tolerate_open) const {
  std::vector<std::vector<bool>> states;
  for (const auto& s : prefixes_)
    if (std::find(states.begin(), states.end(), row(s)) == states.end()) states.push_back(row(s));
  auto state_of = [&](const std::vector<bool>& r) -> StateId {
    auto it = std::find(states.begin(), states.end(), r);
    if (it != states.end()) return static_cast<StateId>(it - states.begin());
    if (!tolerate_open) throw Error("observation table is not closed");
    std::size_t best = 0, best_distance = std::numeric_limits<std::size_t>::max();
    for (std::size_t q = 0; q < states.size(); ++q) {
      std::size_t distance = 0;
      for (std::size_t k = 0; k < r.size(); ++k) distance += states[q][k] != r[k];
      if (distance < best_distance) best = q, best_distance = distance;
    }
    return static_cast<StateId>(best);
  };

  const std::size_t k = alphabet_.size();
  std::vector<bool> accepting(states.size());
  std::vector<StateId> delta(states.size() * k, 0);
  std::vector<bool> done(states.size(), false);
  for (const auto& s : prefixes_) {
    const StateId q = state_of(row(s));
    if (done[q]) continue;
    done[q] = true;
    accepting[q] = row(s)[0];
    for (std::size_t a = 0; a < k; ++a) delta[q * k + a] = state_of(row(s + alphabet_.symbol(a)));
  }
  return Dfa(alphabet_, states.size(), state_of(row(Word{})), std::move(accepting), std::move(delta));
}

std::map<std::string, std::size_t> ObservationTable::stats() const {
  return {{"prefixes", prefixes_.size()}, {"suffixes", suffixes_.size()}, {"membership_calls", membership_calls_}};
}

LstarResult lstar(const Alphabet& alphabet, const MembershipFn& membership, const EquivalenceFn& equivalence,
                  const LstarOptions& options) {
  ObservationTable table(alphabet, membership);
  LstarResult result{table.hypothesis(true), false, {}, 0, {}};
  bool have_conjecture = false;

  auto stop = [&](std::string reason) {
    if (!have_conjecture) result.hypothesis = minimize(table.hypothesis(true));
    result.incomplete = true;
    result.incomplete_reason = std::move(reason);
    return result;
  };
  auto out_of_time = [&] { return options.deadline && std::chrono::steady_clock::now() > *options.deadline; };

  while (true) {
    while (true) {
      if (table.distinct_prefix_rows() > options.max_hypothesis_states)
        return stop("hypothesis exceeded " + std::to_string(options.max_hypothesis_states) + " states");
      if (out_of_time()) return stop("wall-clock budget exhausted");
      if (auto u = table.unclosed_extension()) {
        table.add_prefix(*u);
      } else if (auto e = table.inconsistency()) {
        table.add_suffix(*e);
      } else {
        break;
      }
    }
    if (options.on_conjecture) options.on_conjecture(table);
    const Dfa hypothesis = minimize(table.hypothesis());
    result.hypothesis = hypothesis;
    have_conjecture = true;
    ++result.equivalence_queries;
    const auto counterexample = equivalence(hypothesis);
    if (!counterexample) return result;
    if (hypothesis.accepts(*counterexample) == membership(*counterexample))
      throw Error("equivalence oracle returned '" + *counterexample + "', which the hypothesis already gets right");
    result.counterexamples.push_back(*counterexample);
    for (std::size_t len = 0; len <= counterexample->size(); ++len) table.add_prefix(counterexample->substr(0, len));
  }
}

}  // namespace dfx
