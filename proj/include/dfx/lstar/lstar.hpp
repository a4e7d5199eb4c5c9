#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfx/core/dfa.hpp"

namespace dfx {

using MembershipFn = std::function<bool(const Word&)>;
// nullopt accepts the hypothesis; otherwise a word on which it is wrong.
using EquivalenceFn = std::function<std::optional<Word>(const Dfa&)>;

// Angluin observation table over prefixes S and suffixes E (both start as
// {ε}). Rows are kept for S ∪ S·Σ.
class ObservationTable {
 public:
  ObservationTable(Alphabet alphabet, MembershipFn membership);

  const Alphabet& alphabet() const { return alphabet_; }
  const std::vector<Word>& prefixes() const { return prefixes_; }
  const std::vector<Word>& suffixes() const { return suffixes_; }
  // Membership answers of u·e for every e in E, in E order.
  const std::vector<bool>& row(const Word& u) const;

  // No-ops for words already present.
  void add_prefix(const Word& u);
  void add_suffix(const Word& e);

  // An s·a whose row differs from every row of S.
  std::optional<Word> unclosed_extension() const;
  // A suffix a·e separating two prefixes with equal rows.
  std::optional<Word> inconsistency() const;
  bool is_closed() const { return !unclosed_extension().has_value(); }
  bool is_consistent() const { return !inconsistency().has_value(); }
  std::size_t distinct_prefix_rows() const;

  // One state per distinct S row, numbered in S order. Requires a closed
  // table unless `tolerate_open`, in which case unmatched extensions go to
  // the S row with the fewest differing entries.
  Dfa hypothesis(bool tolerate_open = false) const;
  std::map<std::string, std::size_t> stats() const;

 private:
  void fill(const Word& u);

  Alphabet alphabet_;
  MembershipFn membership_;
  std::vector<Word> prefixes_;
  std::set<Word> prefix_set_;
  std::vector<Word> suffixes_;
  std::map<Word, std::vector<bool>> rows_;
  std::size_t membership_calls_ = 0;
};

struct LstarOptions {
  std::size_t max_hypothesis_states = 64;
  std::optional<std::chrono::steady_clock::time_point> deadline;
  // Called with the closed, consistent table before each conjecture.
  std::function<void(const ObservationTable&)> on_conjecture;
};

struct LstarResult {
  Dfa hypothesis;
  bool incomplete = false;
  std::string incomplete_reason;
  std::size_t equivalence_queries = 0;
  std::vector<Word> counterexamples;
};

// Classic L*: close and make consistent, conjecture, and on a counterexample
// add it with all its prefixes to S. Throws Error when the equivalence oracle
// returns a word the hypothesis already classifies like the membership oracle.
LstarResult lstar(const Alphabet& alphabet, const MembershipFn& membership, const EquivalenceFn& equivalence,
                  const LstarOptions& options = {});

}  // namespace dfx
