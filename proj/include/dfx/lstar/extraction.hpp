#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfx/dcsa/dcsa.hpp"
#include "dfx/lstar/lstar.hpp"

namespace dfx {

// Binary decision tree over state vectors. Internal nodes test either one
// coordinate against a threshold or compare two affine scores
// b₁ + w₁·x > b₀ + w₀·x; leaves carry dense ids.
class Partition {
 public:
  // One leaf covering the whole space.
  static Partition trivial();
  // Root split by w·x + b > 0 (right, leaf 1) versus <= 0 (left, leaf 0).
  static Partition oblique(std::vector<double> weights, double bias);
  // The DCSA classifier's decision boundary logit₁ − logit₀ = 0, so leaf 1
  // holds exactly the accepted states.
  static Partition classifier_split(const DcsaModel& model);

  int locate(std::span<const double> x) const;
  std::size_t leaf_count() const { return leaves_; }

  // Splits `leaf` on the coordinate where a and b differ most, at the
  // midpoint. Both vectors must lie in `leaf`; throws ConfigError if they are
  // identical or do not. The lower side keeps the old id, the upper side gets
  // id leaf_count().
  void refine(int leaf, std::span<const double> a, std::span<const double> b);

  nlohmann::json to_json() const;

 private:
  struct Node {
    int leaf = -1;  // >= 0 for leaves
    int dim = -1;   // >= 0 for axis splits, -1 for oblique ones
    double threshold = 0.0;
    std::vector<double> w_high, w_low;
    double b_high = 0.0, b_low = 0.0;
    int low = -1;
    int high = -1;
  };
  static Node leaf_node(int id);
  int node_of(std::span<const double> x) const;

  std::vector<Node> nodes_;
  std::size_t leaves_ = 0;
};

// Quotient of the DCSA explored breadth-first from s₀; abstract state i is the
// partition leaf leaf[i], represented by the first continuous state reaching it.
struct AbstractAutomaton {
  std::vector<int> leaf;
  std::vector<DcsaState> representative;
  std::vector<Word> access;
  std::vector<bool> accepting;
  // next[i * |Σ| + a], or -1 where exploration stopped at the budget.
  std::vector<int> next;
  bool incomplete = false;

  std::size_t size() const { return leaf.size(); }
};

AbstractAutomaton build_abstract_automaton(const DcsaModel& dcsa, const Partition& partition, std::size_t max_states);

struct ExtractionBudget {
  std::size_t max_abstract_states = 400;
  std::size_t max_refinements = 100;
  std::size_t random_probe_count = 2000;
  std::size_t max_hypothesis_states = 64;
  double wall_clock_seconds = 300.0;
  // Random probes draw lengths uniformly from [0, 2 * probe_max_len].
  std::size_t probe_max_len = 24;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ExtractionBudget& b);
ExtractionBudget extraction_budget_from_json(const nlohmann::json& j);

// Cached DCSA membership queries.
class DcsaMembershipOracle {
 public:
  explicit DcsaMembershipOracle(const DcsaModel& dcsa) : dcsa_(&dcsa) {}

  bool operator()(const Word& w);
  std::size_t queries() const { return queries_; }
  std::size_t cache_hits() const { return hits_; }
  std::size_t evaluations() const { return queries_ - hits_; }
  const std::unordered_map<Word, bool>& cache() const { return cache_; }

 private:
  const DcsaModel* dcsa_;
  std::unordered_map<Word, bool> cache_;
  std::size_t queries_ = 0;
  std::size_t hits_ = 0;
};

struct EquivalenceStats {
  std::size_t rounds = 0;
  std::size_t refinements = 0;
  std::size_t probes = 0;
  std::size_t abstraction_budget_hits = 0;
  // Partition size before the first abstraction and after every refinement.
  std::vector<std::size_t> leaf_counts;
  std::vector<std::string> warnings;
};

// One equivalence query: abstraction disagreements either yield a
// counterexample or refine `partition`; with no abstract disagreement left,
// random probes against the DCSA decide. Refinements are counted in `stats`
// and capped by the budget across calls.
std::optional<Word> equivalence_query(const Dfa& hypothesis, const DcsaModel& dcsa, Partition& partition,
                                      const ExtractionBudget& budget, DcsaMembershipOracle& oracle, nn::Rng& rng,
                                      EquivalenceStats& stats);

struct ExtractionLog {
  std::size_t membership_queries = 0;
  std::size_t cache_hits = 0;
  std::size_t equivalence_rounds = 0;
  std::size_t refinements = 0;
  std::size_t final_leaf_count = 0;
  std::size_t probes = 0;
  std::vector<std::size_t> leaf_counts;
  // States of each conjectured hypothesis, before minimization.
  std::vector<std::size_t> hypothesis_sizes;
  // Whether the table was closed and consistent at every conjecture.
  bool tables_closed_consistent = true;
  std::vector<Word> counterexamples;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
  bool incomplete = false;
  std::string incomplete_reason;
};

nlohmann::json to_json(const ExtractionLog& log);

struct ExtractionResult {
  Dfa dfa;
  ExtractionLog log;
};

ExtractionResult extract_dfa_from_dcsa(const DcsaModel& dcsa, const ExtractionBudget& budget = {});

}  // namespace dfx
