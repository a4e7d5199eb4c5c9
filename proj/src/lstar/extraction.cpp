#include "dfx/lstar/extraction.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>

#include "dfx/core/error.hpp"
#include "dfx/data/dataset.hpp"

namespace dfx {

namespace {

double affine(double bias, const std::vector<double>& w, std::span<const double> x) {
  double acc = bias;
  for (std::size_t i = 0; i < w.size(); ++i) acc += x[i] * w[i];
  return acc;
}

}  // namespace

Partition::Node Partition::leaf_node(int id) {
  Node n;
  n.leaf = id;
  return n;
}

Partition Partition::trivial() {
  Partition p;
  p.nodes_.push_back(leaf_node(0));
  p.leaves_ = 1;
  return p;
}

Partition Partition::oblique(std::vector<double> weights, double bias) {
  for (double v : weights)
    if (!std::isfinite(v)) throw ConfigError("partition weights must be finite");
  if (!std::isfinite(bias)) throw ConfigError("partition bias must be finite");
  Partition p;
  Node root;
  root.w_low.assign(weights.size(), 0.0);
  root.w_high = std::move(weights);
  root.b_high = bias;
  root.low = 1;
  root.high = 2;
  p.nodes_ = {root, leaf_node(0), leaf_node(1)};
  p.leaves_ = 2;
  return p;
}

Partition Partition::classifier_split(const DcsaModel& model) {
  const auto& w = model.params.at("classifier.weight");
  const auto& b = model.params.at("classifier.bias");
  if (w.rows() != model.state_dim || w.cols() != 2 || b.size() != 2)
    throw ConfigError("DCSA classifier has unexpected shape");
  Partition p;
  Node root;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    root.w_low.push_back(w.at(i, 0));
    root.w_high.push_back(w.at(i, 1));
  }
  root.b_low = b[0];
  root.b_high = b[1];
  root.low = 1;
  root.high = 2;
  p.nodes_ = {root, leaf_node(0), leaf_node(1)};
  p.leaves_ = 2;
  return p;
}

int Partition::node_of(std::span<const double> x) const {
  int n = 0;
  while (nodes_[n].leaf < 0) {
    const Node& node = nodes_[n];
    bool high;
    if (node.dim >= 0) {
      if (static_cast<std::size_t>(node.dim) >= x.size()) throw ConfigError("state vector too short for partition");
      high = x[node.dim] > node.threshold;
    } else {
      if (node.w_high.size() != x.size()) throw ConfigError("state vector does not match partition dimension");
      high = affine(node.b_high, node.w_high, x) > affine(node.b_low, node.w_low, x);
    }
    n = high ? node.high : node.low;
  }
  return n;
}

int Partition::locate(std::span<const double> x) const { return nodes_[node_of(x)].leaf; }

void Partition::refine(int leaf, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("conflict states differ in dimension");
  const int n = node_of(a);
  if (nodes_[n].leaf != leaf || node_of(b) != n) throw ConfigError("conflict states are not both in the given cell");

  std::size_t dim = 0;
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (d > gap) {
      gap = d;
      dim = i;
    }
  }
  if (gap == 0.0) throw ConfigError("cannot split a cell between identical states");
  const double lo = std::min(a[dim], b[dim]);
  const double hi = std::max(a[dim], b[dim]);
  double t = lo + (hi - lo) / 2;
  // Adjacent doubles: the midpoint rounds onto an endpoint.
  if (t >= hi) t = lo;

  Node split;
  split.dim = static_cast<int>(dim);
  split.threshold = t;
  split.low = static_cast<int>(nodes_.size());
  split.high = split.low + 1;
  nodes_.push_back(leaf_node(leaf));
  nodes_.push_back(leaf_node(static_cast<int>(leaves_)));
  nodes_[n] = split;
  ++leaves_;
}

nlohmann::json Partition::to_json() const {
  auto nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    if (n.leaf >= 0)
      nodes.push_back({{"leaf", n.leaf}});
    else if (n.dim >= 0)
      nodes.push_back({{"dim", n.dim}, {"threshold", n.threshold}, {"low", n.low}, {"high", n.high}});
    else
      nodes.push_back({{"w_high", n.w_high},
                       {"b_high", n.b_high},
                       {"w_low", n.w_low},
                       {"b_low", n.b_low},
                       {"low", n.low},
                       {"high", n.high}});
  }
  return {{"leaf_count", leaves_}, {"nodes", nodes}};
}

AbstractAutomaton build_abstract_automaton(const DcsaModel& dcsa, const Partition& partition, std::size_t max_states) {
  if (max_states == 0) throw ConfigError("abstract state budget must be positive");
  const std::size_t k = dcsa.alphabet.size();
  AbstractAutomaton a;
  std::vector<int> index_of_leaf(partition.leaf_count(), -1);

  auto add = [&](DcsaState s, Word access) {
    const int leaf = partition.locate(s.h);
    index_of_leaf[leaf] = static_cast<int>(a.size());
    a.leaf.push_back(leaf);
    a.accepting.push_back(dcsa_classify_state(dcsa, s).label == 1);
    a.representative.push_back(std::move(s));
    a.access.push_back(std::move(access));
    a.next.resize(a.size() * k, -1);
  };

  add(dcsa_initial(dcsa), Word{});
  for (std::size_t q = 0; q < a.size(); ++q) {
    for (std::size_t i = 0; i < k; ++i) {
      DcsaState t = dcsa_step(dcsa, a.representative[q], kFirstSymbolToken + static_cast<int>(i));
      const int leaf = partition.locate(t.h);
      if (index_of_leaf[leaf] < 0) {
        if (a.size() >= max_states) {
          a.incomplete = true;
          continue;
        }
        add(std::move(t), a.access[q] + dcsa.alphabet.symbol(i));
      }
      a.next[q * k + i] = index_of_leaf[leaf];
    }
  }
  return a;
}

void ExtractionBudget::validate() const {
  if (max_abstract_states == 0 || max_refinements == 0 || random_probe_count == 0 || max_hypothesis_states == 0 ||
      probe_max_len == 0)
    throw ConfigError("extraction budgets must be positive");
  if (!(wall_clock_seconds > 0.0)) throw ConfigError("extraction wall-clock budget must be positive");
}

nlohmann::json to_json(const ExtractionBudget& b) {
  return {{"max_abstract_states", b.max_abstract_states},
          {"max_refinements", b.max_refinements},
          {"random_probe_count", b.random_probe_count},
          {"max_hypothesis_states", b.max_hypothesis_states},
          {"wall_clock_seconds", b.wall_clock_seconds},
          {"probe_max_len", b.probe_max_len},
          {"seed", b.seed}};
}

ExtractionBudget extraction_budget_from_json(const nlohmann::json& j) {
  ExtractionBudget b;
  b.max_abstract_states = j.value("max_abstract_states", b.max_abstract_states);
  b.max_refinements = j.value("max_refinements", b.max_refinements);
  b.random_probe_count = j.value("random_probe_count", b.random_probe_count);
  b.max_hypothesis_states = j.value("max_hypothesis_states", b.max_hypothesis_states);
  b.wall_clock_seconds = j.value("wall_clock_seconds", b.wall_clock_seconds);
  b.probe_max_len = j.value("probe_max_len", b.probe_max_len);
  b.seed = j.value("seed", b.seed);
  return b;
}

bool DcsaMembershipOracle::operator()(const Word& w) {
  ++queries_;
  if (auto it = cache_.find(w); it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  const bool label = dcsa_classify_word(*dcsa_, w).label == 1;
  cache_.emplace(w, label);
  return label;
}

namespace {

// Shortest word on which the hypothesis and the explored part of the
// abstraction disagree.
std::optional<Word> abstract_disagreement(const Dfa& h, const AbstractAutomaton& a) {
  const std::size_t k = h.alphabet().size();
  const std::size_t hn = h.n_states();
  std::vector<int> parent(hn * a.size(), -1);
  std::vector<char> via(hn * a.size(), 0);
  std::vector<bool> seen(hn * a.size(), false);
  std::deque<std::size_t> queue;
  const std::size_t start = h.initial() * a.size();
  seen[start] = true;
  queue.push_back(start);
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    const std::size_t hs = cur / a.size(), as = cur % a.size();
    if (h.is_accepting(static_cast<StateId>(hs)) != a.accepting[as]) {
      Word w;
      for (std::size_t n = cur; n != start; n = static_cast<std::size_t>(parent[n])) w.insert(w.begin(), via[n]);
      return w;
    }
    for (std::size_t i = 0; i < k; ++i) {
      const int an = a.next[as * k + i];
      if (an < 0) continue;
      const std::size_t nxt = h.next(static_cast<StateId>(hs), i) * a.size() + static_cast<std::size_t>(an);
      if (seen[nxt]) continue;
      seen[nxt] = true;
      parent[nxt] = static_cast<int>(cur);
      via[nxt] = h.alphabet().symbol(i);
      queue.push_back(nxt);
    }
  }
  return std::nullopt;
}

// Splits the first cell where the abstraction's path along w leaves the
// DCSA's own trajectory. Returns false when no such cell can be split.
bool refine_along(const DcsaModel& dcsa, const AbstractAutomaton& a, Partition& partition, const Word& w,
                  std::string& why) {
  DcsaState s = dcsa_initial(dcsa);
  std::size_t q = 0;
  for (char c : w) {
    const std::size_t i = dcsa.alphabet.index_of(c);
    DcsaState t = dcsa_step(dcsa, s, kFirstSymbolToken + static_cast<int>(i));
    const int qn = a.next[q * dcsa.alphabet.size() + i];
    if (partition.locate(t.h) != a.leaf[static_cast<std::size_t>(qn)]) {
      try {
        partition.refine(a.leaf[q], s.h, a.representative[q].h);
        return true;
      } catch (const ConfigError& e) {
        why = e.what();
        return false;
      }
    }
    s = std::move(t);
    q = static_cast<std::size_t>(qn);
  }
  why = "abstraction disagreement without a diverging cell on '" + w + "'";
  return false;
}

std::optional<Word> probe(const Dfa& hypothesis, const DcsaModel& dcsa, const ExtractionBudget& budget,
                          DcsaMembershipOracle& oracle, nn::Rng& rng, EquivalenceStats& stats) {
  const std::size_t k = dcsa.alphabet.size();
  std::optional<Word> best;
  for (std::size_t n = 0; n < budget.random_probe_count; ++n) {
    const std::size_t len = rng.below(2 * budget.probe_max_len + 1);
    Word w(len, ' ');
    for (auto& c : w) c = dcsa.alphabet.symbol(rng.below(k));
    ++stats.probes;
    if (oracle(w) != hypothesis.accepts(w) && (!best || w.size() < best->size())) best = std::move(w);
  }
  return best;
}

}  // namespace

std::optional<Word> equivalence_query(const Dfa& hypothesis, const DcsaModel& dcsa, Partition& partition,
                                      const ExtractionBudget& budget, DcsaMembershipOracle& oracle, nn::Rng& rng,
                                      EquivalenceStats& stats) {
  if (!(hypothesis.alphabet() == dcsa.alphabet)) throw ConfigError("hypothesis alphabet differs from the DCSA's");
  ++stats.rounds;
  if (stats.leaf_counts.empty()) stats.leaf_counts.push_back(partition.leaf_count());
  while (stats.refinements < budget.max_refinements) {
    const AbstractAutomaton a = build_abstract_automaton(dcsa, partition, budget.max_abstract_states);
    if (a.incomplete) ++stats.abstraction_budget_hits;
    const auto w = abstract_disagreement(hypothesis, a);
    if (!w) break;
    if (oracle(*w) != hypothesis.accepts(*w)) return w;
    std::string why;
    if (!refine_along(dcsa, a, partition, *w, why)) {
      stats.warnings.push_back("refinement failed, falling back to random probes: " + why);
      break;
    }
    ++stats.refinements;
    stats.leaf_counts.push_back(partition.leaf_count());
  }
  if (auto w = probe(hypothesis, dcsa, budget, oracle, rng, stats)) return w;
  if (stats.refinements >= budget.max_refinements)
    stats.warnings.push_back("refinement budget exhausted; accepted after " +
                             std::to_string(budget.random_probe_count) + " clean random probes");
  return std::nullopt;
}

nlohmann::json to_json(const ExtractionLog& log) {
  return {{"membership_queries", log.membership_queries},
          {"cache_hits", log.cache_hits},
          {"equivalence_rounds", log.equivalence_rounds},
          {"refinements", log.refinements},
          {"final_leaf_count", log.final_leaf_count},
          {"probes", log.probes},
          {"leaf_counts", log.leaf_counts},
          {"hypothesis_sizes", log.hypothesis_sizes},
          {"tables_closed_consistent", log.tables_closed_consistent},
          {"counterexamples", log.counterexamples},
          {"warnings", log.warnings},
          {"wall_seconds", log.wall_seconds},
          {"incomplete", log.incomplete},
          {"incomplete_reason", log.incomplete_reason}};
}

ExtractionResult extract_dfa_from_dcsa(const DcsaModel& dcsa, const ExtractionBudget& budget) {
  budget.validate();
  const auto start = std::chrono::steady_clock::now();
  Partition partition = Partition::classifier_split(dcsa);
  DcsaMembershipOracle oracle(dcsa);
  nn::Rng rng = nn::Rng::stream(budget.seed, "extraction.probes");
  EquivalenceStats stats;

  LstarOptions options;
  options.max_hypothesis_states = budget.max_hypothesis_states;
  std::vector<std::size_t> sizes;
  bool tables_ok = true;
  options.on_conjecture = [&](const ObservationTable& t) {
    tables_ok = tables_ok && t.is_closed() && t.is_consistent();
    sizes.push_back(t.distinct_prefix_rows());
  };
  options.deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                 std::chrono::duration<double>(budget.wall_clock_seconds));
  LstarResult r = lstar(
      dcsa.alphabet, [&](const Word& w) { return oracle(w); },
      [&](const Dfa& h) { return equivalence_query(h, dcsa, partition, budget, oracle, rng, stats); }, options);

  ExtractionLog log;
  log.membership_queries = oracle.queries();
  log.cache_hits = oracle.cache_hits();
  log.equivalence_rounds = stats.rounds;
  log.refinements = stats.refinements;
  log.final_leaf_count = partition.leaf_count();
  log.probes = stats.probes;
  log.leaf_counts = std::move(stats.leaf_counts);
  log.hypothesis_sizes = std::move(sizes);
  log.tables_closed_consistent = tables_ok;
  log.counterexamples = std::move(r.counterexamples);
  log.warnings = std::move(stats.warnings);
  if (stats.abstraction_budget_hits > 0)
    log.warnings.push_back("abstract state budget reached in " + std::to_string(stats.abstraction_budget_hits) +
                           " abstraction builds");
  log.incomplete = r.incomplete;
  log.incomplete_reason = r.incomplete_reason;
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {minimize(r.hypothesis), std::move(log)};
}

}  // namespace dfx
