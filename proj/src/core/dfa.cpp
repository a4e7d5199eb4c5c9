#include "dfx/core/dfa.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dfx/core/error.hpp"

namespace dfx {

Dfa::Dfa(Alphabet alphabet, std::size_t n_states, StateId initial, std::vector<bool> accepting,
         std::vector<StateId> delta)
    : alphabet_(std::move(alphabet)), initial_(initial), accepting_(std::move(accepting)), delta_(std::move(delta)) {
  if (alphabet_.size() == 0) throw ConfigError("DFA alphabet must not be empty");
  if (n_states == 0) throw ConfigError("DFA needs at least one state");
  if (accepting_.size() != n_states) throw ConfigError("accepting flags do not match state count");
  if (initial_ >= n_states) throw ConfigError("initial state out of range");
  if (delta_.size() != n_states * alphabet_.size()) throw ConfigError("transition table is not total");
  for (StateId t : delta_)
    if (t >= n_states) throw ConfigError("transition target out of range");
}

StateId Dfa::run(std::string_view word, StateId from) const {
  StateId s = from;
  for (char c : word) s = next(s, alphabet_.index_of(c));
  return s;
}

namespace {

// Renumber the reachable part in BFS order.
Dfa canonical_reachable(const Dfa& dfa) {
  const std::size_t k = dfa.alphabet().size();
  std::vector<StateId> order;
  std::vector<std::int64_t> index(dfa.n_states(), -1);
  index[dfa.initial()] = 0;
  order.push_back(dfa.initial());
  for (std::size_t head = 0; head < order.size(); ++head) {
    for (std::size_t a = 0; a < k; ++a) {
      const StateId t = dfa.next(order[head], a);
      if (index[t] < 0) {
        index[t] = static_cast<std::int64_t>(order.size());
        order.push_back(t);
      }
    }
  }
  std::vector<bool> accepting(order.size());
  std::vector<StateId> delta(order.size() * k);
  for (std::size_t i = 0; i < order.size(); ++i) {
    accepting[i] = dfa.is_accepting(order[i]);
    for (std::size_t a = 0; a < k; ++a) delta[i * k + a] = static_cast<StateId>(index[dfa.next(order[i], a)]);
  }
  return Dfa(dfa.alphabet(), order.size(), 0, std::move(accepting), std::move(delta));
}

}  // namespace

Dfa minimize(const Dfa& input) {
  const Dfa dfa = canonical_reachable(input);
  const std::size_t n = dfa.n_states();
  const std::size_t k = dfa.alphabet().size();

  // inverse[a][t] = states s with δ(s, a) = t
  std::vector<std::vector<std::vector<StateId>>> inverse(k, std::vector<std::vector<StateId>>(n));
  for (StateId s = 0; s < n; ++s)
    for (std::size_t a = 0; a < k; ++a) inverse[a][dfa.next(s, a)].push_back(s);

  std::vector<std::vector<StateId>> blocks;
  std::vector<std::size_t> block_of(n);
  {
    std::vector<StateId> acc, rej;
    for (StateId s = 0; s < n; ++s) (dfa.is_accepting(s) ? acc : rej).push_back(s);
    for (auto* part : {&acc, &rej}) {
      if (part->empty()) continue;
      for (StateId s : *part) block_of[s] = blocks.size();
      blocks.push_back(std::move(*part));
    }
  }

  std::vector<bool> in_work(blocks.size(), false);
  std::deque<std::size_t> work;
  if (blocks.size() == 2) {
    const std::size_t smaller = blocks[0].size() <= blocks[1].size() ? 0 : 1;
    work.push_back(smaller);
    in_work[smaller] = true;
  }

  std::vector<std::size_t> hits(n, 0);
  std::vector<bool> marked(n, false);
  while (!work.empty()) {
    const std::size_t splitter = work.front();
    work.pop_front();
    in_work[splitter] = false;
    const std::vector<StateId> splitter_states = blocks[splitter];
    for (std::size_t a = 0; a < k; ++a) {
      std::vector<StateId> preimage;
      for (StateId t : splitter_states)
        for (StateId s : inverse[a][t]) {
          if (!marked[s]) {
            marked[s] = true;
            preimage.push_back(s);
          }
        }
      std::vector<std::size_t> touched;
      for (StateId s : preimage)
        if (hits[block_of[s]]++ == 0) touched.push_back(block_of[s]);
      std::sort(touched.begin(), touched.end());
      for (std::size_t b : touched) {
        if (hits[b] < blocks[b].size()) {
          std::vector<StateId> inside, outside;
          for (StateId s : blocks[b]) (marked[s] ? inside : outside).push_back(s);
          const std::size_t fresh = blocks.size();
          blocks[b] = std::move(outside);
          for (StateId s : inside) block_of[s] = fresh;
          blocks.push_back(std::move(inside));
          in_work.push_back(false);
          if (in_work[b]) {
            work.push_back(fresh);
            in_work[fresh] = true;
          } else {
            const std::size_t smaller = blocks[fresh].size() <= blocks[b].size() ? fresh : b;
            work.push_back(smaller);
            in_work[smaller] = true;
          }
        }
        hits[b] = 0;
      }
      for (StateId s : preimage) marked[s] = false;
    }
  }

  std::vector<bool> accepting(blocks.size());
  std::vector<StateId> delta(blocks.size() * k);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const StateId rep = blocks[b].front();
    accepting[b] = dfa.is_accepting(rep);
    for (std::size_t a = 0; a < k; ++a) delta[b * k + a] = static_cast<StateId>(block_of[dfa.next(rep, a)]);
  }
  Dfa quotient(dfa.alphabet(), blocks.size(), static_cast<StateId>(block_of[dfa.initial()]), std::move(accepting),
               std::move(delta));
  return canonical_reachable(quotient);
}

std::optional<Word> equivalent(const Dfa& a, const Dfa& b) {
  if (!(a.alphabet() == b.alphabet())) throw ConfigError("equivalence check needs identical alphabets");
  const std::size_t k = a.alphabet().size();
  const std::size_t nb = b.n_states();
  struct Visit {
    std::int64_t parent;
    std::size_t symbol;
  };
  std::vector<Visit> visit(a.n_states() * nb, Visit{-2, 0});
  std::vector<std::size_t> queue;
  const std::size_t start = a.initial() * nb + b.initial();
  visit[start] = {-1, 0};
  queue.push_back(start);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t pair = queue[head];
    const auto sa = static_cast<StateId>(pair / nb);
    const auto sb = static_cast<StateId>(pair % nb);
    if (a.is_accepting(sa) != b.is_accepting(sb)) {
      Word w;
      for (std::int64_t p = static_cast<std::int64_t>(pair); visit[p].parent >= 0; p = visit[p].parent)
        w.push_back(a.alphabet().symbol(visit[p].symbol));
      std::reverse(w.begin(), w.end());
      return w;
    }
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t next = a.next(sa, c) * nb + b.next(sb, c);
      if (visit[next].parent == -2) {
        visit[next] = {static_cast<std::int64_t>(pair), c};
        queue.push_back(next);
      }
    }
  }
  return std::nullopt;
}

Dfa complement(const Dfa& dfa) {
  std::vector<bool> accepting = dfa.accepting();
  accepting.flip();
  return Dfa(dfa.alphabet(), dfa.n_states(), dfa.initial(), std::move(accepting), dfa.table());
}

namespace {

struct Nfa {
  std::vector<std::vector<int>> eps;
  std::vector<std::vector<std::pair<std::size_t, int>>> moves;  // (symbol index, target)

  int add_state() {
    eps.emplace_back();
    moves.emplace_back();
    return static_cast<int>(eps.size()) - 1;
  }
};

struct Fragment {
  int start, accept;
};

Fragment thompson(Nfa& nfa, const Regex& r, const Alphabet& alphabet) {
  using K = Regex::Kind;
  switch (r.kind()) {
    case K::Epsilon: {
      const int s = nfa.add_state(), t = nfa.add_state();
      nfa.eps[s].push_back(t);
      return {s, t};
    }
    case K::Literal: {
      const int s = nfa.add_state(), t = nfa.add_state();
      nfa.moves[s].emplace_back(alphabet.index_of(r.symbol()), t);
      return {s, t};
    }
    case K::Concat: {
      const Fragment l = thompson(nfa, r.lhs(), alphabet);
      const Fragment rr = thompson(nfa, r.rhs(), alphabet);
      nfa.eps[l.accept].push_back(rr.start);
      return {l.start, rr.accept};
    }
    case K::Union: {
      const Fragment l = thompson(nfa, r.lhs(), alphabet);
      const Fragment rr = thompson(nfa, r.rhs(), alphabet);
      const int s = nfa.add_state(), t = nfa.add_state();
      nfa.eps[s] = {l.start, rr.start};
      nfa.eps[l.accept].push_back(t);
      nfa.eps[rr.accept].push_back(t);
      return {s, t};
    }
    case K::Star:
    case K::Plus:
    case K::Optional: {
      const Fragment f = thompson(nfa, r.inner(), alphabet);
      const int s = nfa.add_state(), t = nfa.add_state();
      nfa.eps[s].push_back(f.start);
      nfa.eps[f.accept].push_back(t);
      if (r.kind() != K::Plus) nfa.eps[s].push_back(t);
      if (r.kind() != K::Optional) nfa.eps[f.accept].push_back(f.start);
      return {s, t};
    }
  }
  throw ConfigError("unreachable regex kind");
}

std::vector<int> closure(const Nfa& nfa, std::vector<int> set) {
  std::vector<bool> seen(nfa.eps.size(), false);
  for (int s : set) seen[s] = true;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int t : nfa.eps[set[i]])
      if (!seen[t]) {
        seen[t] = true;
        set.push_back(t);
      }
  std::sort(set.begin(), set.end());
  return set;
}

}  // namespace

Dfa regex_to_dfa(const Regex& regex, const Alphabet& alphabet) {
  Nfa nfa;
  const Fragment f = thompson(nfa, regex, alphabet);
  const std::size_t k = alphabet.size();

  std::map<std::vector<int>, StateId> ids;
  std::vector<std::vector<int>> subsets;
  auto intern = [&](std::vector<int> set) {
    auto [it, inserted] = ids.emplace(set, static_cast<StateId>(subsets.size()));
    if (inserted) subsets.push_back(std::move(set));
    return it->second;
  };
  intern(closure(nfa, {f.start}));
  std::vector<StateId> delta;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      std::vector<int> moved;
      for (int s : subsets[i])
        for (const auto& [sym, t] : nfa.moves[s])
          if (sym == a) moved.push_back(t);
      delta.push_back(intern(closure(nfa, std::move(moved))));
    }
  }
  std::vector<bool> accepting(subsets.size());
  for (std::size_t i = 0; i < subsets.size(); ++i)
    accepting[i] = std::binary_search(subsets[i].begin(), subsets[i].end(), f.accept);
  return minimize(Dfa(alphabet, subsets.size(), 0, std::move(accepting), std::move(delta)));
}

std::string to_dot(const Dfa& dfa, std::string_view name) {
  const std::size_t k = dfa.alphabet().size();
  std::ostringstream out;
  out << "digraph " << name << " {\n";
  out << "  rankdir=LR;\n";
  out << "  __start [shape=point];\n";
  for (StateId s = 0; s < dfa.n_states(); ++s)
    out << "  q" << s << " [shape=" << (dfa.is_accepting(s) ? "doublecircle" : "circle") << "];\n";
  out << "  __start -> q" << dfa.initial() << ";\n";
  for (StateId s = 0; s < dfa.n_states(); ++s) {
    std::vector<std::pair<StateId, std::string>> edges;
    for (std::size_t a = 0; a < k; ++a) {
      const StateId t = dfa.next(s, a);
      auto it = std::find_if(edges.begin(), edges.end(), [t](const auto& e) { return e.first == t; });
      if (it == edges.end()) {
        edges.emplace_back(t, std::string(1, dfa.alphabet().symbol(a)));
      } else {
        it->second += ',';
        it->second += dfa.alphabet().symbol(a);
      }
    }
    for (const auto& [t, label] : edges) out << "  q" << s << " -> q" << t << " [label=\"" << label << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

nlohmann::json dfa_to_json(const Dfa& dfa) {
  const std::size_t k = dfa.alphabet().size();
  nlohmann::json accepting = nlohmann::json::array();
  for (StateId s = 0; s < dfa.n_states(); ++s)
    if (dfa.is_accepting(s)) accepting.push_back(s);
  nlohmann::json delta = nlohmann::json::array();
  for (StateId s = 0; s < dfa.n_states(); ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t a = 0; a < k; ++a) row.push_back(dfa.next(s, a));
    delta.push_back(std::move(row));
  }
  return {{"version", 1},
          {"alphabet", dfa.alphabet().symbols()},
          {"n_states", dfa.n_states()},
          {"initial", dfa.initial()},
          {"accepting", std::move(accepting)},
          {"delta", std::move(delta)}};
}

Dfa dfa_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported DFA version");
    Alphabet alphabet(j.at("alphabet").get<std::string>());
    const auto n = j.at("n_states").get<std::size_t>();
    std::vector<bool> accepting(n, false);
    for (const auto& s : j.at("accepting")) {
      const auto id = s.get<std::size_t>();
      if (id >= n) throw FormatError("accepting state out of range");
      accepting[id] = true;
    }
    const auto& rows = j.at("delta");
    if (rows.size() != n) throw FormatError("delta row count does not match n_states");
    std::vector<StateId> delta;
    for (const auto& row : rows) {
      if (row.size() != alphabet.size()) throw FormatError("delta row width does not match alphabet");
      for (const auto& t : row) delta.push_back(t.get<StateId>());
    }
    return Dfa(std::move(alphabet), n, j.at("initial").get<StateId>(), std::move(accepting), std::move(delta));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed DFA JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid DFA: ") + e.what());
  }
}

}  // namespace dfx
