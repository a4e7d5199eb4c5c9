#include "doctest.h"

#include <cmath>
#include <set>

#include "dfx/core/error.hpp"
#include "dfx/core/languages.hpp"
#include "dfx/lstar/extraction.hpp"
#include "dfx/lstar/lstar.hpp"

using namespace dfx;

namespace {

LstarResult learn_exactly(const Dfa& target, LstarOptions options = {}) {
  return lstar(
      target.alphabet(), [&](const Word& w) { return target.accepts(w); },
      [&](const Dfa& h) { return equivalent(h, target); }, options);
}

// Hand-wired Elman cell over {0,1}; embeddings, weights and classifier given
// row-major, state dimension h.
DcsaModel stub_rnn(std::size_t h, std::vector<double> embed, std::vector<double> init, std::vector<double> wx,
                   std::vector<double> wh, std::vector<double> b, std::vector<double> cls_w,
                   std::vector<double> cls_b) {
  DcsaModel m;
  m.kind = DcsaKind::Rnn;
  m.alphabet = Alphabet("01");
  m.state_dim = h;
  m.vocab_size = 4;
  m.params.insert("embed.token", nn::Tensor({4, h}, std::move(embed)));
  m.params.insert("init_state", nn::Tensor({1, h}, std::move(init)));
  m.params.insert("cell.wx", nn::Tensor({h, h}, std::move(wx)));
  m.params.insert("cell.wh", nn::Tensor({h, h}, std::move(wh)));
  m.params.insert("cell.b", nn::Tensor({h}, std::move(b)));
  m.params.insert("classifier.weight", nn::Tensor({h, 2}, std::move(cls_w)));
  m.params.insert("classifier.bias", nn::Tensor({2}, std::move(cls_b)));
  return m;
}

// State ≈ +1 after a 0 (or at the start), ≈ −1 after a 1; accepts positive
// states. Realizes "binary value divisible by 2".
DcsaModel even_value_stub() { return stub_rnn(1, {0, 0, 1, -1}, {1}, {3}, {0}, {0}, {0, 1}, {0, 0}); }

// Unit 0 switches on after the first symbol, unit 1 copies unit 0 one step
// later; accepts once unit 1 is on, i.e. words of length >= 2. The empty word
// and single symbols share the rejecting side of the classifier but differ
// in future behavior, so the abstraction needs a refinement.
DcsaModel long_word_stub() {
  return stub_rnn(2, std::vector<double>(8, 0.0), {-1, -1}, {0, 0, 0, 0}, {0, 3, 0, 0}, {3, 0}, {0, 0, 0, 1}, {0, 0});
}

Dfa at_least_two() { return language_from_spec("(0|1)(0|1)(0|1)*", "01"); }

}  // namespace

TEST_CASE("exact teachers recover every builtin grammar minimally") {
  for (const auto& info : builtin_languages()) {
    CAPTURE(info.name);
    const Dfa target = builtin_language(info.name);
    const auto r = learn_exactly(target);
    CHECK_FALSE(r.incomplete);
    CHECK_FALSE(equivalent(r.hypothesis, target).has_value());
    CHECK(r.hypothesis.n_states() == minimize(target).n_states());
    CHECK(r.equivalence_queries <= r.hypothesis.n_states());
  }
}

TEST_CASE("tomita4 is recovered up to state numbering") {
  const Dfa t4 = builtin_language("tomita4");
  const auto r = learn_exactly(t4);
  CHECK(r.hypothesis.n_states() == 4);
  CHECK(r.hypothesis == minimize(t4));
}

TEST_CASE("accept-all language gives a single accepting state") {
  const Dfa all = language_from_spec("(0|1)*", "01");
  const auto r = learn_exactly(all);
  REQUIRE(r.hypothesis.n_states() == 1);
  CHECK(r.hypothesis.is_accepting(0));
  CHECK(r.hypothesis.next(0, 0) == 0);
  CHECK(r.hypothesis.next(0, 1) == 0);
  CHECK(r.counterexamples.empty());
}

TEST_CASE("table is closed and consistent at every conjecture") {
  for (const char* name : {"tomita3", "tomita5", "d4", "mod5", "abab_star"}) {
    CAPTURE(name);
    std::size_t conjectures = 0;
    LstarOptions options;
    options.on_conjecture = [&](const ObservationTable& t) {
      ++conjectures;
      CHECK(t.is_closed());
      CHECK(t.is_consistent());
    };
    const auto r = learn_exactly(builtin_language(name), options);
    CHECK(conjectures == r.equivalence_queries);
  }
}

TEST_CASE("table rows follow the membership oracle") {
  const Dfa t = builtin_language("tomita7");
  std::size_t calls = 0;
  ObservationTable table(t.alphabet(), [&](const Word& w) {
    ++calls;
    return t.accepts(w);
  });
  table.add_suffix("1");
  table.add_prefix("10");
  for (const auto& s : {Word{}, Word{"1"}, Word{"10"}, Word{"100"}})
    for (std::size_t k = 0; k < table.suffixes().size(); ++k)
      CHECK(table.row(s)[k] == t.accepts(s + table.suffixes()[k]));
  const std::size_t before = calls;
  table.add_prefix("10");
  CHECK(calls == before);
  CHECK_THROWS_AS(table.row("0000"), ConfigError);
}

TEST_CASE("a counterexample the hypothesis already handles is rejected") {
  const Dfa t = builtin_language("tomita1");
  CHECK_THROWS_AS(lstar(
                      t.alphabet(), [&](const Word& w) { return t.accepts(w); },
                      [](const Dfa& h) -> std::optional<Word> { return h.accepts("0") ? "1" : "0"; }),
                  Error);
}

TEST_CASE("hypothesis budget stops with the last conjecture") {
  LstarOptions options;
  options.max_hypothesis_states = 2;
  const auto r = learn_exactly(builtin_language("mod5"), options);
  CHECK(r.incomplete);
  CHECK_FALSE(r.incomplete_reason.empty());
  CHECK(r.hypothesis.n_states() <= 2);
}

TEST_CASE("partition refinement") {
  Partition p = Partition::trivial();
  CHECK(p.leaf_count() == 1);
  const std::vector<double> a{0.0, 0.3, 0.3}, b{1.0, 0.3, 0.3};
  CHECK(p.locate(a) == 0);
  p.refine(0, a, b);
  CHECK(p.leaf_count() == 2);
  CHECK(p.locate(a) != p.locate(b));
  const auto j = p.to_json();
  CHECK(j["nodes"][0]["dim"] == 0);
  CHECK(j["nodes"][0]["threshold"] == doctest::Approx(0.5));
  CHECK(p.locate(std::vector<double>{0.49, 9, 9}) == p.locate(a));
  CHECK(p.locate(std::vector<double>{0.51, -9, -9}) == p.locate(b));

  CHECK_THROWS_AS(p.refine(p.locate(a), a, a), ConfigError);
  CHECK_THROWS_AS(p.refine(p.locate(a), a, b), ConfigError);
  CHECK(p.leaf_count() == 2);

  const double x = 0.25, y = std::nextafter(0.25, 1.0);
  Partition q = Partition::trivial();
  q.refine(0, std::vector<double>{x}, std::vector<double>{y});
  CHECK(q.locate(std::vector<double>{x}) != q.locate(std::vector<double>{y}));
}

TEST_CASE("refinement never merges cells") {
  nn::Rng rng(17);
  std::vector<std::vector<double>> points(200, std::vector<double>(4));
  for (auto& v : points)
    for (auto& c : v) c = rng.uniform(-1, 1);
  Partition p = Partition::oblique({1, -1, 0.5, 0}, 0.1);
  for (int step = 0; step < 40; ++step) {
    std::vector<int> before;
    for (const auto& v : points) before.push_back(p.locate(v));
    const auto& a = points[rng.below(points.size())];
    const auto* b = &a;
    for (const auto& v : points)
      if (&v != &a && p.locate(v) == p.locate(a)) {
        b = &v;
        break;
      }
    if (b == &a) continue;
    const std::size_t leaves = p.leaf_count();
    p.refine(p.locate(a), a, *b);
    CHECK(p.leaf_count() == leaves + 1);
    CHECK(p.locate(a) != p.locate(*b));
    std::size_t merged = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t k = 0; k < points.size(); ++k)
        merged += before[i] != before[k] && p.locate(points[i]) == p.locate(points[k]);
    CHECK(merged == 0);
  }
  std::set<int> ids;
  for (const auto& v : points) ids.insert(p.locate(v));
  for (int id : ids) CHECK(id < static_cast<int>(p.leaf_count()));
}

TEST_CASE("classifier split reproduces the DCSA decision") {
  const auto teacher = build_transformer({}, Alphabet("01"), 5);
  const auto dcsa = build_dcsa(DcsaKind::Gru, teacher, 6);
  const Partition p = Partition::classifier_split(dcsa);
  CHECK(p.leaf_count() == 2);
  nn::Rng rng(8);
  for (int n = 0; n < 1000; ++n) {
    DcsaState s{std::vector<double>(dcsa.state_dim), {}};
    for (auto& v : s.h) v = rng.uniform(-1, 1);
    CHECK(p.locate(s.h) == dcsa_classify_state(dcsa, s).label);
  }
  for (const Word& w : words_up_to(dcsa.alphabet, 6))
    CHECK(p.locate(dcsa_run_word(dcsa, w).h) == dcsa_classify_word(dcsa, w).label);
}

TEST_CASE("abstract automaton construction") {
  const auto dcsa = even_value_stub();
  SUBCASE("trivial partition") {
    const auto a = build_abstract_automaton(dcsa, Partition::trivial(), 400);
    REQUIRE(a.size() == 1);
    CHECK(a.next == std::vector<int>{0, 0});
    CHECK(a.accepting[0]);
    CHECK_FALSE(a.incomplete);
  }
  SUBCASE("classifier split separates even from odd values") {
    const auto a = build_abstract_automaton(dcsa, Partition::classifier_split(dcsa), 400);
    REQUIRE(a.size() == 2);
    CHECK(a.access == std::vector<Word>{"", "1"});
    CHECK(a.accepting == std::vector<bool>{true, false});
    CHECK(a.next == std::vector<int>{0, 1, 0, 1});
    CHECK(a.representative[0] == dcsa_initial(dcsa));
  }
  SUBCASE("budget of one state") {
    const auto a = build_abstract_automaton(dcsa, Partition::classifier_split(dcsa), 1);
    CHECK(a.size() == 1);
    CHECK(a.incomplete);
    CHECK(a.next[1] == -1);
  }
}

TEST_CASE("membership oracle caches answers") {
  const auto dcsa = even_value_stub();
  DcsaMembershipOracle oracle(dcsa);
  CHECK(oracle("") == (dcsa_classify_state(dcsa, dcsa_initial(dcsa)).label == 1));
  CHECK(oracle("10"));
  CHECK(oracle("10"));
  CHECK_FALSE(oracle("1"));
  CHECK(oracle.queries() == 4);
  CHECK(oracle.cache_hits() == 1);
  CHECK(oracle.evaluations() == 3);
  CHECK_THROWS_AS(oracle("2"), ConfigError);
}

TEST_CASE("equivalence queries against a two-state stub") {
  const auto dcsa = even_value_stub();
  const Dfa truth = builtin_language("mod2");
  ExtractionBudget budget;
  budget.random_probe_count = 300;
  DcsaMembershipOracle oracle(dcsa);
  nn::Rng rng(3);
  EquivalenceStats stats;
  Partition p = Partition::classifier_split(dcsa);
  CHECK_FALSE(equivalence_query(truth, dcsa, p, budget, oracle, rng, stats).has_value());
  CHECK(stats.refinements == 0);
  CHECK(stats.probes == 300);

  const auto w = equivalence_query(complement(truth), dcsa, p, budget, oracle, rng, stats);
  REQUIRE(w.has_value());
  CHECK(w->size() <= 1);
  CHECK(stats.rounds == 2);
}

TEST_CASE("extraction recovers the stub languages") {
  SUBCASE("no refinement needed") {
    const auto r = extract_dfa_from_dcsa(even_value_stub());
    CHECK_FALSE(equivalent(r.dfa, builtin_language("mod2")).has_value());
    CHECK(r.dfa.n_states() == 2);
    CHECK(r.log.refinements == 0);
    CHECK(r.log.final_leaf_count == 2);
    CHECK_FALSE(r.log.incomplete);
  }
  SUBCASE("refinement splits conflated rejecting states") {
    const auto dcsa = long_word_stub();
    const auto r = extract_dfa_from_dcsa(dcsa);
    CHECK_FALSE(equivalent(r.dfa, at_least_two()).has_value());
    CHECK(r.dfa.n_states() == 3);
    CHECK(r.log.refinements >= 1);
    CHECK(r.log.final_leaf_count == 2 + r.log.refinements);
    CHECK(r.log.equivalence_rounds >= 2);
    REQUIRE(r.log.leaf_counts.size() == r.log.refinements + 1);
    CHECK(r.log.leaf_counts.front() == 2);
    for (std::size_t i = 1; i < r.log.leaf_counts.size(); ++i) CHECK(r.log.leaf_counts[i] > r.log.leaf_counts[i - 1]);
    CHECK(r.log.tables_closed_consistent);
    CHECK(r.log.hypothesis_sizes.size() == r.log.equivalence_rounds);
    const auto j = to_json(r.log);
    for (const char* key : {"membership_queries", "cache_hits", "equivalence_rounds", "refinements", "final_leaf_count",
                            "counterexamples", "wall_seconds", "incomplete"})
      CHECK(j.contains(key));
  }
}

TEST_CASE("cached answers match fresh evaluations") {
  const auto teacher = build_transformer({}, Alphabet("01"), 11);
  const auto dcsa = build_dcsa(DcsaKind::Rnn, teacher, 12);
  ExtractionBudget budget;
  budget.max_hypothesis_states = 12;
  budget.random_probe_count = 300;
  budget.probe_max_len = 8;
  budget.max_refinements = 20;
  DcsaMembershipOracle oracle(dcsa);
  Partition p = Partition::classifier_split(dcsa);
  nn::Rng rng(4);
  EquivalenceStats stats;
  LstarOptions options;
  options.max_hypothesis_states = budget.max_hypothesis_states;
  lstar(
      dcsa.alphabet, [&](const Word& w) { return oracle(w); },
      [&](const Dfa& h) { return equivalence_query(h, dcsa, p, budget, oracle, rng, stats); }, options);
  REQUIRE(oracle.cache().size() >= 100);
  std::size_t checked = 0;
  for (const auto& [w, label] : oracle.cache()) {
    if (checked++ == 1000) break;
    CHECK(label == (dcsa_classify_word(dcsa, w).label == 1));
  }
}

TEST_CASE("budget validation") {
  ExtractionBudget b;
  CHECK_NOTHROW(b.validate());
  b.max_refinements = 0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = {};
  b.wall_clock_seconds = 0;
  CHECK_THROWS_AS(extract_dfa_from_dcsa(even_value_stub(), b), ConfigError);
}
