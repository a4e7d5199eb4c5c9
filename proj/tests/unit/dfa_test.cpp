#include "doctest.h"

#include <random>

#include <nlohmann/json.hpp>

#include "dfx/core/dfa.hpp"
#include "dfx/core/error.hpp"
#include "dfx/core/languages.hpp"
#include "support/oracles.hpp"

using namespace dfx;

namespace {

Dfa from_regex(const char* pattern, const char* symbols) {
  Alphabet alphabet(symbols);
  return regex_to_dfa(parse_regex(pattern, alphabet), alphabet);
}

// Agreement with the backtracking matcher on every word up to `max_len`.
void check_against_matcher(const char* pattern, const char* symbols, std::size_t max_len) {
  Alphabet alphabet(symbols);
  const Regex re = parse_regex(pattern, alphabet);
  const Dfa dfa = regex_to_dfa(re, alphabet);
  for (const auto& w : words_up_to(alphabet, max_len)) {
    INFO(pattern << " on '" << w << "'");
    REQUIRE(dfa.accepts(w) == testing::regex_matches(re, w));
  }
}

}  // namespace

TEST_CASE("Dfa rejects malformed tables") {
  Alphabet bin("01");
  CHECK_THROWS_AS(Dfa(bin, 1, 0, {true}, {0}), ConfigError);
  CHECK_THROWS_AS(Dfa(bin, 1, 0, {true}, {0, 1}), ConfigError);
  CHECK_THROWS_AS(Dfa(bin, 1, 1, {true}, {0, 0}), ConfigError);
  CHECK_THROWS_AS(Dfa(bin, 2, 0, {true}, {0, 0, 0, 0}), ConfigError);
}

TEST_CASE("regex_to_dfa state counts") {
  CHECK(from_regex("(aa)*", "ab").n_states() == 3);
  const Dfa eps = from_regex("()", "01");
  CHECK(eps.n_states() == 2);
  CHECK(eps.accepts(""));
  CHECK_FALSE(eps.accepts("0"));
  CHECK_FALSE(eps.accepts("1"));
  CHECK(builtin_language("tomita4").n_states() == 4);
}

TEST_CASE("regex_to_dfa agrees with the backtracking matcher") {
  check_against_matcher("(aa)*", "ab", 10);
  check_against_matcher("(0(01)*1)*", "01", 10);
  check_against_matcher("(0|1)*000(0|1)*", "01", 10);
  check_against_matcher("a+b?|(ba)*", "ab", 10);
  check_against_matcher("((0|1)*0)*1(11)*(0(0|1)*1)*0(00)*(1(0|1)*)*", "01", 10);
  check_against_matcher("(a|b|c)*abc?", "abc", 7);
}

TEST_CASE("accepts follows the transition function") {
  const Dfa t4 = builtin_language("tomita4");
  CHECK(t4.accepts("0101"));
  CHECK_FALSE(t4.accepts("10001"));
  const Dfa m3 = builtin_language("mod3");
  CHECK(m3.accepts("110"));
  CHECK_FALSE(m3.accepts("111"));
  CHECK_THROWS_AS(m3.accepts("012"), ConfigError);
}

TEST_CASE("minimize is idempotent and merges duplicate states") {
  const Dfa t4 = builtin_language("tomita4");
  CHECK(minimize(t4).n_states() == 4);
  CHECK(minimize(minimize(t4)) == minimize(t4));

  // mod2 with the accepting state duplicated: 0 -> {0,1}, state 2 a copy of 0.
  Alphabet bin("01");
  const Dfa dup(bin, 3, 0, {true, false, true}, {2, 1, 0, 1, 2, 1});
  const Dfa merged = minimize(dup);
  CHECK(merged.n_states() == 2);
  CHECK_FALSE(equivalent(merged, builtin_language("mod2")).has_value());
}

TEST_CASE("minimize drops unreachable states") {
  Alphabet bin("01");
  const Dfa d(bin, 3, 0, {true, false, false}, {0, 0, 1, 1, 2, 2});
  CHECK(minimize(d).n_states() == 1);
}

TEST_CASE("product of mod2 with itself minimizes to 2 states") {
  const Dfa m2 = builtin_language("mod2");
  const std::size_t n = m2.n_states();
  std::vector<bool> acc(n * n);
  std::vector<StateId> delta;
  for (StateId a = 0; a < n; ++a)
    for (StateId b = 0; b < n; ++b) {
      acc[a * n + b] = m2.is_accepting(a) && m2.is_accepting(b);
      for (std::size_t s = 0; s < 2; ++s) delta.push_back(static_cast<StateId>(m2.next(a, s) * n + m2.next(b, s)));
    }
  const Dfa product(m2.alphabet(), n * n, static_cast<StateId>(m2.initial() * n + m2.initial()), acc, delta);
  const Dfa small = minimize(product);
  CHECK(small.n_states() == 2);
  for (const auto& w : words_up_to(m2.alphabet(), 12)) REQUIRE(small.accepts(w) == m2.accepts(w));
}

TEST_CASE("equivalent returns the shortest counterexample") {
  const Dfa m2 = builtin_language("mod2");
  const Dfa m4 = builtin_language("mod4");
  CHECK_FALSE(equivalent(m2, m2).has_value());
  CHECK(equivalent(m2, m4) == Word("10"));
  const Dfa t1 = builtin_language("tomita1");
  CHECK(equivalent(t1, complement(t1)) == Word(""));
  CHECK_THROWS_AS(equivalent(m2, builtin_language("aa_star")), ConfigError);
}

TEST_CASE("equivalent agrees with brute force on random DFA pairs (property)") {
  Alphabet bin("01");
  std::mt19937_64 rng(7);
  auto random_dfa = [&](std::size_t n) {
    std::vector<bool> acc(n);
    std::vector<StateId> delta(2 * n);
    for (std::size_t i = 0; i < n; ++i) acc[i] = rng() % 2;
    for (auto& t : delta) t = static_cast<StateId>(rng() % n);
    return Dfa(bin, n, 0, acc, delta);
  };
  const auto words = words_up_to(bin, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const Dfa a = random_dfa(1 + rng() % 4), b = random_dfa(1 + rng() % 4);
    bool agree = true;
    Word first;
    for (const auto& w : words)
      if (a.accepts(w) != b.accepts(w)) {
        agree = false;
        first = w;
        break;
      }
    const auto cex = equivalent(a, b);
    REQUIRE(cex.has_value() == !agree);
    if (cex) CHECK(*cex == first);  // words_up_to is shortlex, so the first hit is the shortest
  }
}

TEST_CASE("to_dot rendering") {
  Alphabet bin("01");
  const Dfa all(bin, 1, 0, {true}, {0, 0});
  const std::string dot = to_dot(all);
  CHECK(dot.find("q0 [shape=doublecircle]") != std::string::npos);
  CHECK(dot.find("q0 -> q0 [label=\"0,1\"]") != std::string::npos);
  CHECK(dot == to_dot(all));

  const Dfa t4 = builtin_language("tomita4");
  const std::string t4dot = to_dot(t4);
  std::size_t nodes = 0, edges = 0;
  for (std::size_t pos = 0; (pos = t4dot.find("[shape=", pos)) != std::string::npos; ++pos) ++nodes;
  for (std::size_t pos = 0; (pos = t4dot.find("[label=", pos)) != std::string::npos; ++pos) ++edges;
  CHECK(nodes == 5);  // 4 states + the start marker
  CHECK(edges >= 4);
  CHECK(t4dot.find("shape=circle") != std::string::npos);  // the dead state

  const std::string m2 = to_dot(builtin_language("mod2"));
  CHECK(m2.find("q0 -> q0 [label=\"0\"]") != std::string::npos);
  CHECK(m2.find("q0 -> q1 [label=\"1\"]") != std::string::npos);
}

TEST_CASE("DFA JSON round trip and validation") {
  const Dfa t3 = builtin_language("tomita3");
  const auto j = dfa_to_json(t3);
  CHECK(j.at("version") == 1);
  CHECK(dfa_from_json(j) == t3);
  auto bad = j;
  bad["delta"][0][0] = 999;
  CHECK_THROWS_AS(dfa_from_json(bad), FormatError);
  bad = j;
  bad.erase("initial");
  CHECK_THROWS_AS(dfa_from_json(bad), FormatError);
}
