#include "dfx/core/regex.hpp"

#include "dfx/core/error.hpp"

namespace dfx {

Regex Regex::epsilon() { return Regex(std::make_shared<const Node>(Node{Kind::Epsilon, 0, nullptr, nullptr})); }

Regex Regex::literal(char symbol) {
  return Regex(std::make_shared<const Node>(Node{Kind::Literal, symbol, nullptr, nullptr}));
}

Regex Regex::concat(Regex lhs, Regex rhs) {
  return Regex(std::make_shared<const Node>(Node{Kind::Concat, 0, std::make_shared<const Regex>(std::move(lhs)),
                                                 std::make_shared<const Regex>(std::move(rhs))}));
}

Regex Regex::alternation(Regex lhs, Regex rhs) {
  return Regex(std::make_shared<const Node>(Node{Kind::Union, 0, std::make_shared<const Regex>(std::move(lhs)),
                                                 std::make_shared<const Regex>(std::move(rhs))}));
}

Regex Regex::star(Regex inner) {
  return Regex(
      std::make_shared<const Node>(Node{Kind::Star, 0, std::make_shared<const Regex>(std::move(inner)), nullptr}));
}

Regex Regex::plus(Regex inner) {
  return Regex(
      std::make_shared<const Node>(Node{Kind::Plus, 0, std::make_shared<const Regex>(std::move(inner)), nullptr}));
}

Regex Regex::optional(Regex inner) {
  return Regex(
      std::make_shared<const Node>(Node{Kind::Optional, 0, std::make_shared<const Regex>(std::move(inner)), nullptr}));
}

bool operator==(const Regex& a, const Regex& b) {
  if (a.node_ == b.node_) return true;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Regex::Kind::Epsilon:
      return true;
    case Regex::Kind::Literal:
      return a.symbol() == b.symbol();
    case Regex::Kind::Concat:
    case Regex::Kind::Union:
      return a.lhs() == b.lhs() && a.rhs() == b.rhs();
    default:
      return a.inner() == b.inner();
  }
}

namespace {

bool is_postfix(Regex::Kind k) {
  return k == Regex::Kind::Star || k == Regex::Kind::Plus || k == Regex::Kind::Optional;
}

std::string paren(const std::string& s) { return "(" + s + ")"; }

}  // namespace

std::string Regex::to_string() const {
  switch (kind()) {
    case Kind::Epsilon:
      return "()";
    case Kind::Literal:
      return std::string(1, symbol());
    case Kind::Concat: {
      // Left operand needs grouping if it is itself a chain; right only for unions.
      const auto l = lhs().to_string();
      const auto r = rhs().to_string();
      const bool wrap_l = lhs().kind() == Kind::Concat || lhs().kind() == Kind::Union;
      const bool wrap_r = rhs().kind() == Kind::Union;
      return (wrap_l ? paren(l) : l) + (wrap_r ? paren(r) : r);
    }
    case Kind::Union: {
      const auto l = lhs().to_string();
      return (lhs().kind() == Kind::Union ? paren(l) : l) + "|" + rhs().to_string();
    }
    default: {
      const char op = kind() == Kind::Star ? '*' : kind() == Kind::Plus ? '+' : '?';
      const auto k = inner().kind();
      const bool atomic = k == Kind::Literal || k == Kind::Epsilon || is_postfix(k);
      const auto s = inner().to_string();
      return (atomic ? s : paren(s)) + op;
    }
  }
}

std::string Regex::debug_string() const {
  switch (kind()) {
    case Kind::Epsilon:
      return "Eps";
    case Kind::Literal:
      return std::string("Lit ") + symbol();
    case Kind::Concat:
      return "Concat(" + lhs().debug_string() + ", " + rhs().debug_string() + ")";
    case Kind::Union:
      return "Union(" + lhs().debug_string() + ", " + rhs().debug_string() + ")";
    case Kind::Star:
      return "Star(" + inner().debug_string() + ")";
    case Kind::Plus:
      return "Plus(" + inner().debug_string() + ")";
    case Kind::Optional:
      return "Optional(" + inner().debug_string() + ")";
  }
  return {};
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const Alphabet& alphabet) : text_(text), alphabet_(alphabet) {}

  Regex parse() {
    Regex r = parse_union();
    if (pos_ != text_.size()) throw SyntaxError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return r;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  Regex parse_union() {
    Regex lhs = parse_concat();
    if (!at_end() && peek() == '|') {
      ++pos_;
      return Regex::alternation(std::move(lhs), parse_union());
    }
    return lhs;
  }

  Regex parse_concat() {
    if (at_end() || peek() == '|' || peek() == ')') return Regex::epsilon();
    Regex head = parse_postfix();
    if (at_end() || peek() == '|' || peek() == ')') return head;
    return Regex::concat(std::move(head), parse_concat());
  }

  Regex parse_postfix() {
    Regex r = parse_atom();
    while (!at_end()) {
      const char c = peek();
      if (c == '*')
        r = Regex::star(std::move(r));
      else if (c == '+')
        r = Regex::plus(std::move(r));
      else if (c == '?')
        r = Regex::optional(std::move(r));
      else
        break;
      ++pos_;
    }
    return r;
  }

  Regex parse_atom() {
    const char c = peek();
    if (c == '(') {
      const std::size_t open = pos_++;
      Regex inner = parse_union();
      if (at_end() || peek() != ')') throw SyntaxError("unbalanced '('", open);
      ++pos_;
      return inner;
    }
    if (c == '*' || c == '+' || c == '?') throw SyntaxError(std::string("dangling '") + c + "'", pos_);
    if (!alphabet_.contains(c)) {
      throw ConfigError(std::string("unknown literal '") + c + "' at position " + std::to_string(pos_));
    }
    ++pos_;
    return Regex::literal(c);
  }

  std::string_view text_;
  const Alphabet& alphabet_;
  std::size_t pos_ = 0;
};

}  // namespace

Regex parse_regex(std::string_view text, const Alphabet& alphabet) { return Parser(text, alphabet).parse(); }

}  // namespace dfx
