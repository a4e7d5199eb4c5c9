#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "dfx/core/alphabet.hpp"

namespace dfx {

// Immutable regular-expression syntax tree. Concatenation and union chains
// associate to the right: "abc" is Concat(a, Concat(b, c)).
class Regex {
 public:
  enum class Kind { Epsilon, Literal, Concat, Union, Star, Plus, Optional };

  static Regex epsilon();
  static Regex literal(char symbol);
  static Regex concat(Regex lhs, Regex rhs);
  static Regex alternation(Regex lhs, Regex rhs);
  static Regex star(Regex inner);
  static Regex plus(Regex inner);
  static Regex optional(Regex inner);

  Kind kind() const noexcept { return node_->kind; }
  char symbol() const noexcept { return node_->symbol; }
  // Left operand for binary nodes, the operand for unary ones.
  const Regex& lhs() const { return *node_->lhs; }
  const Regex& rhs() const { return *node_->rhs; }
  const Regex& inner() const { return *node_->lhs; }

  // Minimal-parenthesis rendering; parse(to_string()) reproduces the tree.
  std::string to_string() const;
  // S-expression style dump, e.g. Star(Concat(Lit a, Lit a)).
  std::string debug_string() const;

  friend bool operator==(const Regex& a, const Regex& b);

 private:
  struct Node {
    Kind kind;
    char symbol = 0;
    std::shared_ptr<const Regex> lhs, rhs;
  };
  explicit Regex(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;
};

// Operators: ( ) * + ? | and juxtaposition. "()" or an empty pattern is ε.
// Throws SyntaxError with the offending position, or ConfigError for
// literals outside the alphabet.
Regex parse_regex(std::string_view text, const Alphabet& alphabet);

}  // namespace dfx
