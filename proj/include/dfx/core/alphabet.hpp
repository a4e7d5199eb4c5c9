#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dfx {

// A word over an alphabet is stored as the string of its symbols.
using Word = std::string;

// Ordered set of single-character symbols. The order fixes column order in
// transition tables and token ids in the vocabulary.
class Alphabet {
 public:
  Alphabet() { lookup_.fill(-1); }
  explicit Alphabet(std::string_view symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  char symbol(std::size_t index) const { return symbols_.at(index); }
  const std::string& symbols() const noexcept { return symbols_; }

  std::optional<std::size_t> find(char c) const noexcept;
  // Throws ConfigError for symbols outside the alphabet.
  std::size_t index_of(char c) const;
  bool contains(char c) const noexcept { return find(c).has_value(); }
  // Throws ConfigError naming the first unknown symbol.
  void validate(std::string_view word) const;

  friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.symbols_ == b.symbols_; }

 private:
  std::string symbols_;
  std::array<int, 256> lookup_;
};

// All words of exactly `length` over the alphabet, in canonical (lexicographic by index) order.
std::vector<Word> words_of_length(const Alphabet& alphabet, std::size_t length);
// All words of length <= max_length in shortlex order.
std::vector<Word> words_up_to(const Alphabet& alphabet, std::size_t max_length);

}  // namespace dfx
