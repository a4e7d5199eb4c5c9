#include "dfx/core/alphabet.hpp"

#include <cctype>

#include "dfx/core/error.hpp"

namespace dfx {

namespace {

bool is_reserved(char c) {
  switch (c) {
    case '(':
    case ')':
    case '*':
    case '+':
    case '?':
    case '|':
    case '[':
    case ']':
      return true;
    default:
      return std::isspace(static_cast<unsigned char>(c)) != 0 || !std::isprint(static_cast<unsigned char>(c));
  }
}

}  // namespace

Alphabet::Alphabet(std::string_view symbols) : symbols_(symbols) {
  lookup_.fill(-1);
  if (symbols_.empty()) throw ConfigError("alphabet must not be empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const char c = symbols_[i];
    if (is_reserved(c)) throw ConfigError(std::string("reserved character in alphabet: '") + c + "'");
    auto& slot = lookup_[static_cast<unsigned char>(c)];
    if (slot >= 0) throw ConfigError(std::string("duplicate alphabet symbol '") + c + "'");
    slot = static_cast<int>(i);
  }
}

std::optional<std::size_t> Alphabet::find(char c) const noexcept {
  const int slot = lookup_[static_cast<unsigned char>(c)];
  if (slot < 0) return std::nullopt;
  return static_cast<std::size_t>(slot);
}

std::size_t Alphabet::index_of(char c) const {
  if (auto i = find(c)) return *i;
  throw ConfigError(std::string("unknown symbol '") + c + "' for alphabet {" + symbols_ + "}");
}

void Alphabet::validate(std::string_view word) const {
  for (char c : word) index_of(c);
}

std::vector<Word> words_of_length(const Alphabet& alphabet, std::size_t length) {
  std::vector<Word> out{Word{}};
  for (std::size_t k = 0; k < length; ++k) {
    std::vector<Word> next;
    next.reserve(out.size() * alphabet.size());
    for (const auto& w : out)
      for (char c : alphabet.symbols()) next.push_back(w + c);
    out = std::move(next);
  }
  return out;
}

std::vector<Word> words_up_to(const Alphabet& alphabet, std::size_t max_length) {
  std::vector<Word> out;
  for (std::size_t n = 0; n <= max_length; ++n) {
    auto layer = words_of_length(alphabet, n);
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

}  // namespace dfx
