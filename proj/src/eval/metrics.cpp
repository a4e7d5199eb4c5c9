#include "dfx/eval/metrics.hpp"

#include "dfx/core/error.hpp"

namespace dfx {

LabelFunction label_function(const Dfa& dfa) {
  return [&dfa](std::string_view w) { return dfa.accepts(w) ? 1 : 0; };
}

LabelFunction label_function(const TransformerModel& model) {
  return [&model](std::string_view w) { return classify_word(model, w).label; };
}

LabelFunction label_function(const DcsaModel& model) {
  return [&model](std::string_view w) { return dcsa_classify_word(model, w).label; };
}

double consistency(const LabelFunction& a, const LabelFunction& b, const std::vector<Word>& words) {
  if (words.empty()) throw ConfigError("consistency needs a non-empty item set");
  std::size_t agree = 0;
  for (const auto& w : words) agree += a(w) == b(w);
  return static_cast<double>(agree) / static_cast<double>(words.size());
}

double consistency(const LabelFunction& a, const LabelFunction& b, const std::vector<LabeledSequence>& items) {
  return consistency(a, b, words_of(items));
}

std::vector<Word> words_of(const std::vector<LabeledSequence>& items) {
  std::vector<Word> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.tokens);
  return out;
}

bool coherence_holds(double c_la, double c_lt, double c_ta) { return c_la >= c_lt + c_ta - 1.0 - 1e-12; }

}  // namespace dfx
