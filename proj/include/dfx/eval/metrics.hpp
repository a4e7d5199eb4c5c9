#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "dfx/core/dfa.hpp"
#include "dfx/data/dataset.hpp"
#include "dfx/dcsa/dcsa.hpp"
#include "dfx/transformer/transformer.hpp"

namespace dfx {

// Binary label of a word: ground truth, transformer, DCSA or extracted DFA.
using LabelFunction = std::function<int(std::string_view)>;

// The label functions keep a reference to their model.
LabelFunction label_function(const Dfa& dfa);
LabelFunction label_function(const TransformerModel& model);
LabelFunction label_function(const DcsaModel& model);

// Fraction of `words` on which a and b agree; throws ConfigError when empty.
double consistency(const LabelFunction& a, const LabelFunction& b, const std::vector<Word>& words);
double consistency(const LabelFunction& a, const LabelFunction& b, const std::vector<LabeledSequence>& items);

std::vector<Word> words_of(const std::vector<LabeledSequence>& items);

// Agreement sets satisfy |L=A| >= |L=T| + |T=A| - |X|, so on any one item set
// C(L,A) >= C(L,T) + C(T,A) - 1 up to rounding.
bool coherence_holds(double c_la, double c_lt, double c_ta);

}  // namespace dfx
