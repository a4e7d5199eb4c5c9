#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dfx/core/dfa.hpp"
#include "dfx/nn/rng.hpp"

namespace dfx {

struct DatasetConfig {
  std::size_t size = 2000;
  std::size_t min_len = 1;
  std::size_t max_len = 24;
  double balance_tolerance = 0.02;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  // Throws ConfigError unless 1 <= min_len <= max_len, 0 < test_fraction < 1
  // and size >= 10.
  void validate() const;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

enum class Split { Train, Test };

std::string_view split_name(Split s);

struct LabeledSequence {
  Word tokens;
  int label = 0;
  Split split = Split::Train;

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct SequenceDataset {
  Alphabet alphabet;
  DatasetConfig config;
  // Grammar id or regex the labels came from; empty when unknown.
  std::string language;
  std::vector<LabeledSequence> items;

  std::vector<LabeledSequence> subset(Split s) const;
  std::size_t positives() const;

  friend bool operator==(const SequenceDataset&, const SequenceDataset&) = default;
};

// Exact sampler over words of a fixed length and label (1 = accepted).
class WordSampler {
 public:
  WordSampler(Dfa dfa, std::size_t max_len);

  std::uint64_t count(int label, std::size_t len) const { return at(label, len, dfa_.initial()); }
  // Uniform over the `count(label, len)` candidates; requires count > 0.
  Word sample(int label, std::size_t len, nn::Rng& rng) const;
  std::size_t max_len() const { return max_len_; }

 private:
  std::uint64_t at(int label, std::size_t len, StateId s) const { return counts_[label][len * dfa_.n_states() + s]; }

  Dfa dfa_;
  std::size_t max_len_;
  std::vector<std::uint64_t> counts_[2];
};

// Number of distinct words with lengths in [min_len, max_len] inside and
// outside the language. Throws ConfigError if the counts would overflow.
struct LanguageCensus {
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};
LanguageCensus census(const Dfa& dfa, std::size_t min_len, std::size_t max_len);

// Balanced, duplicate-free sample. Labels alternate 1/0; each word is drawn
// uniformly among the words of its (length, label) cell using exact
// completion counts. Throws ConfigError when the language or its complement
// is too sparse in the length window.
SequenceDataset generate_dataset(const Dfa& dfa, const DatasetConfig& config, std::string language = {});

// Vocabulary: 0 = [CLS], 1 = [SEP], 2.. = alphabet symbols in order.
inline constexpr int kClsToken = 0;
inline constexpr int kSepToken = 1;
inline constexpr int kFirstSymbolToken = 2;

// [CLS] ++ symbols ++ [SEP]. `max_tokens` bounds the framed length.
std::vector<int> encode_tokens(std::string_view seq, const Alphabet& alphabet, std::size_t max_tokens);
// Symbol ids without the frame (used by the recurrent side).
std::vector<int> encode_symbols(std::string_view seq, const Alphabet& alphabet);

// JSON-lines: a header object, then one {"tokens","label","split"} per line.
std::string dataset_to_jsonl(const SequenceDataset& ds);
SequenceDataset dataset_from_jsonl(std::string_view text);
void save_dataset(const SequenceDataset& ds, const std::filesystem::path& path);
SequenceDataset load_dataset(const std::filesystem::path& path);

}  // namespace dfx
