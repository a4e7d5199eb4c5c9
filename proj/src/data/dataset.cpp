#include "dfx/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "dfx/core/error.hpp"
#include "dfx/nn/rng.hpp"

namespace dfx {

void DatasetConfig::validate() const {
  if (min_len < 1) throw ConfigError("dataset min_len must be >= 1");
  if (min_len > max_len) throw ConfigError("dataset min_len exceeds max_len");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (size < 10) throw ConfigError("dataset size must be >= 10");
  if (!(balance_tolerance >= 0.0)) throw ConfigError("balance_tolerance must be >= 0");
}

nlohmann::json to_json(const DatasetConfig& c) {
  return {{"size", c.size},
          {"min_len", c.min_len},
          {"max_len", c.max_len},
          {"balance_tolerance", c.balance_tolerance},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.size = j.value("size", c.size);
  c.min_len = j.value("min_len", c.min_len);
  c.max_len = j.value("max_len", c.max_len);
  c.balance_tolerance = j.value("balance_tolerance", c.balance_tolerance);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::vector<LabeledSequence> SequenceDataset::subset(Split s) const {
  std::vector<LabeledSequence> out;
  for (const auto& item : items)
    if (item.split == s) out.push_back(item);
  return out;
}

std::size_t SequenceDataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const auto& i) { return i.label == 1; }));
}

// counts_[label][len * n + state]: words of length `len` leading from `state`
// into an accepting (label 1) or rejecting (label 0) state.
WordSampler::WordSampler(Dfa dfa, std::size_t max_len) : dfa_(std::move(dfa)), max_len_(max_len) {
  const std::size_t n = dfa_.n_states();
  const std::size_t k = dfa_.alphabet().size();
  for (int label = 0; label < 2; ++label) {
    counts_[label].assign((max_len + 1) * n, 0);
    for (StateId s = 0; s < n; ++s) counts_[label][s] = dfa_.is_accepting(s) == (label == 1) ? 1 : 0;
    for (std::size_t len = 1; len <= max_len; ++len)
      for (StateId s = 0; s < n; ++s) {
        std::uint64_t total = 0;
        for (std::size_t a = 0; a < k; ++a) {
          const std::uint64_t c = at(label, len - 1, dfa_.next(s, a));
          if (total > std::numeric_limits<std::uint64_t>::max() - c)
            throw ConfigError("length window too large for exact counting");
          total += c;
        }
        counts_[label][len * n + s] = total;
      }
  }
}

Word WordSampler::sample(int label, std::size_t len, nn::Rng& rng) const {
  if (len > max_len_ || count(label, len) == 0) throw ConfigError("no word of that length and label");
  Word w;
  StateId s = dfa_.initial();
  for (std::size_t remaining = len; remaining > 0; --remaining) {
    std::uint64_t pick = rng.below(at(label, remaining, s));
    for (std::size_t a = 0; a < dfa_.alphabet().size(); ++a) {
      const StateId t = dfa_.next(s, a);
      const std::uint64_t c = at(label, remaining - 1, t);
      if (pick < c) {
        w.push_back(dfa_.alphabet().symbol(a));
        s = t;
        break;
      }
      pick -= c;
    }
  }
  return w;
}

namespace {

constexpr int kDuplicateRetries = 100;

}  // namespace

LanguageCensus census(const Dfa& dfa, std::size_t min_len, std::size_t max_len) {
  const WordSampler table(dfa, max_len);
  LanguageCensus c;
  for (std::size_t len = min_len; len <= max_len; ++len) {
    c.positives += table.count(1, len);
    c.negatives += table.count(0, len);
  }
  return c;
}

SequenceDataset generate_dataset(const Dfa& dfa, const DatasetConfig& config, std::string language) {
  config.validate();
  const std::size_t n_pos = (config.size + 1) / 2;
  const std::size_t n_neg = config.size / 2;
  const double imbalance = std::fabs(static_cast<double>(n_pos) / static_cast<double>(config.size) - 0.5);
  if (imbalance > config.balance_tolerance)
    throw ConfigError("size " + std::to_string(config.size) + " cannot meet balance tolerance");

  const WordSampler table(dfa, config.max_len);
  const std::size_t needed[2] = {n_neg, n_pos};
  for (int label = 0; label < 2; ++label) {
    std::uint64_t available = 0;
    for (std::size_t len = config.min_len; len <= config.max_len; ++len) available += table.count(label, len);
    if (available < needed[label])
      throw ConfigError("infeasible dataset: only " + std::to_string(available) + " distinct " +
                        (label ? "positive" : "negative") + " words with length in [" + std::to_string(config.min_len) +
                        ", " + std::to_string(config.max_len) + "], need " + std::to_string(needed[label]));
  }

  nn::Rng rng = nn::Rng::stream(config.seed, "dataset.sample");
  const std::size_t span = config.max_len - config.min_len + 1;
  std::vector<std::uint64_t> used[2] = {std::vector<std::uint64_t>(span, 0), std::vector<std::uint64_t>(span, 0)};
  std::unordered_set<Word> seen;

  SequenceDataset ds{dfa.alphabet(), config, std::move(language), {}};
  ds.items.reserve(config.size);
  for (std::size_t i = 0; i < config.size; ++i) {
    const int label = i % 2 == 0 ? 1 : 0;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < 100 * span && !placed; ++attempt) {
      const std::size_t offset = static_cast<std::size_t>(rng.below(span));
      const std::size_t len = config.min_len + offset;
      const std::uint64_t cell = table.count(label, len);
      if (cell == 0 || used[label][offset] >= cell) continue;
      for (int retry = 0; retry < kDuplicateRetries; ++retry) {
        Word w = table.sample(label, len, rng);
        if (seen.insert(w).second) {
          if (dfa.accepts(w) != (label == 1)) throw Error("sampler produced a mislabeled word");
          ++used[label][offset];
          ds.items.push_back({std::move(w), label, Split::Train});
          placed = true;
          break;
        }
      }
    }
    if (!placed)
      throw ConfigError(std::string("could not place a fresh ") + (label ? "positive" : "negative") +
                        " word for item " + std::to_string(i));
  }

  // Stratified split: each label contributes its share of test items.
  nn::Rng split_rng = nn::Rng::stream(config.seed, "dataset.split");
  for (int label = 1; label >= 0; --label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.items.size(); ++i)
      if (ds.items[i].label == label) idx.push_back(i);
    split_rng.shuffle(idx.begin(), idx.end());
    auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(idx.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_test; ++k) ds.items[idx[k]].split = Split::Test;
  }
  return ds;
}

std::vector<int> encode_symbols(std::string_view seq, const Alphabet& alphabet) {
  std::vector<int> ids;
  ids.reserve(seq.size());
  for (char c : seq) ids.push_back(kFirstSymbolToken + static_cast<int>(alphabet.index_of(c)));
  return ids;
}

std::vector<int> encode_tokens(std::string_view seq, const Alphabet& alphabet, std::size_t max_tokens) {
  if (seq.size() + 2 > max_tokens)
    throw ConfigError("sequence of length " + std::to_string(seq.size()) + " exceeds the " +
                      std::to_string(max_tokens) + "-token frame");
  std::vector<int> ids;
  ids.reserve(seq.size() + 2);
  ids.push_back(kClsToken);
  for (int id : encode_symbols(seq, alphabet)) ids.push_back(id);
  ids.push_back(kSepToken);
  return ids;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

std::string item_line(const LabeledSequence& item) {
  return nlohmann::json{{"tokens", item.tokens}, {"label", item.label}, {"split", split_name(item.split)}}.dump();
}

}  // namespace

std::string dataset_to_jsonl(const SequenceDataset& ds) {
  std::string body;
  std::uint64_t checksum = nn::fnv1a64("");
  for (const auto& item : ds.items) {
    const std::string line = item_line(item);
    checksum = nn::fnv1a64(line + "\n", checksum);
    body += line;
    body += '\n';
  }
  const nlohmann::json header = {{"version", 1},
                                 {"alphabet", ds.alphabet.symbols()},
                                 {"seed", ds.config.seed},
                                 {"config", to_json(ds.config)},
                                 {"language", ds.language},
                                 {"count", ds.items.size()},
                                 {"checksum", hex64(checksum)}};
  return header.dump() + "\n" + body;
}

SequenceDataset dataset_from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset file is empty");
  SequenceDataset ds;
  std::size_t expected_count = 0;
  std::string expected_checksum;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("version").get<int>() != 1) throw FormatError("unsupported dataset version");
    ds.alphabet = Alphabet(header.at("alphabet").get<std::string>());
    ds.config = dataset_config_from_json(header.at("config"));
    ds.config.seed = header.at("seed").get<std::uint64_t>();
    ds.language = header.value("language", std::string{});
    expected_count = header.at("count").get<std::size_t>();
    expected_checksum = header.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid dataset header: ") + e.what());
  }

  std::uint64_t checksum = nn::fnv1a64("");
  std::unordered_set<Word> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LabeledSequence item;
    try {
      const auto j = nlohmann::json::parse(line);
      item.tokens = j.at("tokens").get<std::string>();
      item.label = j.at("label").get<int>();
      const auto split = j.at("split").get<std::string>();
      if (split == "train")
        item.split = Split::Train;
      else if (split == "test")
        item.split = Split::Test;
      else
        throw FormatError("line " + std::to_string(line_no) + ": unknown split '" + split + "'");
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (item.label != 0 && item.label != 1)
      throw FormatError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    try {
      ds.alphabet.validate(item.tokens);
    } catch (const ConfigError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(item.tokens).second) throw FormatError("line " + std::to_string(line_no) + ": duplicate sequence");
    checksum = nn::fnv1a64(item_line(item) + "\n", checksum);
    ds.items.push_back(std::move(item));
  }
  if (ds.items.size() != expected_count)
    throw FormatError("dataset truncated: header promises " + std::to_string(expected_count) + " items, found " +
                      std::to_string(ds.items.size()));
  if (hex64(checksum) != expected_checksum) throw FormatError("dataset checksum mismatch");
  return ds;
}

void save_dataset(const SequenceDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << dataset_to_jsonl(ds);
  if (!out) throw Error("failed writing " + path.string());
}

SequenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_jsonl(buf.str());
}

}  // namespace dfx
