#include "dfx/transformer/transformer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "dfx/core/error.hpp"
#include "dfx/nn/rng.hpp"

namespace dfx {

void TransformerConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0)
    throw ConfigError("transformer sizes must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  if (max_len < 3) throw ConfigError("max_len must be >= 3");
  if (vocab_size != 0 && vocab_size < 3) throw ConfigError("vocab_size must cover [CLS], [SEP] and one symbol");
}

nlohmann::json to_json(const TransformerConfig& c) {
  return {{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},       {"max_len", c.max_len},   {"vocab_size", c.vocab_size}};
}

TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  return c;
}

std::size_t transformer_parameter_count(const TransformerConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  const std::size_t embed = c.vocab_size * d + c.max_len * d + 2 * d;
  const std::size_t block = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
  return embed + c.n_layers * block + 2 * d + 2;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", 1},
          {"seed", c.seed},
          {"adamw", nn::to_json(c.adamw)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("batch_size") && j.at("batch_size").get<int>() != 1)
    throw ConfigError("only batch_size 1 is supported");
  if (j.contains("adamw")) c.adamw = nn::adamw_config_from_json(j.at("adamw"));
  return c;
}

Classification classify_logits(double logit0, double logit1) {
  Classification c;
  c.logits = {logit0, logit1};
  const auto p = nn::softmax_values(c.logits);
  c.confidence = {p[0], p[1]};
  c.label = logit1 > logit0 ? 1 : 0;
  return c;
}

namespace {

std::string block_name(std::size_t l, const char* rest) { return "block" + std::to_string(l) + "." + rest; }

nn::Tensor normal_tensor(nn::Shape shape, nn::Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, 0.02);
  return t;
}

void insert_linear(nn::ParamStore& p, const std::string& name, std::size_t in, std::size_t out, nn::Rng& rng) {
  p.insert(name + ".weight", normal_tensor({in, out}, rng));
  p.insert(name + ".bias", nn::Tensor({out}));
}

void insert_norm(nn::ParamStore& p, const std::string& name, std::size_t d) {
  p.insert(name + ".gamma", nn::Tensor::filled({d}, 1.0));
  p.insert(name + ".beta", nn::Tensor({d}));
}

}  // namespace

TransformerModel build_transformer(TransformerConfig config, const Alphabet& alphabet, std::uint64_t seed) {
  const std::size_t vocab = alphabet.size() + kFirstSymbolToken;
  if (config.vocab_size == 0) config.vocab_size = vocab;
  config.validate();
  if (config.vocab_size != vocab)
    throw ConfigError("vocab_size " + std::to_string(config.vocab_size) + " does not match alphabet (expected " +
                      std::to_string(vocab) + ")");
  nn::Rng rng(seed);
  TransformerModel m{config, alphabet, {}, seed, nlohmann::json::object()};
  const std::size_t d = config.d_model;
  m.params.insert("embed.token", normal_tensor({config.vocab_size, d}, rng));
  m.params.insert("embed.position", normal_tensor({config.max_len, d}, rng));
  insert_norm(m.params, "embed.ln", d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"})
      insert_linear(m.params, block_name(l, proj), d, d, rng);
    insert_norm(m.params, block_name(l, "ln1"), d);
    insert_linear(m.params, block_name(l, "ffn.in"), d, config.d_ff, rng);
    insert_linear(m.params, block_name(l, "ffn.out"), config.d_ff, d, rng);
    insert_norm(m.params, block_name(l, "ln2"), d);
  }
  insert_linear(m.params, "classifier", d, 2, rng);
  return m;
}

void validate_frame(const TransformerConfig& config, std::span<const int> ids) {
  if (ids.size() < 2 || ids.front() != kClsToken || ids.back() != kSepToken)
    throw ConfigError("token ids must start with [CLS] and end with [SEP]");
  if (ids.size() > config.max_len)
    throw ConfigError("token sequence of length " + std::to_string(ids.size()) + " exceeds max_len " +
                      std::to_string(config.max_len));
  for (std::size_t i = 1; i + 1 < ids.size(); ++i)
    if (ids[i] < kFirstSymbolToken || static_cast<std::size_t>(ids[i]) >= config.vocab_size)
      throw ConfigError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                        " is not a symbol");
}

nn::Var transformer_rep(nn::Tape& tape, const TransformerConfig& config, const nn::ParamStore& params,
                        std::span<const int> ids, bool trainable) {
  validate_frame(config, ids);
  auto leaf = [&](const std::string& name) {
    return trainable ? tape.parameter(params, name) : tape.constant(params.at(name));
  };
  auto linear = [&](nn::Var x, const std::string& name) {
    return nn::linear(x, leaf(name + ".weight"), leaf(name + ".bias"));
  };
  auto norm = [&](nn::Var x, const std::string& name) {
    return nn::layer_norm(x, leaf(name + ".gamma"), leaf(name + ".beta"));
  };

  nn::Var x =
      nn::add(nn::embedding_lookup(leaf("embed.token"), ids), nn::slice(leaf("embed.position"), 0, 0, ids.size()));
  x = norm(x, "embed.ln");
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    // Only the [CLS] row of the final block feeds the classifier.
    const bool last = l + 1 == config.n_layers;
    const nn::Var query_rows = last ? nn::slice(x, 0, 0, 1) : x;
    const nn::Var attended =
        nn::multi_head_attention(linear(query_rows, block_name(l, "attn.q")), linear(x, block_name(l, "attn.k")),
                                 linear(x, block_name(l, "attn.v")), config.n_heads);
    const nn::Var h = norm(nn::add(query_rows, linear(attended, block_name(l, "attn.o"))), block_name(l, "ln1"));
    const nn::Var f = linear(nn::gelu(linear(h, block_name(l, "ffn.in"))), block_name(l, "ffn.out"));
    x = norm(nn::add(h, f), block_name(l, "ln2"));
  }
  return x;
}

nn::Var transformer_head(nn::Tape& tape, const nn::ParamStore& params, nn::Var rep, bool trainable) {
  auto leaf = [&](const std::string& name) {
    return trainable ? tape.parameter(params, name) : tape.constant(params.at(name));
  };
  return nn::linear(rep, leaf("classifier.weight"), leaf("classifier.bias"));
}

std::vector<double> rep(const TransformerModel& model, std::span<const int> ids) {
  nn::Tape tape;
  const auto r = transformer_rep(tape, model.config, model.params, ids, false);
  return {r.value().values().begin(), r.value().values().end()};
}

Classification classify(const TransformerModel& model, std::span<const int> ids) {
  nn::Tape tape;
  const auto logits =
      transformer_head(tape, model.params, transformer_rep(tape, model.config, model.params, ids, false), false);
  return classify_logits(logits.value()[0], logits.value()[1]);
}

Classification classify_word(const TransformerModel& model, std::string_view word) {
  return classify(model, encode_tokens(word, model.alphabet, model.config.max_len));
}

TrainReport train_transformer(TransformerModel& model, const SequenceDataset& dataset, const TrainConfig& tc,
                              const EpochCallback& on_epoch) {
  tc.validate();
  if (!(dataset.alphabet == model.alphabet))
    throw ConfigError("dataset alphabet '" + dataset.alphabet.symbols() + "' does not match model alphabet '" +
                      model.alphabet.symbols() + "'");
  const auto train = dataset.subset(Split::Train);
  if (train.empty()) throw ConfigError("train split is empty");
  std::vector<std::vector<int>> encoded;
  encoded.reserve(train.size());
  for (const auto& item : train) encoded.push_back(encode_tokens(item.tokens, model.alphabet, model.config.max_len));

  const auto start = std::chrono::steady_clock::now();
  nn::Rng rng = nn::Rng::stream(tc.seed, "transformer.shuffle");
  nn::AdamWState state;
  std::vector<std::size_t> order(train.size());
  TrainReport report;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const std::size_t i = order[step];
      try {
        nn::Tape tape;
        const auto r = transformer_rep(tape, model.config, model.params, encoded[i], true);
        const auto loss = nn::cross_entropy(transformer_head(tape, model.params, r, true), train[i].label);
        total += loss.value()[0];
        const auto grads = tape.backward(loss, model.params);
        nn::adamw_step(model.params, grads, state, tc.learning_rate, tc.adamw);
      } catch (const NumericError& e) {
        throw NumericError("transformer training diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + " on '" + train[i].tokens + "': " + e.what());
      }
      ++report.steps;
    }
    report.epoch_loss.push_back(total / static_cast<double>(order.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < train.size(); ++i) correct += classify(model, encoded[i]).label == train[i].label;
  report.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  model.training_meta = {{"train_config", to_json(tc)},
                         {"train_items", train.size()},
                         {"final_loss", report.epoch_loss.back()},
                         {"train_accuracy", report.train_accuracy},
                         {"steps", report.steps},
                         {"seconds", report.seconds}};
  return report;
}

nlohmann::json transformer_to_json(const TransformerModel& model) {
  return {{"model_kind", "transformer"},          {"config", to_json(model.config)},
          {"alphabet", model.alphabet.symbols()}, {"seed", model.seed},
          {"training_meta", model.training_meta}, {"params", nn::params_to_json(model.params)}};
}

TransformerModel transformer_from_json(const nlohmann::json& j) {
  try {
    if (j.at("model_kind").get<std::string>() != "transformer") throw FormatError("not a transformer model file");
    const Alphabet alphabet(j.at("alphabet").get<std::string>());
    TransformerModel m = build_transformer(transformer_config_from_json(j.at("config")), alphabet, 0);
    m.params = nn::params_from_json(j.at("params"), &m.params);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.training_meta = j.value("training_meta", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed transformer file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid transformer file: ") + e.what());
  }
}

void save_transformer(const TransformerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << transformer_to_json(model).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

TransformerModel load_transformer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return transformer_from_json(j);
}

}  // namespace dfx
