#include "dfx/dcsa/dcsa.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include <Eigen/Core>

#include "dfx/core/error.hpp"
#include "dfx/nn/rng.hpp"

namespace dfx {

std::string_view dcsa_kind_name(DcsaKind kind) {
  switch (kind) {
    case DcsaKind::Rnn:
      return "rnn";
    case DcsaKind::Gru:
      return "gru";
    case DcsaKind::Lstm:
      return "lstm";
  }
  return "rnn";
}

DcsaKind parse_dcsa_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "rnn") return DcsaKind::Rnn;
  if (lower == "gru") return DcsaKind::Gru;
  if (lower == "lstm") return DcsaKind::Lstm;
  throw ConfigError("unknown DCSA kind '" + std::string(name) + "' (expected rnn, gru or lstm)");
}

namespace {

std::size_t gate_count(DcsaKind kind) {
  switch (kind) {
    case DcsaKind::Rnn:
      return 1;
    case DcsaKind::Gru:
      return 3;
    case DcsaKind::Lstm:
      return 4;
  }
  return 1;
}

std::size_t recurrent_gates(DcsaKind kind) { return kind == DcsaKind::Gru ? 2 : gate_count(kind); }

std::vector<std::pair<std::string, nn::Shape>> parameter_shapes(DcsaKind kind, std::size_t h, std::size_t vocab) {
  const std::size_t g = gate_count(kind);
  std::vector<std::pair<std::string, nn::Shape>> shapes = {
      {"embed.token", {vocab, h}}, {"init_state", {1, h}},
      {"cell.wx", {h, g * h}},     {"cell.wh", {h, recurrent_gates(kind) * h}},
      {"cell.b", {g * h}},         {"classifier.weight", {h, 2}},
      {"classifier.bias", {2}}};
  if (kind == DcsaKind::Gru) shapes.emplace_back("cell.un", nn::Shape{h, h});
  return shapes;
}

nn::Tensor uniform_tensor(nn::Shape shape, double bound, nn::Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

DcsaModel build_dcsa(DcsaKind kind, const TransformerModel& source, std::uint64_t seed) {
  const std::size_t h = source.config.d_model;
  DcsaModel m;
  m.kind = kind;
  m.alphabet = source.alphabet;
  m.state_dim = h;
  m.vocab_size = source.config.vocab_size;
  m.source_transformer_hash = source.params.fingerprint();
  nn::Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  const std::size_t g = gate_count(kind);
  m.params.insert("embed.token", source.params.at("embed.token"));
  m.params.insert("init_state", nn::Tensor({1, h}));
  m.params.insert("cell.wx", uniform_tensor({h, g * h}, bound, rng));
  m.params.insert("cell.wh", uniform_tensor({h, recurrent_gates(kind) * h}, bound, rng));
  m.params.insert("cell.b", uniform_tensor({g * h}, bound, rng));
  if (kind == DcsaKind::Gru) m.params.insert("cell.un", uniform_tensor({h, h}, bound, rng));
  m.params.insert("classifier.weight", source.params.at("classifier.weight"));
  m.params.insert("classifier.bias", source.params.at("classifier.bias"));
  return m;
}

namespace {

using RowVector = Eigen::RowVectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap param_matrix(const DcsaModel& m, const char* name) {
  const nn::Tensor& t = m.params.at(name);
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Eigen::Map<const RowVector> param_row(const DcsaModel& m, const char* name) {
  const nn::Tensor& t = m.params.at(name);
  return Eigen::Map<const RowVector>(t.data(), static_cast<Eigen::Index>(t.size()));
}

void check_symbol(const DcsaModel& m, int token) {
  if (token < kFirstSymbolToken || static_cast<std::size_t>(token) >= m.vocab_size)
    throw ConfigError("DCSA input " + std::to_string(token) + " is not an alphabet symbol");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Dot products are written as explicit loops so results do not depend on
// buffer alignment.
void affine_row(const double* x, const ConstMatrixMap& w, double* out) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    double acc = out[j];
    for (Eigen::Index i = 0; i < w.rows(); ++i) acc += x[i] * w(i, j);
    out[j] = acc;
  }
}

}  // namespace

DcsaState dcsa_initial(const DcsaModel& model) {
  const auto& s0 = model.params.at("init_state");
  DcsaState s{{s0.values().begin(), s0.values().end()}, {}};
  if (model.kind == DcsaKind::Lstm) s.c.assign(model.state_dim, 0.0);
  return s;
}

DcsaState dcsa_step(const DcsaModel& model, const DcsaState& state, int token) {
  check_symbol(model, token);
  const std::size_t h = model.state_dim;
  if (state.h.size() != h || (model.kind == DcsaKind::Lstm && state.c.size() != h))
    throw ConfigError("DCSA state has the wrong dimension");
  const std::size_t g = gate_count(model.kind);
  const auto embed = param_matrix(model, "embed.token");
  const auto bias = param_row(model, "cell.b");
  std::vector<double> pre(bias.data(), bias.data() + g * h);
  affine_row(embed.row(token).data(), param_matrix(model, "cell.wx"), pre.data());
  std::vector<double> rec(recurrent_gates(model.kind) * h, 0.0);
  affine_row(state.h.data(), param_matrix(model, "cell.wh"), rec.data());

  DcsaState next;
  next.h.resize(h);
  switch (model.kind) {
    case DcsaKind::Rnn:
      for (std::size_t j = 0; j < h; ++j) next.h[j] = std::tanh(pre[j] + rec[j]);
      break;
    case DcsaKind::Gru: {
      std::vector<double> z(h), rh(h), cand(h);
      for (std::size_t j = 0; j < h; ++j) {
        z[j] = sigmoid(pre[j] + rec[j]);
        rh[j] = sigmoid(pre[h + j] + rec[h + j]) * state.h[j];
      }
      for (std::size_t j = 0; j < h; ++j) cand[j] = pre[2 * h + j];
      affine_row(rh.data(), param_matrix(model, "cell.un"), cand.data());
      for (std::size_t j = 0; j < h; ++j) next.h[j] = state.h[j] + z[j] * (std::tanh(cand[j]) - state.h[j]);
      break;
    }
    case DcsaKind::Lstm:
      next.c.resize(h);
      for (std::size_t j = 0; j < h; ++j) {
        const double i = sigmoid(pre[j] + rec[j]);
        const double f = sigmoid(pre[h + j] + rec[h + j]);
        const double cg = std::tanh(pre[2 * h + j] + rec[2 * h + j]);
        const double o = sigmoid(pre[3 * h + j] + rec[3 * h + j]);
        next.c[j] = f * state.c[j] + i * cg;
        next.h[j] = o * std::tanh(next.c[j]);
      }
      break;
  }
  for (double v : next.h)
    if (!std::isfinite(v)) throw NumericError("DCSA step produced a non-finite state");
  return next;
}

DcsaState dcsa_run(const DcsaModel& model, std::span<const int> symbols) {
  DcsaState s = dcsa_initial(model);
  for (int t : symbols) s = dcsa_step(model, s, t);
  return s;
}

DcsaState dcsa_run_word(const DcsaModel& model, std::string_view word) {
  return dcsa_run(model, encode_symbols(word, model.alphabet));
}

Classification dcsa_classify_state(const DcsaModel& model, const DcsaState& state) {
  const auto w = param_matrix(model, "classifier.weight");
  const auto b = param_row(model, "classifier.bias");
  if (state.h.size() != static_cast<std::size_t>(w.rows())) throw ConfigError("DCSA state has the wrong dimension");
  double logits[2] = {b[0], b[1]};
  affine_row(state.h.data(), w, logits);
  return classify_logits(logits[0], logits[1]);
}

Classification dcsa_classify(const DcsaModel& model, std::span<const int> symbols) {
  return dcsa_classify_state(model, dcsa_run(model, symbols));
}

Classification dcsa_classify_word(const DcsaModel& model, std::string_view word) {
  return dcsa_classify_state(model, dcsa_run_word(model, word));
}

nn::Var dcsa_state_on_tape(nn::Tape& tape, const DcsaModel& model, const nn::ParamStore& params,
                           std::span<const int> symbols, bool trainable) {
  for (int t : symbols) check_symbol(model, t);
  auto leaf = [&](const char* name) {
    return trainable ? tape.parameter(params, name) : tape.constant(params.at(name));
  };
  const std::size_t h = model.state_dim;
  nn::Var state = leaf("init_state");
  if (symbols.empty()) return state;

  const nn::Var inputs =
      nn::linear(nn::embedding_lookup(leaf("embed.token"), symbols), leaf("cell.wx"), leaf("cell.b"));
  const nn::Var wh = leaf("cell.wh");
  const nn::Var un = model.kind == DcsaKind::Gru ? leaf("cell.un") : nn::Var{};
  nn::Var memory = model.kind == DcsaKind::Lstm ? tape.constant(nn::Tensor({1, h})) : nn::Var{};
  for (std::size_t t = 0; t < symbols.size(); ++t) {
    const nn::Var x = nn::slice(inputs, 0, t, t + 1);
    switch (model.kind) {
      case DcsaKind::Rnn:
        state = nn::tanh(nn::add(x, nn::matmul(state, wh)));
        break;
      case DcsaKind::Gru: {
        const nn::Var zr = nn::sigmoid(nn::add(nn::slice(x, 1, 0, 2 * h), nn::matmul(state, wh)));
        const nn::Var z = nn::slice(zr, 1, 0, h);
        const nn::Var r = nn::slice(zr, 1, h, 2 * h);
        const nn::Var cand = nn::tanh(nn::add(nn::slice(x, 1, 2 * h, 3 * h), nn::matmul(nn::multiply(r, state), un)));
        state = nn::add(state, nn::multiply(z, nn::sub(cand, state)));
        break;
      }
      case DcsaKind::Lstm: {
        const nn::Var pre = nn::add(x, nn::matmul(state, wh));
        const nn::Var i = nn::sigmoid(nn::slice(pre, 1, 0, h));
        const nn::Var f = nn::sigmoid(nn::slice(pre, 1, h, 2 * h));
        const nn::Var g = nn::tanh(nn::slice(pre, 1, 2 * h, 3 * h));
        const nn::Var o = nn::sigmoid(nn::slice(pre, 1, 3 * h, 4 * h));
        memory = nn::add(nn::multiply(f, memory), nn::multiply(i, g));
        state = nn::multiply(o, nn::tanh(memory));
        break;
      }
    }
  }
  return state;
}

std::string_view alternation_name(Alternation a) { return a == Alternation::PerExample ? "per_example" : "per_epoch"; }

Alternation parse_alternation(std::string_view name) {
  if (name == "per_example") return Alternation::PerExample;
  if (name == "per_epoch") return Alternation::PerEpoch;
  throw ConfigError("unknown alternation '" + std::string(name) + "' (expected per_example or per_epoch)");
}

void DistillConfig::validate() const {
  if (epochs < 1) throw ConfigError("distill epochs must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"alternation", alternation_name(c.alternation)},
          {"shared_moments", c.shared_moments},
          {"adamw", nn::to_json(c.adamw)}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j) {
  DistillConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  if (j.contains("alternation")) c.alternation = parse_alternation(j.at("alternation").get<std::string>());
  c.shared_moments = j.value("shared_moments", c.shared_moments);
  if (j.contains("adamw")) c.adamw = nn::adamw_config_from_json(j.at("adamw"));
  return c;
}

TeacherTargets teacher_targets(const TransformerModel& teacher, const std::vector<LabeledSequence>& items) {
  TeacherTargets t;
  for (const auto& item : items) {
    const auto ids = encode_tokens(item.tokens, teacher.alphabet, teacher.config.max_len);
    nn::Tape tape;
    const nn::Var r = transformer_rep(tape, teacher.config, teacher.params, ids, false);
    const nn::Var logits = transformer_head(tape, teacher.params, r, false);
    t.words.push_back(item.tokens);
    t.symbols.push_back(encode_symbols(item.tokens, teacher.alphabet));
    t.labels.push_back(classify_logits(logits.value()[0], logits.value()[1]).label);
    t.reps.emplace_back(r.value().values().begin(), r.value().values().end());
  }
  return t;
}

namespace {

constexpr const char* kFrozen[] = {"classifier.weight", "classifier.bias"};

void drop_frozen(nn::ParamStore& grads) {
  for (const char* name : kFrozen) grads.erase(name);
}

}  // namespace

DistillReport distill(DcsaModel& dcsa, const TeacherTargets& targets, const DistillConfig& config,
                      const DistillCallback& on_epoch) {
  config.validate();
  if (targets.size() == 0) throw ConfigError("no distillation targets");
  for (const auto& r : targets.reps)
    if (r.size() != dcsa.state_dim)
      throw ConfigError("representation width " + std::to_string(r.size()) + " does not match DCSA state dimension " +
                        std::to_string(dcsa.state_dim));

  const auto start = std::chrono::steady_clock::now();
  const bool align = config.alpha > 0.0;
  std::vector<nn::Tensor> rep_tensors;
  for (const auto& r : targets.reps) rep_tensors.push_back(nn::Tensor({1, r.size()}, r));

  nn::Rng rng = nn::Rng::stream(config.seed, "dcsa.shuffle");
  nn::AdamWState label_state, rep_own_state;
  nn::AdamWState& rep_state = config.shared_moments ? label_state : rep_own_state;
  std::vector<std::size_t> order(targets.size());
  DistillReport report;

  auto guarded = [&](const char* what, std::size_t epoch, std::size_t i, auto&& body) {
    try {
      return body();
    } catch (const NumericError& e) {
      throw NumericError(std::string("distillation ") + what + " update diverged at epoch " + std::to_string(epoch) +
                         " on '" + targets.words[i] + "': " + e.what());
    }
  };
  auto label_update = [&](std::size_t epoch, std::size_t i) {
    return guarded("L_D", epoch, i, [&] {
      nn::Tape tape;
      const nn::Var s = dcsa_state_on_tape(tape, dcsa, dcsa.params, targets.symbols[i], true);
      const nn::Var logits = nn::linear(s, tape.constant(dcsa.params.at("classifier.weight")),
                                        tape.constant(dcsa.params.at("classifier.bias")));
      const nn::Var loss = nn::cross_entropy(logits, targets.labels[i]);
      auto grads = tape.backward(loss, dcsa.params);
      drop_frozen(grads);
      nn::adamw_step(dcsa.params, grads, label_state, config.learning_rate, config.adamw);
      ++report.updates;
      return loss.value()[0];
    });
  };
  auto rep_update = [&](std::size_t epoch, std::size_t i) {
    return guarded("L_Rep", epoch, i, [&] {
      nn::Tape tape;
      const nn::Var s = dcsa_state_on_tape(tape, dcsa, dcsa.params, targets.symbols[i], true);
      const nn::Var distance = nn::sum(nn::abs(nn::sub(s, tape.constant(rep_tensors[i]))));
      auto grads = tape.backward(nn::scale(distance, config.alpha), dcsa.params);
      drop_frozen(grads);
      nn::adamw_step(dcsa.params, grads, rep_state, config.learning_rate, config.adamw);
      ++report.updates;
      return distance.value()[0];
    });
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    double label_total = 0.0, rep_total = 0.0;
    if (config.alternation == Alternation::PerExample) {
      for (std::size_t i : order) {
        label_total += label_update(epoch, i);
        if (align) rep_total += rep_update(epoch, i);
      }
    } else {
      for (std::size_t i : order) label_total += label_update(epoch, i);
      if (align)
        for (std::size_t i : order) rep_total += rep_update(epoch, i);
    }
    const double n = static_cast<double>(order.size());
    report.label_loss.push_back(label_total / n);
    if (align) report.rep_loss.push_back(rep_total / n);
    if (on_epoch) on_epoch(epoch, label_total / n, align ? rep_total / n : 0.0);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  dcsa.distill_meta = {{"distill_config", to_json(config)},
                       {"targets", targets.size()},
                       {"final_label_loss", report.label_loss.back()},
                       {"final_rep_loss", report.rep_loss.empty() ? 0.0 : report.rep_loss.back()},
                       {"updates", report.updates},
                       {"seconds", report.seconds}};
  return report;
}

DistillReport distill(DcsaModel& dcsa, const TransformerModel& teacher, const SequenceDataset& dataset,
                      const DistillConfig& config, const DistillCallback& on_epoch) {
  if (!(dataset.alphabet == teacher.alphabet) || !(dcsa.alphabet == teacher.alphabet))
    throw ConfigError("DCSA, transformer and dataset alphabets differ");
  if (dcsa.state_dim != teacher.config.d_model) throw ConfigError("DCSA state dimension differs from d_model");
  return distill(dcsa, teacher_targets(teacher, dataset.subset(Split::Train)), config, on_epoch);
}

double rep_state_diff(const DcsaModel& dcsa, const TeacherTargets& targets, int p) {
  if (p != 1 && p != 2) throw ConfigError("Diff_p is defined for p = 1 or 2");
  if (targets.size() == 0) throw ConfigError("no targets to compare");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto s = dcsa_run(dcsa, targets.symbols[i]);
    if (s.h.size() != targets.reps[i].size()) throw ConfigError("representation and state dimensions differ");
    double acc = 0.0;
    for (std::size_t k = 0; k < s.h.size(); ++k) {
      const double d = std::fabs(targets.reps[i][k] - s.h[k]);
      acc += p == 1 ? d : d * d;
    }
    total += p == 1 ? acc : std::sqrt(acc);
  }
  return total / static_cast<double>(targets.size());
}

double rep_state_diff(const TransformerModel& teacher, const DcsaModel& dcsa, const std::vector<LabeledSequence>& items,
                      int p) {
  if (dcsa.state_dim != teacher.config.d_model) throw ConfigError("representation and state dimensions differ");
  return rep_state_diff(dcsa, teacher_targets(teacher, items), p);
}

nlohmann::json dcsa_to_json(const DcsaModel& model) {
  return {{"model_kind", "dcsa"},
          {"cell_kind", dcsa_kind_name(model.kind)},
          {"alphabet", model.alphabet.symbols()},
          {"state_dim", model.state_dim},
          {"vocab_size", model.vocab_size},
          {"source_transformer_hash", model.source_transformer_hash},
          {"distill_config", model.distill_meta.value("distill_config", nlohmann::json::object())},
          {"distill_meta", model.distill_meta},
          {"params", nn::params_to_json(model.params)}};
}

DcsaModel dcsa_from_json(const nlohmann::json& j) {
  try {
    if (j.at("model_kind").get<std::string>() != "dcsa") throw FormatError("not a DCSA model file");
    DcsaModel m;
    m.kind = parse_dcsa_kind(j.at("cell_kind").get<std::string>());
    m.alphabet = Alphabet(j.at("alphabet").get<std::string>());
    m.state_dim = j.at("state_dim").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (m.vocab_size != m.alphabet.size() + kFirstSymbolToken) throw FormatError("vocab_size does not match alphabet");
    m.source_transformer_hash = j.at("source_transformer_hash").get<std::uint64_t>();
    m.distill_meta = j.value("distill_meta", nlohmann::json::object());
    m.params = nn::params_from_json(j.at("params"));
    const auto expected = parameter_shapes(m.kind, m.state_dim, m.vocab_size);
    if (m.params.size() != expected.size()) throw FormatError("DCSA parameter set does not match its kind");
    for (const auto& [name, shape] : expected)
      if (!m.params.contains(name) || m.params.at(name).shape() != shape)
        throw FormatError("DCSA parameter '" + name + "' is missing or has the wrong shape");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed DCSA file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid DCSA file: ") + e.what());
  }
}

void save_dcsa(const DcsaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << dcsa_to_json(model).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

DcsaModel load_dcsa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return dcsa_from_json(j);
}

}  // namespace dfx
