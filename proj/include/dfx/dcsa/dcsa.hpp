#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfx/transformer/transformer.hpp"

namespace dfx {

enum class DcsaKind { Rnn, Gru, Lstm };

std::string_view dcsa_kind_name(DcsaKind kind);
// Accepts "rnn", "gru", "lstm" (case-insensitive).
DcsaKind parse_dcsa_kind(std::string_view name);

// Deterministic continuous-state automaton: a single recurrent cell over
// R^state_dim with a trainable initial state and the source transformer's
// classifier, which is never updated.
//
// Parameters: embed.token [vocab×E] (copied from the transformer),
// init_state [1×H], cell.wx [E×gH], cell.wh [H×g'H], cell.b [gH], and for GRU
// cell.un [H×H]; classifier.weight [H×2], classifier.bias [2]. g is 1 (RNN),
// 3 (GRU: z, r, n) or 4 (LSTM: i, f, g, o); the GRU recurrent matrix covers
// only z and r, the candidate uses (r⊙h)·un.
struct DcsaModel {
  DcsaKind kind = DcsaKind::Rnn;
  Alphabet alphabet;
  std::size_t state_dim = 0;
  std::size_t vocab_size = 0;
  nn::ParamStore params;
  std::uint64_t source_transformer_hash = 0;
  nlohmann::json distill_meta = nlohmann::json::object();
};

// Copies the token embedding and classifier from `source`; cell weights are
// uniform in ±1/sqrt(H); the initial state is zero.
DcsaModel build_dcsa(DcsaKind kind, const TransformerModel& source, std::uint64_t seed);

// h is the exposed state; c carries LSTM cell memory and is empty otherwise.
struct DcsaState {
  std::vector<double> h;
  std::vector<double> c;

  friend bool operator==(const DcsaState&, const DcsaState&) = default;
};

DcsaState dcsa_initial(const DcsaModel& model);
// `token` is a symbol id (>= 2). Throws ConfigError for specials or unknown
// ids and NumericError for a non-finite state.
DcsaState dcsa_step(const DcsaModel& model, const DcsaState& state, int token);
DcsaState dcsa_run(const DcsaModel& model, std::span<const int> symbols);
DcsaState dcsa_run_word(const DcsaModel& model, std::string_view word);
Classification dcsa_classify_state(const DcsaModel& model, const DcsaState& state);
Classification dcsa_classify(const DcsaModel& model, std::span<const int> symbols);
Classification dcsa_classify_word(const DcsaModel& model, std::string_view word);

// Differentiable run; returns h as [1×H]. With `trainable` false every
// parameter is a constant.
nn::Var dcsa_state_on_tape(nn::Tape& tape, const DcsaModel& model, const nn::ParamStore& params,
                           std::span<const int> symbols, bool trainable);

enum class Alternation { PerExample, PerEpoch };

std::string_view alternation_name(Alternation a);
Alternation parse_alternation(std::string_view name);

struct DistillConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  Alternation alternation = Alternation::PerExample;
  // One AdamW moment state for both updates, or a separate one per loss.
  bool shared_moments = true;
  nn::AdamWConfig adamw;

  void validate() const;
};

nlohmann::json to_json(const DistillConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j);

// Per-sequence distillation targets: the teacher's label and its [CLS]
// representation.
struct TeacherTargets {
  std::vector<Word> words;
  std::vector<std::vector<int>> symbols;
  std::vector<int> labels;
  std::vector<std::vector<double>> reps;

  std::size_t size() const { return words.size(); }
};

TeacherTargets teacher_targets(const TransformerModel& teacher, const std::vector<LabeledSequence>& items);

struct DistillReport {
  std::vector<double> label_loss;
  // Mean unscaled L1 distance per epoch; empty when alpha is 0.
  std::vector<double> rep_loss;
  std::size_t updates = 0;
  double seconds = 0.0;
};

using DistillCallback = std::function<void(std::size_t epoch, double label_loss, double rep_loss)>;

// Each epoch visits the targets in a seed-shuffled order. L_D is the cross
// entropy against the teacher label, L_Rep is alpha·||Rep − State||_1; the two
// are minimized by separate AdamW updates sharing one optimizer state. With
// alpha = 0 the L_Rep update is skipped. Classifier parameters never change.
DistillReport distill(DcsaModel& dcsa, const TeacherTargets& targets, const DistillConfig& config,
                      const DistillCallback& on_epoch = {});
// Convenience: targets from the dataset's train split.
DistillReport distill(DcsaModel& dcsa, const TransformerModel& teacher, const SequenceDataset& dataset,
                      const DistillConfig& config, const DistillCallback& on_epoch = {});

// Mean over targets of ||Rep(x) − State(x)||_p for p in {1, 2}.
double rep_state_diff(const DcsaModel& dcsa, const TeacherTargets& targets, int p);
double rep_state_diff(const TransformerModel& teacher, const DcsaModel& dcsa, const std::vector<LabeledSequence>& items,
                      int p);

nlohmann::json dcsa_to_json(const DcsaModel& model);
DcsaModel dcsa_from_json(const nlohmann::json& j);
void save_dcsa(const DcsaModel& model, const std::filesystem::path& path);
DcsaModel load_dcsa(const std::filesystem::path& path);

}  // namespace dfx
