#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfx/core/alphabet.hpp"
#include "dfx/data/dataset.hpp"
#include "dfx/nn/adamw.hpp"
#include "dfx/nn/ops.hpp"

namespace dfx {

struct TransformerConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 64;
  // Token frame including [CLS] and [SEP].
  std::size_t max_len = 64;
  // 0 means |alphabet| + 2, filled in by build_transformer.
  std::size_t vocab_size = 0;

  void validate() const;

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

nlohmann::json to_json(const TransformerConfig& c);
TransformerConfig transformer_config_from_json(const nlohmann::json& j);

// Sum of all parameter shape products for a config with vocab_size set.
std::size_t transformer_parameter_count(const TransformerConfig& c);

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  nn::AdamWConfig adamw;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Classification {
  int label = 0;
  std::array<double, 2> confidence{};
  std::array<double, 2> logits{};
};

// Label by argmax with ties going to 0.
Classification classify_logits(double logit0, double logit1);

struct TransformerModel {
  TransformerConfig config;
  Alphabet alphabet;
  nn::ParamStore params;
  std::uint64_t seed = 0;
  nlohmann::json training_meta = nlohmann::json::object();
};

TransformerModel build_transformer(TransformerConfig config, const Alphabet& alphabet, std::uint64_t seed);

// Throws ConfigError unless ids are [CLS] symbols... [SEP] within the frame.
void validate_frame(const TransformerConfig& config, std::span<const int> ids);

// Forward pass on a tape. With `trainable`, parameters are gradient leaves;
// otherwise they are recorded as constants. Returns the [CLS] row [1×d].
nn::Var transformer_rep(nn::Tape& tape, const TransformerConfig& config, const nn::ParamStore& params,
                        std::span<const int> ids, bool trainable);
// classifier(rep) → [1×2].
nn::Var transformer_head(nn::Tape& tape, const nn::ParamStore& params, nn::Var rep, bool trainable);

std::vector<double> rep(const TransformerModel& model, std::span<const int> ids);
Classification classify(const TransformerModel& model, std::span<const int> ids);
// Encodes `word` with encode_tokens first.
Classification classify_word(const TransformerModel& model, std::string_view word);

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Batch size 1; each epoch visits the train split in a seed-shuffled order.
// Throws ConfigError on alphabet mismatch and NumericError (with the epoch,
// step and sequence) on a non-finite loss or gradient.
TrainReport train_transformer(TransformerModel& model, const SequenceDataset& dataset, const TrainConfig& tc,
                              const EpochCallback& on_epoch = {});

nlohmann::json transformer_to_json(const TransformerModel& model);
TransformerModel transformer_from_json(const nlohmann::json& j);
void save_transformer(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_transformer(const std::filesystem::path& path);

}  // namespace dfx
