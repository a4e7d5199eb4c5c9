#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dfx/core/dfa.hpp"
#include "dfx/core/error.hpp"
#include "dfx/data/dataset.hpp"
#include "dfx/dcsa/dcsa.hpp"
#include "dfx/lstar/extraction.hpp"
#include "dfx/transformer/transformer.hpp"

namespace dfx {

struct PipelineConfig {
  // Builtin grammar id or a regex over `alphabet`.
  std::string grammar = "tomita1";
  // Required for regexes; for builtins it must be empty or match.
  std::string alphabet;
  DatasetConfig dataset;
  // Widen the length window and shrink the dataset when the language or its
  // complement is too sparse for the requested size.
  bool fit_sparse_languages = true;
  TransformerConfig transformer;
  TrainConfig train;
  DcsaKind dcsa_kind = DcsaKind::Rnn;
  DistillConfig distill;
  ExtractionBudget extraction;
  // Stage seeds are master + 1 (data), + 2 (transformer), + 3 (DCSA), + 4
  // (extraction); seeds inside the sub-configs are overwritten.
  std::uint64_t master_seed = 0;
  double learnable_threshold = 0.9;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// The config with every stage seed derived from the master seed.
PipelineConfig with_stage_seeds(PipelineConfig c);

// Raised by run_pipeline; what() starts with the stage name.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Dataset config actually used for `dfa`: unchanged when feasible, otherwise
// max_len widened to `widest_len` and size capped at twice the rarer label's
// count. `note` receives a description of any change.
DatasetConfig fit_dataset_config(const Dfa& dfa, DatasetConfig requested, std::size_t widest_len, std::string* note);

struct SplitRates {
  std::size_t items = 0;
  double c_lt = 0.0;
  double c_td = 0.0;
  double c_ta = 0.0;
  double c_la = 0.0;
};

struct ConsistencyReport {
  std::string grammar;
  std::string alphabet;
  std::string dcsa_kind;
  SplitRates train;
  SplitRates test;
  // Mean ||Rep(x) - State(x)||_p over the test split.
  double diff1 = 0.0;
  double diff2 = 0.0;
  std::size_t extracted_states = 0;
  std::size_t minimal_states = 0;
  bool learnable = false;
  bool above_chance = false;
  bool coherent = false;
  std::size_t label_errors = 0;
  nlohmann::json dataset = nlohmann::json::object();
  nlohmann::json extraction_log = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();
};

nlohmann::json to_json(const ConsistencyReport& r);
// Without the timing fields, for reproducibility comparisons.
nlohmann::json report_fingerprint_json(const ConsistencyReport& r);
std::string format_report(const ConsistencyReport& r);

// Rates, Diff_p and structural checks for already-built models.
ConsistencyReport evaluate_models(const Dfa& truth, const SequenceDataset& dataset, const TransformerModel& transformer,
                                  const DcsaModel& dcsa, const Dfa& extracted, double learnable_threshold = 0.9);

struct PipelineResult {
  ConsistencyReport report;
  SequenceDataset dataset;
  TransformerModel transformer;
  DcsaModel dcsa;
  Dfa extracted;
};

using ProgressFn = std::function<void(std::string_view)>;

// Language, dataset, transformer training, distillation, extraction and
// evaluation. With a non-empty `out_dir` each artifact is written as soon as
// its stage finishes: dataset.jsonl, transformer.json, dcsa.json, dfa.json,
// dfa.dot, extraction_log.json, config.json and report.json.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir = {},
                            const ProgressFn& progress = {});

// The stages after transformer training, reusing a trained transformer and
// its dataset.
PipelineResult run_from_transformer(const PipelineConfig& config, SequenceDataset dataset, TransformerModel transformer,
                                    const std::filesystem::path& out_dir = {}, const ProgressFn& progress = {});

}  // namespace dfx
