#include "dfx/eval/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dfx/core/error.hpp"
#include "dfx/core/languages.hpp"
#include "dfx/eval/metrics.hpp"

namespace dfx {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

template <class F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (grammar.empty()) throw ConfigError("pipeline needs a grammar or regex");
  dataset.validate();
  transformer.validate();
  train.validate();
  distill.validate();
  extraction.validate();
  if (!(learnable_threshold > 0.0 && learnable_threshold < 1.0))
    throw ConfigError("learnable_threshold must lie in (0, 1)");
  if (transformer.max_len < 3) throw ConfigError("transformer frame too short");
  if (!fit_sparse_languages && dataset.max_len + 2 > transformer.max_len)
    throw ConfigError("dataset max_len " + std::to_string(dataset.max_len) + " does not fit the transformer frame of " +
                      std::to_string(transformer.max_len) + " tokens");
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"grammar", c.grammar},
          {"alphabet", c.alphabet},
          {"dataset", to_json(c.dataset)},
          {"fit_sparse_languages", c.fit_sparse_languages},
          {"transformer", to_json(c.transformer)},
          {"train", to_json(c.train)},
          {"dcsa_kind", dcsa_kind_name(c.dcsa_kind)},
          {"distill", to_json(c.distill)},
          {"extraction", to_json(c.extraction)},
          {"master_seed", c.master_seed},
          {"learnable_threshold", c.learnable_threshold}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "grammar",   "alphabet", "dataset",    "fit_sparse_languages", "transformer",        "train",
      "dcsa_kind", "distill",  "extraction", "master_seed",          "learnable_threshold"};
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown pipeline config key '" + key + "'");
  try {
    PipelineConfig c;
    c.grammar = j.value("grammar", c.grammar);
    c.alphabet = j.value("alphabet", c.alphabet);
    if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"));
    c.fit_sparse_languages = j.value("fit_sparse_languages", c.fit_sparse_languages);
    if (j.contains("transformer")) c.transformer = transformer_config_from_json(j.at("transformer"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("dcsa_kind")) c.dcsa_kind = parse_dcsa_kind(j.at("dcsa_kind").get<std::string>());
    if (j.contains("distill")) c.distill = distill_config_from_json(j.at("distill"));
    if (j.contains("extraction")) c.extraction = extraction_budget_from_json(j.at("extraction"));
    c.master_seed = j.value("master_seed", c.master_seed);
    c.learnable_threshold = j.value("learnable_threshold", c.learnable_threshold);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pipeline config: ") + e.what());
  }
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j);
}

PipelineConfig with_stage_seeds(PipelineConfig c) {
  c.dataset.seed = c.master_seed + 1;
  c.train.seed = c.master_seed + 2;
  c.distill.seed = c.master_seed + 3;
  c.extraction.seed = c.master_seed + 4;
  return c;
}

DatasetConfig fit_dataset_config(const Dfa& dfa, DatasetConfig requested, std::size_t widest_len, std::string* note) {
  requested.validate();
  const std::size_t half = (requested.size + 1) / 2;
  auto rare = [&](std::size_t max_len) {
    const auto c = census(dfa, requested.min_len, max_len);
    return std::min(c.positives, c.negatives);
  };
  if (rare(requested.max_len) >= half) return requested;

  DatasetConfig fitted = requested;
  fitted.max_len = std::max(requested.max_len, widest_len);
  const std::uint64_t available = rare(fitted.max_len);
  if (available < 5)
    throw ConfigError("language has fewer than 5 words of one label up to length " + std::to_string(fitted.max_len));
  fitted.size = static_cast<std::size_t>(std::min<std::uint64_t>(requested.size, 2 * available));
  if (note)
    *note = "sparse language: max_len " + std::to_string(requested.max_len) + " -> " + std::to_string(fitted.max_len) +
            ", size " + std::to_string(requested.size) + " -> " + std::to_string(fitted.size);
  return fitted;
}

nlohmann::json to_json(const SplitRates& r) {
  return {{"items", r.items}, {"C_LT", r.c_lt}, {"C_TD", r.c_td}, {"C_TA", r.c_ta}, {"C_LA", r.c_la}};
}

nlohmann::json to_json(const ConsistencyReport& r) {
  auto j = report_fingerprint_json(r);
  j["timings"] = r.timings;
  j["extraction_log"]["wall_seconds"] = r.extraction_log.value("wall_seconds", 0.0);
  return j;
}

nlohmann::json report_fingerprint_json(const ConsistencyReport& r) {
  auto log = r.extraction_log;
  log.erase("wall_seconds");
  return {{"grammar", r.grammar},
          {"alphabet", r.alphabet},
          {"dcsa_kind", r.dcsa_kind},
          {"train", to_json(r.train)},
          {"test", to_json(r.test)},
          {"Diff1", r.diff1},
          {"Diff2", r.diff2},
          {"extracted_states", r.extracted_states},
          {"minimal_states", r.minimal_states},
          {"learnable", r.learnable},
          {"above_chance", r.above_chance},
          {"coherent", r.coherent},
          {"label_errors", r.label_errors},
          {"dataset", r.dataset},
          {"extraction_log", log},
          {"config", r.config}};
}

std::string format_report(const ConsistencyReport& r) {
  char buf[256];
  std::ostringstream out;
  out << "grammar " << r.grammar << " over {" << r.alphabet << "}, " << r.dcsa_kind << " DCSA\n";
  out << "split   items   C(L,T)  C(T,D)  C(T,A)  C(L,A)\n";
  for (const auto* s : {&r.train, &r.test}) {
    std::snprintf(buf, sizeof buf, "%-6s %6zu  %.4f  %.4f  %.4f  %.4f\n", s == &r.train ? "train" : "test", s->items,
                  s->c_lt, s->c_td, s->c_ta, s->c_la);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "Diff1 %.4f  Diff2 %.4f\n", r.diff1, r.diff2);
  out << buf;
  out << "extracted DFA: " << r.extracted_states << " states (minimal target: " << r.minimal_states << ")\n";
  out << "learnable: " << (r.learnable ? "yes" : "no")
      << " (test C(L,T) threshold), C(L,T) > 1/2: " << (r.above_chance ? "yes" : "no") << "\n";
  if (r.extraction_log.value("incomplete", false))
    out << "extraction incomplete: " << r.extraction_log.value("incomplete_reason", std::string{}) << "\n";
  for (const auto& w : r.extraction_log.value("warnings", nlohmann::json::array()))
    out << "warning: " << w.get<std::string>() << "\n";
  return out.str();
}

ConsistencyReport evaluate_models(const Dfa& truth, const SequenceDataset& dataset, const TransformerModel& transformer,
                                  const DcsaModel& dcsa, const Dfa& extracted, double learnable_threshold) {
  if (!(truth.alphabet() == dataset.alphabet) || !(transformer.alphabet == dataset.alphabet) ||
      !(dcsa.alphabet == dataset.alphabet) || !(extracted.alphabet() == dataset.alphabet))
    throw ConfigError("models and dataset use different alphabets");
  ConsistencyReport r;
  r.grammar = dataset.language;
  r.alphabet = dataset.alphabet.symbols();
  r.dcsa_kind = std::string(dcsa_kind_name(dcsa.kind));
  r.extracted_states = minimize(extracted).n_states();
  r.minimal_states = minimize(truth).n_states();

  for (Split split : {Split::Train, Split::Test}) {
    const auto items = dataset.subset(split);
    if (items.empty()) throw ConfigError(std::string("empty ") + std::string(split_name(split)) + " split");
    std::size_t lt = 0, td = 0, ta = 0, la = 0;
    for (const auto& item : items) {
      const int l = truth.accepts(item.tokens) ? 1 : 0;
      const int t = classify_word(transformer, item.tokens).label;
      const int d = dcsa_classify_word(dcsa, item.tokens).label;
      const int a = extracted.accepts(item.tokens) ? 1 : 0;
      r.label_errors += l != item.label;
      lt += l == t;
      td += t == d;
      ta += t == a;
      la += l == a;
    }
    const double n = static_cast<double>(items.size());
    SplitRates& s = split == Split::Train ? r.train : r.test;
    s = {items.size(), lt / n, td / n, ta / n, la / n};
  }
  r.coherent = coherence_holds(r.train.c_la, r.train.c_lt, r.train.c_ta) &&
               coherence_holds(r.test.c_la, r.test.c_lt, r.test.c_ta);
  r.learnable = r.test.c_lt > learnable_threshold;
  r.above_chance = r.test.c_lt > 0.5;

  const auto targets = teacher_targets(transformer, dataset.subset(Split::Test));
  r.diff1 = rep_state_diff(dcsa, targets, 1);
  r.diff2 = rep_state_diff(dcsa, targets, 2);
  r.dataset = {{"size", dataset.items.size()},
               {"positives", dataset.positives()},
               {"config", to_json(dataset.config)},
               {"language", dataset.language}};
  return r;
}

namespace {

PipelineResult finish(const PipelineConfig& config, const Dfa& truth, SequenceDataset dataset,
                      TransformerModel transformer, const std::filesystem::path& out_dir, const ProgressFn& progress,
                      nlohmann::json timings, const std::string& dataset_note) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  const bool write = !out_dir.empty();

  auto t0 = Clock::now();
  say("distilling " + std::string(dcsa_kind_name(config.dcsa_kind)) + " DCSA for " +
      std::to_string(config.distill.epochs) + " epochs");
  DcsaModel dcsa = stage("distill", [&] {
    DcsaModel d = build_dcsa(config.dcsa_kind, transformer, config.distill.seed);
    distill(d, transformer, dataset, config.distill, [&](std::size_t epoch, double ld, double lr) {
      if ((epoch + 1) % 25 == 0) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "  epoch %zu L_D %.4f L_Rep %.4f", epoch + 1, ld, lr);
        say(buf);
      }
    });
    if (write) save_dcsa(d, out_dir / "dcsa.json");
    return d;
  });
  timings["distill"] = seconds_since(t0);

  t0 = Clock::now();
  say("extracting DFA with L*");
  ExtractionResult extraction = stage("extract", [&] {
    ExtractionBudget budget = config.extraction;
    budget.probe_max_len = dataset.config.max_len;
    auto x = extract_dfa_from_dcsa(dcsa, budget);
    if (write) {
      write_json(out_dir / "dfa.json", dfa_to_json(x.dfa));
      write_text(out_dir / "dfa.dot", to_dot(x.dfa, config.grammar.size() < 32 ? config.grammar : "extracted"));
      write_json(out_dir / "extraction_log.json", to_json(x.log));
    }
    return x;
  });
  timings["extraction"] = seconds_since(t0);

  ConsistencyReport report = stage("evaluate", [&] {
    auto r = evaluate_models(truth, dataset, transformer, dcsa, extraction.dfa, config.learnable_threshold);
    r.grammar = config.grammar;
    r.extraction_log = to_json(extraction.log);
    r.config = to_json(config);
    if (!dataset_note.empty()) r.dataset["note"] = dataset_note;
    if (!r.coherent) throw Error("metric coherence bound C(L,A) >= C(L,T) + C(T,A) - 1 violated");
    if (r.label_errors != 0) throw Error(std::to_string(r.label_errors) + " dataset labels disagree with the grammar");
    return r;
  });
  double total = 0.0;
  for (const auto& [k, v] : timings.items()) total += v.get<double>();
  timings["total"] = total;
  report.timings = timings;
  if (write)
    stage("write", [&] {
      write_json(out_dir / "report.json", to_json(report));
      return 0;
    });
  return {std::move(report), std::move(dataset), std::move(transformer), std::move(dcsa), std::move(extraction.dfa)};
}

Dfa resolve_language(const PipelineConfig& c) {
  return stage("language", [&] { return language_from_spec(c.grammar, c.alphabet); });
}

void prepare_out_dir(const std::filesystem::path& out_dir, const PipelineConfig& c) {
  if (out_dir.empty()) return;
  stage("write", [&] {
    std::filesystem::create_directories(out_dir);
    write_json(out_dir / "config.json", to_json(c));
    return 0;
  });
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& raw, const std::filesystem::path& out_dir,
                            const ProgressFn& progress) {
  const PipelineConfig config = with_stage_seeds(raw);
  stage("config", [&] {
    config.validate();
    return 0;
  });
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  const Dfa truth = resolve_language(config);
  prepare_out_dir(out_dir, config);
  nlohmann::json timings = nlohmann::json::object();

  auto t0 = Clock::now();
  std::string note;
  SequenceDataset dataset = stage("dataset", [&] {
    DatasetConfig dc = config.dataset;
    if (config.fit_sparse_languages) dc = fit_dataset_config(truth, dc, config.transformer.max_len - 2, &note);
    auto ds = generate_dataset(truth, dc, config.grammar);
    if (!out_dir.empty()) save_dataset(ds, out_dir / "dataset.jsonl");
    return ds;
  });
  if (!note.empty()) say(note);
  say("dataset: " + std::to_string(dataset.items.size()) + " items, lengths " + std::to_string(dataset.config.min_len) +
      ".." + std::to_string(dataset.config.max_len));
  timings["dataset"] = seconds_since(t0);

  t0 = Clock::now();
  say("training transformer for " + std::to_string(config.train.epochs) + " epochs");
  TransformerModel transformer = stage("transformer", [&] {
    TransformerModel m = build_transformer(config.transformer, truth.alphabet(), config.train.seed);
    train_transformer(m, dataset, config.train, [&](std::size_t epoch, double loss) {
      if ((epoch + 1) % 25 == 0) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  epoch %zu loss %.4f", epoch + 1, loss);
        say(buf);
      }
    });
    if (!out_dir.empty()) save_transformer(m, out_dir / "transformer.json");
    return m;
  });
  timings["transformer"] = seconds_since(t0);

  return finish(config, truth, std::move(dataset), std::move(transformer), out_dir, progress, std::move(timings), note);
}

PipelineResult run_from_transformer(const PipelineConfig& raw, SequenceDataset dataset, TransformerModel transformer,
                                    const std::filesystem::path& out_dir, const ProgressFn& progress) {
  const PipelineConfig config = with_stage_seeds(raw);
  stage("config", [&] {
    config.distill.validate();
    config.extraction.validate();
    return 0;
  });
  const Dfa truth = resolve_language(config);
  if (!(truth.alphabet() == dataset.alphabet) || !(transformer.alphabet == dataset.alphabet))
    throw PipelineError("config", "grammar, dataset and transformer alphabets differ");
  prepare_out_dir(out_dir, config);
  return finish(config, truth, std::move(dataset), std::move(transformer), out_dir, progress, nlohmann::json::object(),
                {});
}

}  // namespace dfx
