#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "dfx/core/error.hpp"
#include "dfx/core/languages.hpp"
#include "dfx/eval/metrics.hpp"
#include "dfx/eval/pipeline.hpp"

using namespace dfx;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + " is not valid JSON: " + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw FormatError("cannot write " + path);
}

// A label function backed by whichever model a JSON file holds.
struct LoadedModel {
  std::string kind;
  std::optional<TransformerModel> transformer;
  std::optional<DcsaModel> dcsa;
  std::optional<Dfa> dfa;

  const Alphabet& alphabet() const {
    return transformer ? transformer->alphabet : dcsa ? dcsa->alphabet : dfa->alphabet();
  }
  LabelFunction labels() const {
    if (transformer) return label_function(*transformer);
    if (dcsa) return label_function(*dcsa);
    return label_function(*dfa);
  }
};

LoadedModel load_model(const std::string& path) {
  const auto j = read_json(path);
  LoadedModel m;
  const std::string kind = j.is_object() ? j.value("model_kind", std::string{}) : std::string{};
  if (kind == "transformer") {
    m.transformer = transformer_from_json(j);
  } else if (kind == "dcsa") {
    m.dcsa = dcsa_from_json(j);
  } else if (j.is_object() && j.contains("delta")) {
    m.dfa = dfa_from_json(j);
    m.kind = "dfa";
    return m;
  } else {
    throw FormatError(path + " holds neither a transformer, a DCSA nor a DFA");
  }
  m.kind = kind;
  return m;
}

void print_progress(std::string_view line) {
  std::fprintf(stderr, "%.*s\n", static_cast<int>(line.size()), line.data());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Train transformer acceptors of regular languages, distill them into recurrent automata and extract DFAs"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auto* list = app.add_subcommand("list-grammars", "List the builtin grammars");

  DatasetConfig dc;
  std::string gen_grammar, gen_alphabet, gen_out;
  bool gen_fit = false;
  auto* gen = app.add_subcommand("gen-data", "Generate a balanced labeled dataset");
  gen->add_option("--grammar", gen_grammar, "Builtin grammar id or regex")->required();
  gen->add_option("--alphabet", gen_alphabet, "Alphabet symbols (required for a regex)");
  gen->add_option("--out", gen_out, "Output JSONL file")->required();
  gen->add_option("--size", dc.size, "Number of sequences")->capture_default_str();
  gen->add_option("--min-len", dc.min_len, "Shortest sequence")->capture_default_str();
  gen->add_option("--max-len", dc.max_len, "Longest sequence")->capture_default_str();
  gen->add_option("--test-fraction", dc.test_fraction, "Share of the test split")->capture_default_str();
  gen->add_option("--seed", dc.seed, "Sampling seed")->capture_default_str();
  gen->add_flag("--fit-sparse", gen_fit, "Widen lengths and shrink size for sparse languages");

  TransformerConfig tcfg;
  TrainConfig train;
  std::string tr_data, tr_out;
  auto* tr = app.add_subcommand("train-transformer", "Train the encoder-only transformer acceptor");
  tr->add_option("--data", tr_data, "Dataset JSONL")->required();
  tr->add_option("--out", tr_out, "Output model JSON")->required();
  tr->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
  tr->add_option("--seed", train.seed, "Initialization and shuffling seed")->capture_default_str();
  tr->add_option("--d-model", tcfg.d_model, "Model width")->capture_default_str();
  tr->add_option("--layers", tcfg.n_layers, "Encoder blocks")->capture_default_str();
  tr->add_option("--heads", tcfg.n_heads, "Attention heads")->capture_default_str();
  tr->add_option("--d-ff", tcfg.d_ff, "Feed-forward width")->capture_default_str();
  tr->add_option("--max-len", tcfg.max_len, "Token frame including [CLS] and [SEP]")->capture_default_str();

  DistillConfig dcfg;
  std::string ds_transformer, ds_data, ds_out, ds_kind = "rnn", ds_alt = "per_example";
  auto* dist = app.add_subcommand("distill", "Distill a trained transformer into a DCSA");
  dist->add_option("--transformer", ds_transformer, "Transformer model JSON")->required();
  dist->add_option("--data", ds_data, "Dataset JSONL (train split is used)")->required();
  dist->add_option("--out", ds_out, "Output DCSA JSON")->required();
  dist->add_option("--kind", ds_kind, "rnn, gru or lstm")->capture_default_str();
  dist->add_option("--epochs", dcfg.epochs, "Distillation epochs")->capture_default_str();
  dist->add_option("--lr", dcfg.learning_rate, "Learning rate")->capture_default_str();
  dist->add_option("--alpha", dcfg.alpha, "Weight of the representation loss")->capture_default_str();
  dist->add_option("--alternation", ds_alt, "per_example or per_epoch")->capture_default_str();
  dist->add_option("--seed", dcfg.seed, "Initialization and shuffling seed")->capture_default_str();

  ExtractionBudget budget;
  std::string ex_dcsa, ex_out, ex_dot, ex_log;
  auto* ext = app.add_subcommand("extract", "Extract a DFA from a DCSA with L*");
  ext->add_option("--dcsa", ex_dcsa, "DCSA model JSON")->required();
  ext->add_option("--out", ex_out, "Output DFA JSON")->required();
  ext->add_option("--dot", ex_dot, "Also write Graphviz DOT here");
  ext->add_option("--log", ex_log, "Also write the extraction log here");
  ext->add_option("--max-abstract-states", budget.max_abstract_states)->capture_default_str();
  ext->add_option("--max-refinements", budget.max_refinements)->capture_default_str();
  ext->add_option("--probes", budget.random_probe_count, "Random probes per equivalence query")->capture_default_str();
  ext->add_option("--max-states", budget.max_hypothesis_states, "Hypothesis state budget")->capture_default_str();
  ext->add_option("--seconds", budget.wall_clock_seconds, "Wall-clock budget")->capture_default_str();
  ext->add_option("--probe-max-len", budget.probe_max_len, "Probe lengths are drawn from [0, 2x this]")
      ->capture_default_str();
  ext->add_option("--seed", budget.seed, "Probe seed")->capture_default_str();

  std::string ev_model, ev_against, ev_reference, ev_split = "all";
  auto* eval = app.add_subcommand("evaluate", "Consistency rate of a model against dataset labels or another model");
  eval->add_option("--model", ev_model, "Transformer, DCSA or DFA JSON")->required();
  eval->add_option("--against", ev_against, "Dataset JSONL")->required();
  eval->add_option("--reference", ev_reference, "Compare with this model instead of the dataset labels");
  eval->add_option("--split", ev_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();

  std::string pl_config, pl_out;
  std::uint64_t pl_seed = 0;
  auto* pipe = app.add_subcommand("pipeline", "Run the whole pipeline from a JSON config");
  pipe->add_option("--config", pl_config, "Pipeline config JSON")->required();
  pipe->add_option("--out", pl_out, "Output directory for artifacts")->required();
  auto* seed_opt = pipe->add_option("--seed", pl_seed, "Override the master seed");

  std::string dot_dfa, dot_grammar, dot_alphabet, dot_out;
  auto* dot = app.add_subcommand("export-dot", "Render a DFA as Graphviz DOT");
  auto* dot_from_file = dot->add_option("--dfa", dot_dfa, "DFA JSON");
  auto* dot_from_grammar = dot->add_option("--grammar", dot_grammar, "Builtin grammar id or regex");
  dot_from_file->excludes(dot_from_grammar);
  dot->add_option("--alphabet", dot_alphabet, "Alphabet for a regex");
  dot->add_option("--out", dot_out, "Output file (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << "\n" << app.help();
    return 1;
  }
  if (dot->parsed() && dot_dfa.empty() == dot_grammar.empty()) {
    std::cerr << "export-dot needs exactly one of --dfa or --grammar\n\n" << dot->help();
    return 1;
  }

  const ProgressFn progress = quiet ? ProgressFn{} : ProgressFn{print_progress};
  try {
    if (list->parsed()) {
      for (const auto& info : builtin_languages())
        std::printf("%-10s {%s}  %zu states  %s\n", info.name.c_str(), info.alphabet.c_str(),
                    builtin_language(info.name).n_states(), info.definition.c_str());
    } else if (gen->parsed()) {
      const Dfa dfa = language_from_spec(gen_grammar, gen_alphabet);
      DatasetConfig cfg = dc;
      if (gen_fit) {
        std::string note;
        cfg = fit_dataset_config(dfa, cfg, TransformerConfig{}.max_len - 2, &note);
        if (!note.empty() && progress) progress(note);
      }
      const auto ds = generate_dataset(dfa, cfg, gen_grammar);
      save_dataset(ds, gen_out);
      std::printf("wrote %zu sequences (%zu positive) to %s\n", ds.items.size(), ds.positives(), gen_out.c_str());
    } else if (tr->parsed()) {
      const auto ds = load_dataset(tr_data);
      auto model = build_transformer(tcfg, ds.alphabet, train.seed);
      const auto report = train_transformer(model, ds, train, [&](std::size_t epoch, double loss) {
        if (progress && (epoch + 1) % 25 == 0)
          progress("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
      });
      save_transformer(model, tr_out);
      std::printf("train accuracy %.4f after %zu steps (%.1f s); wrote %s\n", report.train_accuracy, report.steps,
                  report.seconds, tr_out.c_str());
    } else if (dist->parsed()) {
      const auto ds = load_dataset(ds_data);
      const auto teacher = load_transformer(ds_transformer);
      dcfg.alternation = parse_alternation(ds_alt);
      auto model = build_dcsa(parse_dcsa_kind(ds_kind), teacher, dcfg.seed);
      const auto report = distill(model, teacher, ds, dcfg, [&](std::size_t epoch, double ld, double lr) {
        if (progress && (epoch + 1) % 25 == 0)
          progress("epoch " + std::to_string(epoch + 1) + " L_D " + std::to_string(ld) + " L_Rep " +
                   std::to_string(lr));
      });
      save_dcsa(model, ds_out);
      std::printf("final L_D %.4f after %zu updates (%.1f s); wrote %s\n", report.label_loss.back(), report.updates,
                  report.seconds, ds_out.c_str());
    } else if (ext->parsed()) {
      const auto model = load_dcsa(ex_dcsa);
      const auto result = extract_dfa_from_dcsa(model, budget);
      write_file(ex_out, dfa_to_json(result.dfa).dump(2) + "\n");
      if (!ex_dot.empty()) write_file(ex_dot, to_dot(result.dfa, "extracted"));
      if (!ex_log.empty()) write_file(ex_log, to_json(result.log).dump(2) + "\n");
      std::printf("extracted %zu-state DFA in %zu equivalence rounds, %zu refinements%s; wrote %s\n",
                  result.dfa.n_states(), result.log.equivalence_rounds, result.log.refinements,
                  result.log.incomplete ? " (incomplete)" : "", ex_out.c_str());
      for (const auto& w : result.log.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (eval->parsed()) {
      const auto ds = load_dataset(ev_against);
      const auto model = load_model(ev_model);
      if (!(model.alphabet() == ds.alphabet)) throw ConfigError("model and dataset alphabets differ");
      std::vector<LabeledSequence> items = ev_split == "all"     ? ds.items
                                           : ev_split == "train" ? ds.subset(Split::Train)
                                                                 : ds.subset(Split::Test);
      std::optional<LoadedModel> reference;
      if (!ev_reference.empty()) {
        reference = load_model(ev_reference);
        if (!(reference->alphabet() == ds.alphabet)) throw ConfigError("reference and dataset alphabets differ");
      }
      const LabelFunction other = reference ? reference->labels() : LabelFunction{};
      std::map<Word, int> dataset_labels;
      for (const auto& item : items) dataset_labels[item.tokens] = item.label;
      const LabelFunction against =
          reference ? other : LabelFunction{[&](std::string_view w) { return dataset_labels.at(Word(w)); }};
      const double rate = consistency(model.labels(), against, items);
      std::printf("consistency %.4f over %zu %s items (%s vs %s)\n", rate, items.size(), ev_split.c_str(),
                  model.kind.c_str(), reference ? reference->kind.c_str() : "dataset labels");
    } else if (pipe->parsed()) {
      PipelineConfig cfg = load_pipeline_config(pl_config);
      if (*seed_opt) cfg.master_seed = pl_seed;
      const auto result = run_pipeline(cfg, pl_out, progress);
      std::printf("%s", format_report(result.report).c_str());
      std::printf("artifacts in %s\n", pl_out.c_str());
    } else if (dot->parsed()) {
      const Dfa dfa =
          dot_dfa.empty() ? language_from_spec(dot_grammar, dot_alphabet) : dfa_from_json(read_json(dot_dfa));
      const std::string text = to_dot(dfa, dot_grammar.empty() || dot_grammar.size() > 32 ? "dfa" : dot_grammar);
      if (dot_out.empty())
        std::printf("%s", text.c_str());
      else
        write_file(dot_out, text);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
