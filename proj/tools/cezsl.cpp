// cezsl: command-line driver for the concept-embedding zero-shot pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cezsl/evaluation.hpp"
#include "cezsl/experiment.hpp"
#include "cezsl/simd/kernels.hpp"
#include "cezsl/synthetic.hpp"

namespace {

using namespace cezsl;
using nlohmann::json;

enum Exit { ok = 0, config_error = 1, stage_failure = 2, partial = 3 };

struct Options {
  std::string config;
  std::optional<std::size_t> trial;
  std::string stage;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool json_errors = false;
  bool quiet = false;
  bool verbose = false;
  // evaluate fixture mode
  std::string scores, truth, partition, vocabulary;
  // synth
  std::size_t documents = 600, topics = 6, labels_per_topic = 8, dim = 16, frames = 0;
};

void report_error(const Options& o, Errc code, const std::string& message, std::optional<Stage> stage = {},
                  std::optional<std::size_t> trial = {}) {
  if (o.json_errors) {
    json e{{"code", std::string(to_string(code))}, {"message", message}};
    if (stage) e["stage"] = to_string(*stage);
    if (trial) e["trial"] = *trial;
    std::cerr << json{{"error", e}}.dump() << '\n';
  } else {
    std::cerr << "error";
    if (trial) std::cerr << " (trial " << *trial << ")";
    std::cerr << ": " << message << '\n';
  }
}

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) throw Error(Errc::config, "--config is required");
  auto cfg = load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

int finish(const Options& o, const ExperimentResult& r, bool print_table) {
  for (const auto& t : r.trials)
    if (!t.ok) report_error(o, t.error_code, t.error, t.failed_stage, t.index);
  if (!r.trials.empty() && r.all_failed()) return stage_failure;
  if (print_table) {
    std::cout << format_table(r.report);
    if (r.oracle_report) std::cout << "\nerror-free regression:\n" << format_table(*r.oracle_report);
  }
  return r.any_failed() ? partial : ok;
}

int cmd_ingest(const Options& o) {
  auto cfg = load(o);
  cfg.validate();
  const auto data = ExperimentData::load(cfg);
  std::size_t missing = 0;
  for (const auto& d : data.corpus.documents)
    if (!data.vectors.count(d.doc_id) && !data.frames.count(d.doc_id)) ++missing;
  json summary{{"documents", data.corpus.documents.size()},
               {"vocabulary", data.corpus.vocabulary.size()},
               {"declared_oov", data.corpus.declared_oov.size()},
               {"vectors", data.vectors.size()},
               {"frame_sequences", data.frames.size()},
               {"documents_without_features", missing}};
  if (data.semantics_corpus) summary["semantics_documents"] = data.semantics_corpus->documents.size();
  write_json(cfg.output_dir / "ingest.json", with_provenance(summary, cfg.hash(), "ingest", cfg.seed));
  std::cout << summary.dump(2) << '\n';
  if (missing) {
    report_error(o, Errc::coverage, std::to_string(missing) + " documents have no instance features");
    return stage_failure;
  }
  return ok;
}

int cmd_stage(const Options& o, Stage stage) {
  const auto cfg = load(o);
  const auto r = run_experiment(cfg, o.trial, stage, stage);
  return finish(o, r, stage == Stage::evaluate);
}

int cmd_run(const Options& o) {
  const auto cfg = load(o);
  const Stage last = o.stage.empty() ? Stage::evaluate : stage_from_string(o.stage);
  const auto r = run_experiment(cfg, o.trial, last);
  return finish(o, r, last == Stage::evaluate);
}

// Evaluate a standalone score file against a truth corpus.
int cmd_evaluate_files(const Options& o) {
  if (o.truth.empty()) throw Error(Errc::config, "--scores needs --truth");
  auto j = read_json(o.scores);
  const json& list = j.is_array() ? j : j.at("scores");
  std::vector<RankedScores> ranked;
  for (const auto& r : list) ranked.push_back(ranked_scores_from_json(r));
  const auto truth = load_corpus(o.truth);
  SubsetRules rules;
  if (!o.partition.empty()) {
    rules = SubsetRules::from(label_partition_from_json(read_json(o.partition)), {});
  } else {
    rules.train.insert(truth.vocabulary.begin(), truth.vocabulary.end());
    for (const auto& r : ranked)
      for (const auto& [label, score] : r.scores) rules.train.insert(label);
  }
  const TrialMetrics m = evaluate_trial(ranked, truth.documents, rules);
  std::vector<TrialMetrics> one{m};
  const auto report = aggregate(one);
  if (!o.out.empty()) write_json(o.out, json{{"metrics", to_json(m)}, {"report", to_json(report)}});
  std::cout << format_table(report);
  return ok;
}

int cmd_synth(const Options& o) {
  SyntheticConfig c;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw Error(Errc::config, "cannot open " + o.config);
    c = synthetic_config_from_json(json::parse(in));
  } else {
    c.documents = o.documents;
    c.topics = o.topics;
    c.labels_per_topic = o.labels_per_topic;
    c.instance_dim = o.dim;
    c.frames_per_instance = o.frames;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out.empty()) throw Error(Errc::config, "--out is required");
  const auto data = generate_synthetic(c);
  write_synthetic(data, o.out);
  std::cout << "wrote " << data.corpus.documents.size() << " documents over " << data.corpus.vocabulary.size()
            << " labels to " << o.out << '\n';
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-embedding multi-label zero-shot learning pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "experiment config (JSON)");
  app.add_option("--trial", o.trial, "restrict to one trial index");
  app.add_option("--stage", o.stage, "last stage to run (run only)");
  app.add_option("--out", o.out, "output directory (overrides the config)");
  app.add_option("--seed", o.seed, "override the master seed");
  app.add_flag("--json-errors", o.json_errors, "emit errors as JSON on stderr");
  app.add_flag("-q,--quiet", o.quiet, "only warnings and errors");
  app.add_flag("-v,--verbose", o.verbose, "debug logging");

  auto* ingest = app.add_subcommand("ingest", "load and validate the configured datasets");
  std::vector<std::pair<CLI::App*, Stage>> stages;
  for (auto s : kStages) {
    auto* sub = app.add_subcommand(to_string(s), "run the " + to_string(s) + " stage");
    stages.emplace_back(sub, s);
  }
  auto* evaluate = stages.back().first;
  evaluate->add_option("--scores", o.scores, "ranked score file (fixture mode)");
  evaluate->add_option("--truth", o.truth, "ground-truth corpus for --scores");
  evaluate->add_option("--partition", o.partition, "label partition for --scores");
  auto* run = app.add_subcommand("run", "run the whole pipeline (or up to --stage)");
  auto* synth = app.add_subcommand("synth", "write a planted synthetic dataset");
  synth->add_option("--documents", o.documents, "number of documents");
  synth->add_option("--topics", o.topics, "number of planted topics");
  synth->add_option("--labels-per-topic", o.labels_per_topic, "labels per topic");
  synth->add_option("--dim", o.dim, "instance vector dimension");
  synth->add_option("--frames", o.frames, "frames per instance (0 = none)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  auto logger = spdlog::stderr_color_mt("cezsl");
  spdlog::set_default_logger(logger);
  spdlog::set_level(o.verbose ? spdlog::level::debug : o.quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::debug("simd backend: {}", simd::active_backend() == simd::Backend::avx2 ? "avx2" : "scalar");

  std::optional<Stage> current;
  try {
    if (*ingest) return cmd_ingest(o);
    if (*run) return cmd_run(o);
    if (*synth) return cmd_synth(o);
    for (auto& [sub, stage] : stages) {
      if (!*sub) continue;
      current = stage;
      if (stage == Stage::evaluate && !o.scores.empty()) return cmd_evaluate_files(o);
      return cmd_stage(o, stage);
    }
  } catch (const StageError& e) {
    report_error(o, e.code(), e.what(), e.stage(), o.trial);
    return stage_failure;
  } catch (const Error& e) {
    report_error(o, e.code(), e.what(), current, o.trial);
    return e.code() == Errc::config ? config_error : stage_failure;
  } catch (const std::exception& e) {
    report_error(o, Errc::io, e.what(), current, o.trial);
    return stage_failure;
  }
  return ok;
}
