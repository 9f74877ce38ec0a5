#pragma once

// End-to-end experiment driver: one JSON config, per-trial stages that
// persist their artifacts, and an aggregated report.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/concept_space.hpp"
#include "cezsl/corpus.hpp"
#include "cezsl/evaluation.hpp"
#include "cezsl/im_regressor.hpp"
#include "cezsl/instance_features.hpp"
#include "cezsl/semantics.hpp"
#include "cezsl/siamese.hpp"

namespace cezsl {

namespace fs = std::filesystem;

struct DatasetPaths {
  fs::path corpus;                          ///< instance corpus (labels per instance)
  std::optional<fs::path> vocabulary;       ///< explicit vocabulary file
  std::optional<fs::path> vectors;          ///< precomputed instance vectors
  std::optional<fs::path> frames;           ///< frame sequences for the ABoW path
  std::optional<fs::path> semantics_corpus; ///< CCT: corpus the embedding is learned on
  std::optional<fs::path> ce_bundle;        ///< CCT: previously trained embedding bundle
  nlohmann::json as_written = nlohmann::json::object();  ///< unresolved, used for hashing
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetPaths data;
  Protocol protocol = Protocol::wct;
  LabelFractions fractions;
  SplitOptions split;
  std::size_t trials = 3;
  std::uint64_t seed = 1;
  CeHyperParams ce;
  LdaConfig lda;
  InferConfig infer;
  SvrConfig svr;
  CodebookConfig codebook;
  bool codebook_weighted = true;
  bool frame_deltas = false;
  std::size_t vector_dim = 0;  ///< 0 = take from the data
  std::size_t threads = 1;
  bool error_free_oracle = true;
  fs::path output_dir = "out";

  /// FNV-1a of the canonical config JSON without output_dir.
  std::uint64_t hash() const;
  void validate() const;  ///< throws Errc::config
};

/// Parse a config; relative data paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = ".");
ExperimentConfig load_config(const fs::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

enum class Stage { split, train_ce, embed, build_store, train_im, predict, evaluate };
inline constexpr Stage kStages[] = {Stage::split, Stage::train_ce, Stage::embed, Stage::build_store,
                                    Stage::train_im, Stage::predict, Stage::evaluate};
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

/// A failure inside one stage of one trial.
class StageError : public Error {
 public:
  StageError(Stage stage, const Error& cause)
      : Error(cause.code(), to_string(stage) + ": " + cause.what()), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

/// Shared inputs loaded once per experiment.
struct ExperimentData {
  Corpus corpus;
  std::optional<Corpus> semantics_corpus;
  std::map<std::string, Vector> vectors;            ///< by instance id (vectors path)
  std::map<std::string, FrameSequence> frames;      ///< by instance id (frames path)

  static ExperimentData load(const ExperimentConfig& config);
};

/// The embedding side of a trial: everything the concept space needs.
struct CeBundle {
  LabelFeatures features;
  TopicModel topics;
  SiameseModel model;
  InferConfig infer;
  ConceptStore semantics_store;
};

nlohmann::json to_json(const CeBundle& bundle);
CeBundle ce_bundle_from_json(const nlohmann::json& j);

struct TrialSummary {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::optional<Stage> failed_stage;
  Errc error_code = Errc::numeric;
  std::string error;
  TrialMetrics metrics;
  std::optional<TrialMetrics> oracle_metrics;
  std::optional<RegressionStats> regression;
};

/// One trial's stages. Each stage writes its artifact into `dir` and loads
/// missing prerequisites from there, so stages can run in separate processes.
class Trial {
 public:
  Trial(const ExperimentConfig& config, const ExperimentData& data, std::size_t index);
  ~Trial();
  Trial(const Trial&) = delete;
  Trial& operator=(const Trial&) = delete;

  std::uint64_t seed() const;
  std::uint64_t stage_seed(Stage stage) const;
  fs::path directory() const;
  fs::path artifact_path(Stage stage) const;

  void run(Stage stage);
  /// Run every stage up to and including `last`.
  void run_until(Stage last);
  void run_range(Stage first, Stage last);

  const SplitPlan& plan();
  const CeBundle& bundle();
  const ConceptStore& store();
  const std::vector<std::string>& universe();
  const ImModel& im_model();
  const std::vector<RankedScores>& scores();
  const TrialSummary& summary();

 private:
  struct State;
  std::unique_ptr<State> s_;
};

struct ExperimentResult {
  EvalReport report;
  std::optional<EvalReport> oracle_report;
  std::vector<TrialSummary> trials;
  std::uint64_t config_hash = 0;

  bool all_failed() const;
  bool any_failed() const;
};

/// Run stages first..last of all (or one) trial(s); when evaluation ran,
/// aggregate and write report.json / report.txt under the output directory.
ExperimentResult run_experiment(const ExperimentConfig& config, std::optional<std::size_t> only_trial = std::nullopt,
                                Stage last = Stage::evaluate, Stage first = Stage::split);

/// Evaluation with every predicted target replaced by the compressed
/// ground-truth target of the test instance.
TrialMetrics error_free_metrics(const ConceptEncoder& encoder, const ConceptStore& store,
                                std::span<const std::string> universe, std::span<const Document> test_docs,
                                const SubsetRules& rules);
EvalReport error_free_upper_bound(const ExperimentConfig& config);

nlohmann::json to_json(const TrialSummary& summary);
nlohmann::json to_json(const ExperimentResult& result);

/// Adds {"provenance": {config_hash, stage, seed}} to an artifact.
nlohmann::json with_provenance(nlohmann::json artifact, std::uint64_t config_hash, const std::string& stage,
                               std::uint64_t seed);
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

}  // namespace cezsl
