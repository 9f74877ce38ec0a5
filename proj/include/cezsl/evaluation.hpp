#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/concept_space.hpp"
#include "cezsl/corpus.hpp"

namespace cezsl {

/// |truth ∩ top-k| / k. Throws Errc::domain for k outside 1..|ranked|.
double precision_at_k(std::size_t k, std::span<const std::string> truth, const RankedScores& ranked);

/// Example-based AP: mean of P@i for i = 1..|truth|.
double e_map(std::span<const std::string> truth, const RankedScores& ranked);

/// Fraction of `positives` inside the first k entries of `ranked`.
double recall_at_k(std::size_t k, const std::set<std::string>& positives, std::span<const std::string> ranked);

/// Concept-based AP for one label: instances ranked by score (descending,
/// ties by id), 11-point interpolated precision. nullopt when there is no
/// positive instance.
std::optional<double> c_map(std::span<const std::string> instance_ids, std::span<const double> scores,
                            const std::set<std::string>& positives);

/// Expected example-based AP of a ranker that orders labels uniformly at random.
double random_e_map(std::size_t truth_size, std::size_t universe_size);

enum class Subset { training, zsl, all, oov };
inline constexpr std::array<Subset, 4> kSubsets{Subset::training, Subset::zsl, Subset::all, Subset::oov};
std::string to_string(Subset subset);

struct SubsetMetrics {
  std::optional<double> e_map;  ///< absent when the subset has no instance
  std::optional<double> c_map;  ///< absent when no label has a positive instance
  std::size_t instances = 0;
  std::size_t labels = 0;  ///< labels entering the C-MAP average
  double random_e_map = 0.0;
};

using TrialMetrics = std::map<Subset, SubsetMetrics>;

/// Subset membership rules for one trial.
struct SubsetRules {
  std::set<std::string> train;
  std::set<std::string> zsl;
  std::set<std::string> oov;
  std::set<std::string> semantics_vocabulary;  ///< empty means "no restriction"

  static SubsetRules from(const LabelPartition& partition, std::span<const std::string> semantics_vocabulary);
};

/// Score every ranked instance against its ground truth (looked up by doc_id).
TrialMetrics evaluate_trial(std::span<const RankedScores> ranked, std::span<const Document> truth,
                            const SubsetRules& rules);

struct Statistic {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::size_t trials = 0;             ///< trials that produced metrics
  std::vector<std::size_t> failed;    ///< indices of trials that did not
  bool single_trial = false;          ///< standard errors are 0 by convention
  std::map<Subset, std::optional<Statistic>> e_map;
  std::map<Subset, std::optional<Statistic>> c_map;
  std::map<Subset, double> random_e_map;
};

/// Mean and standard error (sample stddev / sqrt(n)) per subset cell.
EvalReport aggregate(std::span<const TrialMetrics> trials, std::vector<std::size_t> failed = {});

Statistic mean_stderr(std::span<const double> values);

nlohmann::json to_json(const SubsetMetrics& metrics);
nlohmann::json to_json(const TrialMetrics& metrics);
TrialMetrics trial_metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& report);

/// Aligned table: subset rows x {E-MAP, C-MAP}, cells "mean±stderr".
std::string format_table(const EvalReport& report);

}  // namespace cezsl
