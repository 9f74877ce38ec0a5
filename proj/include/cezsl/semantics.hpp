#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"
#include "cezsl/corpus.hpp"

namespace cezsl {

/// tf-idf weight of every vocabulary label in every semantics document.
struct LabelUsageMatrix {
  std::vector<std::string> vocabulary;
  std::vector<std::string> doc_ids;
  Matrix weights;  ///< |vocabulary| x |doc_ids|
};

/// Binary tf, idf = ln(|docs| / df). Labels with df = 0 get a zero row.
LabelUsageMatrix tfidf_usage(std::span<const Document> documents, const std::vector<std::string>& vocabulary);

/// Global label descriptors t(label): the Gram matrix of usage rows.
struct LabelFeatures {
  std::vector<std::string> vocabulary;
  Matrix gram;         ///< symmetric |V| x |V|
  double scale = 1.0;  ///< multiplier applied when a row is fed to the network

  std::size_t index_of(const std::string& label) const;  ///< throws Errc::domain when absent
  bool contains(const std::string& label) const;
  /// Row of `label` multiplied by `scale`.
  Vector feature(const std::string& label) const;

  std::unordered_map<std::string, std::size_t> index;
};

/// Gram matrix of the usage rows. `scale` is set to 1 / max|gram| (1 for an
/// all-zero matrix) so network inputs stay in [-1, 1] without changing the
/// relative geometry.
LabelFeatures label_features(const LabelUsageMatrix& usage);

struct ContextHistogram {
  Vector values;  ///< strictly positive, sums to 1
};

struct BowTarget {
  Vector values;  ///< +1 at member labels, -1 elsewhere
};

BowTarget bow_target(const Document& doc, const std::vector<std::string>& vocabulary);
BowTarget flipped(const BowTarget& target);

/// Symmetric (Jeffreys) divergence sum_c (p_c - q_c) ln(p_c / q_c).
double context_divergence(const ContextHistogram& a, const ContextHistogram& b);
/// exp(-lambda / 2 * divergence).
double context_similarity(const ContextHistogram& a, const ContextHistogram& b, double lambda);

struct LdaConfig {
  std::size_t topics = 19;
  double alpha = -1.0;  ///< <= 0 selects 50 / topics
  double beta = 0.01;
  std::size_t iterations = 500;
  std::uint64_t seed = 1;

  double effective_alpha() const { return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(topics); }
};

struct InferConfig {
  std::size_t sweeps = 100;  ///< fold-in Gibbs sweeps; the last half are averaged
  std::uint64_t seed = 7;
};

struct TopicModel {
  std::vector<std::string> vocabulary;
  Matrix topic_word;  ///< topics x |V|, rows sum to 1, strictly positive
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;

  std::size_t topic_count() const { return topic_word.rows(); }
};

/// Collapsed Gibbs sampling over label tokens. topic_word is the smoothed
/// estimate averaged over the second half of the sweeps.
TopicModel fit_lda(std::span<const Document> documents, const std::vector<std::string>& vocabulary,
                   const LdaConfig& config);

/// Fold-in Gibbs inference of lc(doc) against frozen topics. Labels unknown to
/// the model are dropped; labels are visited in vocabulary order and the chain
/// is seeded from the label set so the result depends only on the set.
ContextHistogram infer_context(const TopicModel& model, const Document& doc, const InferConfig& config = {});

nlohmann::json to_json(const LabelUsageMatrix& usage);
LabelUsageMatrix usage_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabelFeatures& features);
LabelFeatures label_features_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TopicModel& model);
TopicModel topic_model_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace cezsl
