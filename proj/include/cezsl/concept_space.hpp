#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"
#include "cezsl/corpus.hpp"
#include "cezsl/semantics.hpp"
#include "cezsl/siamese.hpp"

namespace cezsl {

/// Everything needed to turn (label, label set) into a concept embedding.
class ConceptEncoder {
 public:
  ConceptEncoder(SiameseModel model, LabelFeatures features, TopicModel topics, InferConfig infer = {});

  const SiameseModel& model() const { return model_; }
  const LabelFeatures& features() const { return features_; }
  const TopicModel& topics() const { return topics_; }
  const InferConfig& infer_config() const { return infer_; }
  std::size_t dimension() const { return model_.hyper.code_size; }

  /// In-vocabulary for the embedding model (has a global feature row).
  bool knows(const std::string& label) const;

  /// lc(doc) restricted to in-vocabulary labels; cached per label set.
  ContextHistogram context(const Document& doc) const;

  /// CE(label, doc) for an in-vocabulary label.
  Vector embed(const std::string& label, const Document& doc) const;

 private:
  SiameseModel model_;
  LabelFeatures features_;
  TopicModel topics_;
  InferConfig infer_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, ContextHistogram> context_cache_;
};

enum class ConceptOrigin { semantics_set, instance_set, oov_inferred };

std::string to_string(ConceptOrigin origin);

struct ConceptRecord {
  std::string label;
  std::string doc_id;
  Vector embedding;
  ConceptOrigin origin = ConceptOrigin::semantics_set;
};

class ConceptStore {
 public:
  explicit ConceptStore(std::size_t dimension = 0) : dimension_(dimension) {}

  std::size_t dimension() const { return dimension_; }
  const std::vector<ConceptRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Append a record; returns false (and stores nothing) when (label, doc_id) exists.
  bool add(ConceptRecord record);
  bool covers(const std::string& label) const { return index_.count(label) != 0; }
  const std::vector<std::size_t>& records_of(const std::string& label) const;
  /// Labels with at least one record, in first-insertion order.
  const std::vector<std::string>& labels() const { return label_order_; }

  /// Labels of `universe` without a record.
  std::vector<std::string> uncovered(std::span<const std::string> universe) const;

 private:
  std::size_t dimension_;
  std::vector<ConceptRecord> records_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
  std::map<std::pair<std::string, std::string>, std::size_t> keys_;
  std::vector<std::string> label_order_;
};

/// Labels of `doc` the encoder knows, in document order.
Document in_vocabulary_part(const Document& doc, const ConceptEncoder& encoder);

/// Centroid of CE(label, doc_IV) over the in-vocabulary labels of `doc`.
Vector infer_oov(const ConceptEncoder& encoder, const Document& doc);

/// Compressed target: mean concept embedding of the document's labels.
Vector compress_target(const ConceptEncoder& encoder, const Document& doc);

/// One record per (label, doc). Semantics documents first, then instance
/// documents; OOV labels of instance documents get centroid records.
ConceptStore build_store(const ConceptEncoder& encoder, std::span<const Document> semantics_docs,
                         std::span<const Document> instance_docs);

/// Minimum Euclidean distance from `point` to any record of `label`.
double label_distance(std::span<const double> point, const std::string& label, const ConceptStore& store);

struct RankedScores {
  std::string doc_id;
  std::vector<std::pair<std::string, double>> scores;  ///< descending, ties in universe order
};

/// Inverse-distance relatedness normalised over `universe`. Exact hits take
/// all the mass, split evenly among them.
RankedScores prime(std::span<const double> point, const ConceptStore& store, std::span<const std::string> universe,
                   std::string doc_id = {});

/// Mean distance over all ordered pairs (self pairs included) of
/// semantics-set records.
double scattering(const ConceptStore& store);

nlohmann::json to_json(const ConceptStore& store);
ConceptStore concept_store_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RankedScores& ranked);
RankedScores ranked_scores_from_json(const nlohmann::json& j);

}  // namespace cezsl
