#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cezsl/concept_space.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

using nlohmann::json;

ConceptEncoder::ConceptEncoder(SiameseModel model, LabelFeatures features, TopicModel topics, InferConfig infer)
    : model_(std::move(model)), features_(std::move(features)), topics_(std::move(topics)), infer_(infer) {
  if (features_.vocabulary != model_.vocabulary)
    throw Error(Errc::dimension, "label features and embedding model disagree on the vocabulary");
  if (topics_.topic_count() != model_.topic_count)
    throw Error(Errc::dimension, "topic model and embedding model disagree on the topic count");
}

bool ConceptEncoder::knows(const std::string& label) const { return features_.contains(label); }

ContextHistogram ConceptEncoder::context(const Document& doc) const {
  std::vector<std::string> known;
  for (const auto& label : doc.labels)
    if (knows(label)) known.push_back(label);
  std::sort(known.begin(), known.end());
  std::string key;
  for (const auto& label : known) key += label + '\x1f';
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = context_cache_.find(key); it != context_cache_.end()) return it->second;
  }
  auto hist = infer_context(topics_, Document{doc.doc_id, known}, infer_);
  std::lock_guard lock(cache_mutex_);
  return context_cache_.emplace(key, std::move(hist)).first->second;
}

Vector ConceptEncoder::embed(const std::string& label, const Document& doc) const {
  return cezsl::embed(model_, features_.feature(label), context(doc));
}

std::string to_string(ConceptOrigin origin) {
  switch (origin) {
    case ConceptOrigin::semantics_set: return "semantics_set";
    case ConceptOrigin::instance_set: return "instance_set";
    case ConceptOrigin::oov_inferred: return "oov_inferred";
  }
  return "?";
}

namespace {

ConceptOrigin origin_from_string(const std::string& s) {
  if (s == "semantics_set") return ConceptOrigin::semantics_set;
  if (s == "instance_set") return ConceptOrigin::instance_set;
  if (s == "oov_inferred") return ConceptOrigin::oov_inferred;
  throw Error(Errc::parse, "unknown concept origin '" + s + "'");
}

// Labels in lexicographic order; every mean below is summed in this order so
// results do not depend on how a label set was written down.
std::vector<std::string> canonical(const std::vector<std::string>& labels) {
  std::vector<std::string> out = labels;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

bool ConceptStore::add(ConceptRecord record) {
  if (dimension_ == 0) dimension_ = record.embedding.size();
  if (record.embedding.size() != dimension_)
    throw Error(Errc::dimension, "concept embedding has dimension " + std::to_string(record.embedding.size()) +
                                     ", store holds " + std::to_string(dimension_));
  if (!all_finite(record.embedding)) throw Error(Errc::numeric, "non-finite concept embedding for '" + record.label + "'");
  auto key = std::pair{record.label, record.doc_id};
  if (keys_.count(key)) return false;
  const std::size_t id = records_.size();
  keys_.emplace(std::move(key), id);
  auto [it, inserted] = index_.try_emplace(record.label);
  if (inserted) label_order_.push_back(record.label);
  it->second.push_back(id);
  records_.push_back(std::move(record));
  return true;
}

const std::vector<std::size_t>& ConceptStore::records_of(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw Error(Errc::coverage, "label '" + label + "' has no known concept in the store");
  return it->second;
}

std::vector<std::string> ConceptStore::uncovered(std::span<const std::string> universe) const {
  std::vector<std::string> out;
  for (const auto& label : universe)
    if (!covers(label)) out.push_back(label);
  return out;
}

Document in_vocabulary_part(const Document& doc, const ConceptEncoder& encoder) {
  Document iv{doc.doc_id, {}};
  for (const auto& label : doc.labels)
    if (encoder.knows(label)) iv.labels.push_back(label);
  return iv;
}

Vector infer_oov(const ConceptEncoder& encoder, const Document& doc) {
  const Document iv = in_vocabulary_part(doc, encoder);
  if (iv.labels.empty())
    throw Error(Errc::inference, "document '" + doc.doc_id + "' has no in-vocabulary label to anchor an OOV label");
  Vector centroid(encoder.dimension(), 0.0);
  for (const auto& label : canonical(iv.labels)) simd::axpy(1.0, encoder.embed(label, iv), centroid);
  for (double& x : centroid) x /= static_cast<double>(iv.labels.size());
  return centroid;
}

Vector compress_target(const ConceptEncoder& encoder, const Document& doc) {
  if (doc.labels.empty()) throw Error(Errc::domain, "cannot compress an empty label set");
  Vector target(encoder.dimension(), 0.0);
  std::optional<Vector> oov;
  for (const auto& label : canonical(doc.labels)) {
    if (encoder.knows(label)) {
      simd::axpy(1.0, encoder.embed(label, doc), target);
    } else {
      if (!oov) oov = infer_oov(encoder, doc);
      simd::axpy(1.0, *oov, target);
    }
  }
  for (double& x : target) x /= static_cast<double>(doc.labels.size());
  return target;
}

ConceptStore build_store(const ConceptEncoder& encoder, std::span<const Document> semantics_docs,
                         std::span<const Document> instance_docs) {
  ConceptStore store(encoder.dimension());
  for (const auto& doc : semantics_docs) {
    for (const auto& label : doc.labels) {
      if (!encoder.knows(label)) {
        spdlog::debug("semantics document '{}' label '{}' is outside the embedding vocabulary", doc.doc_id, label);
        continue;
      }
      store.add({label, doc.doc_id, encoder.embed(label, doc), ConceptOrigin::semantics_set});
    }
  }
  for (const auto& doc : instance_docs) {
    std::optional<Vector> oov;
    for (const auto& label : doc.labels) {
      if (encoder.knows(label)) {
        store.add({label, doc.doc_id, encoder.embed(label, doc), ConceptOrigin::instance_set});
        continue;
      }
      if (!oov) {
        try {
          oov = infer_oov(encoder, doc);
        } catch (const Error& e) {
          spdlog::warn("skipping OOV labels of '{}': {}", doc.doc_id, e.what());
          break;
        }
      }
      store.add({label, doc.doc_id, *oov, ConceptOrigin::oov_inferred});
    }
  }
  return store;
}

double label_distance(std::span<const double> point, const std::string& label, const ConceptStore& store) {
  if (point.size() != store.dimension())
    throw Error(Errc::dimension, "query has dimension " + std::to_string(point.size()) + ", store holds " +
                                     std::to_string(store.dimension()));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t id : store.records_of(label))
    best = std::min(best, simd::squared_distance(point, store.records()[id].embedding));
  return std::sqrt(best);
}

RankedScores prime(std::span<const double> point, const ConceptStore& store, std::span<const std::string> universe,
                   std::string doc_id) {
  if (universe.empty()) throw Error(Errc::domain, "priming needs a non-empty label universe");
  const auto missing = store.uncovered(universe);
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw Error(Errc::coverage, "labels without any known concept: " + names);
  }

  const std::size_t n = universe.size();
  Vector distance(n);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < n; ++i) {
    distance[i] = label_distance(point, universe[i], store);
    if (distance[i] == 0.0) ++exact;
  }
  Vector score(n, 0.0);
  if (exact > 0) {
    for (std::size_t i = 0; i < n; ++i)
      if (distance[i] == 0.0) score[i] = 1.0 / static_cast<double>(exact);
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += 1.0 / distance[i];
    for (std::size_t i = 0; i < n; ++i) score[i] = (1.0 / distance[i]) / total;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  RankedScores ranked{std::move(doc_id), {}};
  ranked.scores.reserve(n);
  for (std::size_t i : order) ranked.scores.emplace_back(universe[i], score[i]);
  return ranked;
}

double scattering(const ConceptStore& store) {
  std::vector<const Vector*> points;
  for (const auto& record : store.records())
    if (record.origin == ConceptOrigin::semantics_set) points.push_back(&record.embedding);
  if (points.size() < 2) throw Error(Errc::domain, "scattering needs at least two semantics-set concepts");
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) sum += simd::distance(*points[i], *points[j]);
  const double m = static_cast<double>(points.size());
  return 2.0 * sum / (m * m);
}

json to_json(const ConceptStore& store) {
  json records = json::array();
  for (const auto& r : store.records())
    records.push_back(json{{"label", r.label}, {"doc_id", r.doc_id}, {"origin", to_string(r.origin)}, {"embedding", r.embedding}});
  return json{{"dimension", store.dimension()}, {"records", records}};
}

ConceptStore concept_store_from_json(const json& j) {
  ConceptStore store(j.at("dimension").get<std::size_t>());
  for (const auto& r : j.at("records"))
    store.add({r.at("label").get<std::string>(), r.at("doc_id").get<std::string>(), r.at("embedding").get<Vector>(),
               origin_from_string(r.at("origin").get<std::string>())});
  return store;
}

json to_json(const RankedScores& ranked) {
  json scores = json::array();
  for (const auto& [label, score] : ranked.scores) scores.push_back(json::array({label, score}));
  return json{{"doc_id", ranked.doc_id}, {"scores", scores}};
}

RankedScores ranked_scores_from_json(const json& j) {
  RankedScores ranked{j.at("doc_id").get<std::string>(), {}};
  for (const auto& entry : j.at("scores")) ranked.scores.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
  return ranked;
}

}  // namespace cezsl
