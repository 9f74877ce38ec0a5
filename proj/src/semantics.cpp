#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cezsl/semantics.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

using nlohmann::json;

LabelUsageMatrix tfidf_usage(std::span<const Document> documents, const std::vector<std::string>& vocabulary) {
  LabelUsageMatrix usage;
  usage.vocabulary = vocabulary;
  usage.weights = Matrix(vocabulary.size(), documents.size());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], i);

  std::vector<std::size_t> df(vocabulary.size(), 0);
  for (const auto& doc : documents) {
    usage.doc_ids.push_back(doc.doc_id);
    for (const auto& label : doc.labels) {
      auto it = index.find(label);
      if (it == index.end())
        throw Error(Errc::domain, "label '" + label + "' of document '" + doc.doc_id + "' is not in the vocabulary");
      ++df[it->second];
    }
  }
  const double n_docs = static_cast<double>(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& label : documents[d].labels) {
      const std::size_t v = index.at(label);
      usage.weights(v, d) = std::log(n_docs / static_cast<double>(df[v]));
    }
  }
  for (std::size_t v = 0; v < vocabulary.size(); ++v)
    if (df[v] == 0) spdlog::warn("label '{}' never occurs in the semantics documents; its usage row is zero", vocabulary[v]);
  return usage;
}

std::size_t LabelFeatures::index_of(const std::string& label) const {
  auto it = index.find(label);
  if (it == index.end()) throw Error(Errc::domain, "label '" + label + "' has no global feature vector");
  return it->second;
}

bool LabelFeatures::contains(const std::string& label) const { return index.count(label) != 0; }

Vector LabelFeatures::feature(const std::string& label) const {
  const auto row = gram.row(index_of(label));
  Vector out(row.begin(), row.end());
  for (double& x : out) x *= scale;
  return out;
}

namespace {

void rebuild_index(LabelFeatures& features) {
  features.index.clear();
  for (std::size_t i = 0; i < features.vocabulary.size(); ++i) features.index.emplace(features.vocabulary[i], i);
}

}  // namespace

LabelFeatures label_features(const LabelUsageMatrix& usage) {
  LabelFeatures features;
  features.vocabulary = usage.vocabulary;
  const std::size_t n = usage.vocabulary.size();
  features.gram = Matrix(n, n);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double g = simd::dot(usage.weights.row(i), usage.weights.row(j));
      features.gram(i, j) = g;
      features.gram(j, i) = g;
      max_abs = std::max(max_abs, std::abs(g));
    }
  }
  features.scale = max_abs > 0.0 ? 1.0 / max_abs : 1.0;
  rebuild_index(features);
  return features;
}

BowTarget bow_target(const Document& doc, const std::vector<std::string>& vocabulary) {
  BowTarget target{Vector(vocabulary.size(), -1.0)};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (doc.has(vocabulary[i])) {
      target.values[i] = 1.0;
      ++hits;
    }
  }
  if (hits != doc.labels.size())
    throw Error(Errc::domain, "document '" + doc.doc_id + "' has labels outside the vocabulary");
  return target;
}

BowTarget flipped(const BowTarget& target) {
  BowTarget out = target;
  for (double& v : out.values) v = -v;
  return out;
}

double context_divergence(const ContextHistogram& a, const ContextHistogram& b) {
  if (a.values.size() != b.values.size())
    throw Error(Errc::dimension, "context histograms differ in length");
  double sum = 0.0;
  for (std::size_t c = 0; c < a.values.size(); ++c) {
    const double p = a.values[c];
    const double q = b.values[c];
    if (!(p > 0.0) || !(q > 0.0)) throw Error(Errc::domain, "context histogram has a non-positive entry");
    sum += (p - q) * (std::log(p) - std::log(q));
  }
  return sum;
}

double context_similarity(const ContextHistogram& a, const ContextHistogram& b, double lambda) {
  if (!(lambda > 0.0)) throw Error(Errc::config, "lambda must be positive");
  return std::exp(-0.5 * lambda * context_divergence(a, b));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != m.rows()) throw Error(Errc::parse, "matrix row count mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = data[r].get<std::vector<double>>();
    if (row.size() != m.cols()) throw Error(Errc::parse, "matrix column count mismatch");
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

json to_json(const LabelUsageMatrix& usage) {
  return json{{"vocabulary", usage.vocabulary}, {"doc_ids", usage.doc_ids}, {"weights", matrix_to_json(usage.weights)}};
}

LabelUsageMatrix usage_from_json(const json& j) {
  return LabelUsageMatrix{j.at("vocabulary").get<std::vector<std::string>>(),
                          j.at("doc_ids").get<std::vector<std::string>>(), matrix_from_json(j.at("weights"))};
}

json to_json(const LabelFeatures& features) {
  return json{{"vocabulary", features.vocabulary}, {"scale", features.scale}, {"gram", matrix_to_json(features.gram)}};
}

LabelFeatures label_features_from_json(const json& j) {
  LabelFeatures features;
  features.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  features.scale = j.at("scale").get<double>();
  features.gram = matrix_from_json(j.at("gram"));
  rebuild_index(features);
  return features;
}

json to_json(const TopicModel& model) {
  return json{{"vocabulary", model.vocabulary},
              {"alpha", model.alpha},
              {"beta", model.beta},
              {"seed", model.seed},
              {"topic_word", matrix_to_json(model.topic_word)}};
}

TopicModel topic_model_from_json(const json& j) {
  TopicModel model;
  model.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  model.alpha = j.at("alpha").get<double>();
  model.beta = j.at("beta").get<double>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.topic_word = matrix_from_json(j.at("topic_word"));
  return model;
}

}  // namespace cezsl
