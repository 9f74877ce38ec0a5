#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cezsl/semantics.hpp"

namespace cezsl {

TopicModel fit_lda(std::span<const Document> documents, const std::vector<std::string>& vocabulary,
                   const LdaConfig& config) {
  if (config.topics < 2) throw Error(Errc::config, "LDA needs at least 2 topics");
  if (config.iterations < 1) throw Error(Errc::config, "LDA needs at least one iteration");
  if (!(config.beta > 0.0)) throw Error(Errc::config, "LDA beta must be positive");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], i);

  std::vector<std::vector<std::size_t>> words(documents.size());
  std::unordered_set<std::size_t> distinct;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& label : documents[d].labels) {
      auto it = index.find(label);
      if (it == index.end())
        throw Error(Errc::domain, "label '" + label + "' of document '" + documents[d].doc_id + "' is not in the LDA vocabulary");
      words[d].push_back(it->second);
      distinct.insert(it->second);
    }
  }
  if (distinct.size() < config.topics)
    throw Error(Errc::config, "corpus has " + std::to_string(distinct.size()) + " distinct labels, fewer than " +
                                  std::to_string(config.topics) + " topics");

  const std::size_t K = config.topics;
  const std::size_t V = vocabulary.size();
  const double alpha = config.effective_alpha();
  const double beta = config.beta;
  const double v_beta = static_cast<double>(V) * beta;

  Rng rng(derive_seed(config.seed, "fit_lda"));
  std::vector<std::vector<std::size_t>> z(documents.size());
  Matrix n_dk(documents.size(), K);
  Matrix n_kw(K, V);
  Vector n_k(K, 0.0);
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (std::size_t w : words[d]) {
      const std::size_t k = rng.index(K);
      z[d].push_back(k);
      n_dk(d, k) += 1;
      n_kw(k, w) += 1;
      n_k[k] += 1;
    }
  }

  Matrix phi_sum(K, V);
  std::size_t samples = 0;
  Vector p(K);
  const std::size_t burn_in = config.iterations / 2;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t d = 0; d < documents.size(); ++d) {
      for (std::size_t t = 0; t < words[d].size(); ++t) {
        const std::size_t w = words[d][t];
        std::size_t k = z[d][t];
        n_dk(d, k) -= 1;
        n_kw(k, w) -= 1;
        n_k[k] -= 1;
        for (std::size_t j = 0; j < K; ++j) p[j] = (n_dk(d, j) + alpha) * (n_kw(j, w) + beta) / (n_k[j] + v_beta);
        k = rng.discrete(p);
        z[d][t] = k;
        n_dk(d, k) += 1;
        n_kw(k, w) += 1;
        n_k[k] += 1;
      }
    }
    if (it >= burn_in) {
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t w = 0; w < V; ++w) phi_sum(k, w) += (n_kw(k, w) + beta) / (n_k[k] + v_beta);
      ++samples;
    }
  }

  TopicModel model;
  model.vocabulary = vocabulary;
  model.alpha = alpha;
  model.beta = beta;
  model.seed = config.seed;
  model.topic_word = Matrix(K, V);
  for (std::size_t k = 0; k < K; ++k) {
    double total = 0.0;
    for (std::size_t w = 0; w < V; ++w) total += phi_sum(k, w);
    for (std::size_t w = 0; w < V; ++w) model.topic_word(k, w) = phi_sum(k, w) / total;
  }
  (void)samples;
  return model;
}

ContextHistogram infer_context(const TopicModel& model, const Document& doc, const InferConfig& config) {
  if (config.sweeps < 1) throw Error(Errc::config, "context inference needs at least one sweep");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i) index.emplace(model.vocabulary[i], i);

  std::vector<std::size_t> words;
  for (const auto& label : doc.labels) {
    auto it = index.find(label);
    if (it == index.end()) {
      spdlog::debug("context inference for '{}' drops unknown label '{}'", doc.doc_id, label);
      continue;
    }
    words.push_back(it->second);
  }
  if (words.empty())
    throw Error(Errc::inference, "document '" + doc.doc_id + "' has no label known to the topic model");
  std::sort(words.begin(), words.end());

  std::string key;
  for (std::size_t w : words) key += model.vocabulary[w] + '\x1f';
  Rng rng(derive_seed(config.seed, key));

  const std::size_t K = model.topic_count();
  const double alpha = model.alpha;
  Vector n_k(K, 0.0);
  std::vector<std::size_t> z(words.size());
  for (std::size_t t = 0; t < words.size(); ++t) {
    z[t] = rng.index(K);
    n_k[z[t]] += 1;
  }

  const double denom = static_cast<double>(words.size()) + static_cast<double>(K) * alpha;
  Vector theta_sum(K, 0.0);
  Vector p(K);
  const std::size_t burn_in = config.sweeps / 2;
  for (std::size_t sweep = 0; sweep < config.sweeps; ++sweep) {
    for (std::size_t t = 0; t < words.size(); ++t) {
      n_k[z[t]] -= 1;
      for (std::size_t k = 0; k < K; ++k) p[k] = model.topic_word(k, words[t]) * (n_k[k] + alpha);
      z[t] = rng.discrete(p);
      n_k[z[t]] += 1;
    }
    if (sweep >= burn_in)
      for (std::size_t k = 0; k < K; ++k) theta_sum[k] += (n_k[k] + alpha) / denom;
  }
  const double total = std::accumulate(theta_sum.begin(), theta_sum.end(), 0.0);
  ContextHistogram hist{Vector(K)};
  for (std::size_t k = 0; k < K; ++k) hist.values[k] = theta_sum[k] / total;
  return hist;
}

}  // namespace cezsl
