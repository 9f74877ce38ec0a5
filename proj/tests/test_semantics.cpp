#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cezsl/semantics.hpp"

using namespace cezsl;

namespace {

std::vector<Document> docs(std::initializer_list<std::pair<const char*, std::vector<std::string>>> list) {
  std::vector<Document> out;
  for (const auto& [id, labels] : list) out.push_back(make_document(id, labels));
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_SUITE("semantics") {
  TEST_CASE("tf-idf usage") {
    const auto d = docs({{"d0", {"a", "b"}}, {"d1", {"b"}}, {"d2", {"b", "c"}}, {"d3", {"b"}}});
    const auto u = tfidf_usage(d, {"a", "b", "c", "unused"});
    CHECK(u.weights(0, 0) == doctest::Approx(std::log(4.0)));
    for (std::size_t j = 1; j < 4; ++j) CHECK(u.weights(0, j) == 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.weights(1, j) == 0.0);  // in every document
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.weights(3, j) == 0.0);
    // a and c never co-occur
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.weights(0, j) * u.weights(2, j) == 0.0);
    const auto back = usage_from_json(to_json(u));
    CHECK(back.weights == u.weights);
  }

  TEST_CASE("label feature gram by hand") {
    const auto d = docs({{"d0", {"x", "y"}}, {"d1", {"y", "z"}}, {"d2", {"x"}}});
    const auto u = tfidf_usage(d, {"x", "y", "z"});
    const double l32 = std::log(1.5), l3 = std::log(3.0);
    // usage rows: x = (l32, 0, l32), y = (l32, l32, 0), z = (0, l3, 0)
    const double expected[3][3] = {{2 * l32 * l32, l32 * l32, 0.0},
                                   {l32 * l32, 2 * l32 * l32, l32 * l3},
                                   {0.0, l32 * l3, l3 * l3}};
    const auto f = label_features(u);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CHECK(f.gram(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-14));
        CHECK(f.gram(i, j) == f.gram(j, i));
      }
    const double mx = l3 * l3;
    CHECK(f.scale == doctest::Approx(1.0 / mx));
    const auto row = f.feature("z");
    CHECK(row[2] == doctest::Approx(1.0));
    CHECK(f.contains("y"));
    CHECK(!f.contains("w"));
    CHECK_THROWS_AS(f.index_of("w"), Error);
    const auto back = label_features_from_json(to_json(f));
    CHECK(back.gram == f.gram);
    CHECK(back.feature("x") == f.feature("x"));
  }

  TEST_CASE("bow targets") {
    const std::vector<std::string> v{"a", "b", "c", "d"};
    CHECK(bow_target(make_document("x", {"a"}), v).values == Vector{1, -1, -1, -1});
    CHECK(bow_target(make_document("x", v), v).values == Vector{1, 1, 1, 1});
    CHECK(flipped(bow_target(make_document("x", {"b", "d"}), v)).values == Vector{1, -1, 1, -1});
  }

  TEST_CASE("divergence and similarity") {
    ContextHistogram a{{0.9, 0.1}}, b{{0.1, 0.9}};
    CHECK(context_divergence(a, b) == doctest::Approx(1.6 * std::log(9.0)).epsilon(1e-12));
    CHECK(context_divergence(a, b) == context_divergence(b, a));
    CHECK(context_divergence(a, a) == 0.0);
    CHECK(context_similarity(a, a, 3.0) == 1.0);
    // lambda * divergence = 2 ln 2 gives one half
    ContextHistogram c{{2.0 / 3.0, 1.0 / 3.0}}, e{{1.0 / 3.0, 2.0 / 3.0}};
    const double dv = context_divergence(c, e);
    CHECK(dv == doctest::Approx(2.0 / 3.0 * std::log(2.0)));
    CHECK(context_similarity(c, e, 2.0 * std::log(2.0) / dv) == doctest::Approx(0.5));
    CHECK(context_similarity(a, b, 1.0) < context_similarity(c, e, 1.0));
    CHECK_THROWS_AS(context_divergence(ContextHistogram{{1.0, 0.0}}, a), Error);
    CHECK_THROWS_AS(context_divergence(ContextHistogram{{1.0}}, a), Error);
    CHECK_THROWS_AS(context_similarity(a, b, 0.0), Error);
  }

  TEST_CASE("lda recovers planted disjoint topics") {
    Rng rng(3);
    const std::vector<std::vector<std::string>> planted{
        {"a0", "a1", "a2", "a3"}, {"b0", "b1", "b2", "b3"}, {"c0", "c1", "c2", "c3"}};
    std::vector<std::string> vocab;
    for (const auto& t : planted) vocab.insert(vocab.end(), t.begin(), t.end());
    std::vector<Document> corpus;
    for (int i = 0; i < 300; ++i) {
      const auto& t = planted[i % 3];
      std::vector<std::string> labels;
      for (int k = 0; k < 3; ++k) labels.push_back(t[rng.index(4)]);
      corpus.push_back(make_document("d" + std::to_string(i), labels));
    }
    LdaConfig cfg;
    cfg.topics = 3;
    cfg.alpha = 0.1;
    cfg.iterations = 200;
    cfg.seed = 5;
    const auto model = fit_lda(corpus, vocab, cfg);
    REQUIRE(model.topic_count() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0.0;
      for (double x : model.topic_word.row(k)) {
        CHECK(x > 0.0);
        s += x;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    std::vector<std::size_t> perm{0, 1, 2};
    double best = 0.0;
    do {
      double worst = 1.0;
      for (std::size_t k = 0; k < 3; ++k) {
        Vector ind(vocab.size(), 0.0);
        for (std::size_t w = 4 * perm[k]; w < 4 * perm[k] + 4; ++w) ind[w] = 0.25;
        worst = std::min(worst, cosine(model.topic_word.row(k), ind));
      }
      best = std::max(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(best >= 0.9);

    const auto again = fit_lda(corpus, vocab, cfg);
    CHECK(again.topic_word == model.topic_word);
    const auto back = topic_model_from_json(to_json(model));
    CHECK(back.topic_word == model.topic_word);

    // concentration on the planted topic
    const Document doc = make_document("q", {"b0", "b2"});
    const auto h = infer_context(model, doc, {200, 1});
    const double total = std::accumulate(h.values.begin(), h.values.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    const double mode = *std::max_element(h.values.begin(), h.values.end());
    CHECK(mode >= (2.0 - 0.2 + model.alpha) / (2.0 + 3.0 * model.alpha));
    CHECK(infer_context(model, doc, {200, 1}).values == h.values);
    const Document reordered = make_document("r", {"b2", "b0", "zzz"});
    CHECK(infer_context(model, reordered, {200, 1}).values == h.values);
  }

  TEST_CASE("lda preconditions") {
    const auto d = docs({{"d0", {"a", "b"}}});
    LdaConfig cfg;
    cfg.topics = 1;
    CHECK_THROWS_AS(fit_lda(d, {"a", "b"}, cfg), Error);
    cfg.topics = 3;
    CHECK_THROWS_AS(fit_lda(d, {"a", "b"}, cfg), Error);
    cfg.topics = 2;
    cfg.iterations = 0;
    CHECK_THROWS_AS(fit_lda(d, {"a", "b"}, cfg), Error);
    CHECK(LdaConfig{}.effective_alpha() == doctest::Approx(50.0 / 19.0));
  }

  TEST_CASE("fold-in inference matches exact enumeration") {
    TopicModel m;
    m.vocabulary = {"u", "v", "w"};
    m.topic_word = Matrix(2, 3);
    const double rows[2][3] = {{0.6, 0.3, 0.1}, {0.1, 0.2, 0.7}};
    for (int k = 0; k < 2; ++k)
      for (int w = 0; w < 3; ++w) m.topic_word(k, w) = rows[k][w];
    m.alpha = 0.5;
    const std::size_t words[2] = {0, 2};
    // posterior over (z1, z2) with the Dirichlet-multinomial prior integrated out
    Vector expected(2, 0.0);
    double z = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        double n[2] = {0, 0};
        n[a] += 1;
        n[b] += 1;
        const double prior = std::tgamma(n[0] + m.alpha) * std::tgamma(n[1] + m.alpha);
        const double w = prior * rows[a][words[0]] * rows[b][words[1]];
        z += w;
        for (int k = 0; k < 2; ++k) expected[k] += w * (n[k] + m.alpha) / (2.0 + 2.0 * m.alpha);
      }
    for (auto& x : expected) x /= z;
    const auto h = infer_context(m, make_document("d", {"u", "w"}), {60000, 3});
    CHECK(h.values[0] == doctest::Approx(expected[0]).epsilon(0.01));
    CHECK(h.values[1] == doctest::Approx(expected[1]).epsilon(0.01));
    CHECK_THROWS_AS(infer_context(m, make_document("d", {"nope"})), Error);
  }
}
