#include <doctest.h>

#include <cmath>
#include <map>

#include "cezsl/semantics.hpp"
#include "cezsl/siamese.hpp"
#include "oracles.hpp"

using namespace cezsl;

namespace {

SubNetworkParams tiny_net() {
  // 2-2-2-2 with hand-picked weights
  SubNetworkParams p;
  DenseLayer l1{Matrix(2, 2), {0.1, -0.2}};
  l1.weights(0, 0) = 0.5; l1.weights(0, 1) = -0.3; l1.weights(1, 0) = 0.8; l1.weights(1, 1) = 0.2;
  DenseLayer l2{Matrix(2, 2), {0.0, 0.05}};
  l2.weights(0, 0) = -0.4; l2.weights(0, 1) = 0.9; l2.weights(1, 0) = 0.3; l2.weights(1, 1) = 0.7;
  DenseLayer l3{Matrix(2, 2), {-0.1, 0.2}};
  l3.weights(0, 0) = 1.1; l3.weights(0, 1) = -0.6; l3.weights(1, 0) = 0.25; l3.weights(1, 1) = 0.5;
  p.layers = {l1, l2, l3};
  return p;
}

}  // namespace

TEST_SUITE("siamese") {
  TEST_CASE("forward pass by hand") {
    const auto p = tiny_net();
    const Vector x{0.7, -1.2};
    const double h1[2] = {std::tanh(0.5 * 0.7 - 0.3 * -1.2 + 0.1), std::tanh(0.8 * 0.7 + 0.2 * -1.2 - 0.2)};
    const double h2[2] = {std::tanh(-0.4 * h1[0] + 0.9 * h1[1]), std::tanh(0.3 * h1[0] + 0.7 * h1[1] + 0.05)};
    const double out[2] = {std::tanh(1.1 * h2[0] - 0.6 * h2[1] - 0.1), std::tanh(0.25 * h2[0] + 0.5 * h2[1] + 0.2)};
    const auto f = forward(p, x);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(f.code()[i] - h2[i]) <= 1e-12);
      CHECK(std::abs(f.prediction()[i] - out[i]) <= 1e-12);
    }
    CHECK(embed(p, x) == f.code());
    CHECK_THROWS_AS(forward(p, Vector{1.0}), Error);

    auto zero = p.zeros_like();
    const auto z = forward(zero, x);
    CHECK(z.code() == Vector{0.0, 0.0});
    CHECK(z.prediction() == Vector{0.0, 0.0});
  }

  TEST_CASE("prediction loss examples") {
    const Vector y{1, -1};
    CHECK(prediction_loss(y, Vector{0.0, 0.0}) == 0.0);
    CHECK(prediction_loss(y, Vector{0.5, -0.5}) == doctest::Approx(-std::log(1.5)).epsilon(1e-14));
    CHECK(kappa(Vector{1, -1, -1, -1}, KappaRule::negatives_fraction) == 0.75);
    CHECK(kappa(Vector{1, -1, -1, -1}, KappaRule::positives_fraction) == 0.25);
    // moving one coordinate toward its target lowers the loss
    double prev = prediction_loss(y, Vector{-0.9, 0.0});
    for (double v = -0.8; v < 0.99; v += 0.1) {
      const double now = prediction_loss(y, Vector{v, 0.0});
      CHECK(now < prev);
      prev = now;
    }
    CHECK(std::isfinite(prediction_loss(y, Vector{-1.0, 1.0})));
  }

  TEST_CASE("distance loss examples") {
    const Vector a{0.0, 0.0}, b{0.6, 0.8};
    CHECK(distance_loss(a, a, 1.0, PairCase::both_positive, 2.0, 0.5) == 0.0);
    CHECK(distance_loss(a, b, 0.3, PairCase::mixed, 1.0, 0.5) == 0.0);
    CHECK(distance_loss(a, a, 0.5, PairCase::both_negative, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(distance_loss(a, b, 0.5, PairCase::both_positive, 2.0, 0.5) == 0.0);
    CHECK(distance_loss(a, b, 0.25, PairCase::mixed, 2.0, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(distance_loss(a, Vector{1.0}, 1.0, PairCase::mixed, 1.0, 0.5), Error);
  }

  TEST_CASE("total loss composes the parts") {
    const auto p = tiny_net();
    CeHyperParams h;
    h.code_size = 2;
    h.alpha = 0.7;
    ConceptPair pair{{0.2, 0.4}, {-0.5, 0.1}, {1, -1}, {-1, 1}, 0.6, PairCase::mixed};
    const auto f1 = forward(p, pair.input1), f2 = forward(p, pair.input2);
    const double expected = prediction_loss(pair.target1, f1.prediction()) +
                            prediction_loss(pair.target2, f2.prediction()) +
                            0.7 * distance_loss(f1.code(), f2.code(), 0.6, PairCase::mixed, std::sqrt(2.0), 0.5);
    CHECK(total_loss(pair, p, h) == doctest::Approx(expected).epsilon(1e-14));
    h.alpha = 0.0;
    CHECK(total_loss(pair, p, h) == doctest::Approx(prediction_loss(pair.target1, f1.prediction()) +
                                                    prediction_loss(pair.target2, f2.prediction())));
    // identical positive inputs with S = 1: E = 0 and no distance term
    h.alpha = 1.0;
    ConceptPair same{{0.2, 0.4}, {0.2, 0.4}, {1, -1}, {1, -1}, 1.0, PairCase::both_positive};
    CHECK(total_loss(same, p, h) == doctest::Approx(2.0 * prediction_loss(same.target1, f1.prediction())));
    double reported = 0.0;
    const auto g = gradient(same, p, h, &reported);
    CHECK(reported == doctest::Approx(total_loss(same, p, h)));
    h.alpha = 0.0;
    CHECK(g == gradient(same, p, h));
  }

  TEST_CASE("gradients match central differences") {
    Rng rng(21);
    CeHyperParams h;
    h.code_size = 4;
    for (int trial = 0; trial < 12; ++trial) {
      const auto kind = static_cast<PairCase>(trial % 3);
      const auto params = init_network({10, 8, 4, 10}, 100 + trial);
      const auto pair = oracle::random_pair(rng, 10, 10, kind);
      const auto analytic = oracle::flatten(gradient(pair, params, h));
      const auto numeric =
          oracle::numeric_gradient(params, [&](const SubNetworkParams& q) { return total_loss(pair, q, h); }, 1e-5);
      CHECK(oracle::max_relative_error(analytic, numeric, 1e-4) <= 1e-4);
    }
  }

  TEST_CASE("init determinism and pretraining") {
    CHECK(init_network({5, 4, 3, 5}, 9) == init_network({5, 4, 3, 5}, 9));
    CHECK(!(init_network({5, 4, 3, 5}, 9) == init_network({5, 4, 3, 5}, 10)));
    const auto p = init_network({5, 4, 3, 5}, 9);
    CHECK(p.layer_sizes() == std::vector<std::size_t>{5, 4, 3, 5});
    CHECK(p.code_size() == 3);
    CHECK(p.parameter_count() == 4 * 5 + 4 + 3 * 4 + 3 + 5 * 3 + 5);
    const double limit = std::sqrt(6.0 / 9.0);
    for (double w : p.layers[0].weights.data()) CHECK(std::abs(w) <= limit);

    Rng rng(2);
    Matrix data(40, 5);
    for (double& x : data.data()) x = rng.uniform(-1, 1);
    PretrainTrace trace;
    const auto pre = init_network({5, 4, 3, 5}, 9, true, &data, 10, 0.05, &trace);
    REQUIRE(trace.reconstruction_error.size() == 2);
    const auto& e = trace.reconstruction_error[0];
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] <= e[i - 1]);
    CHECK(!(pre == p));
    Matrix wrong(3, 4);
    CHECK_THROWS_AS(init_network({5, 4, 3, 5}, 9, true, &wrong), Error);
    CHECK_THROWS_AS(init_network({5, 4}, 9), Error);
  }

  TEST_CASE("negative examples") {
    const std::vector<std::string> ab{"a", "b"};
    Rng rng(5);
    const auto d = make_document("d", {"a"});
    for (int i = 0; i < 20; ++i) CHECK(*draw_negative_label(d, ab, rng) == "b");
    CHECK(!draw_negative_label(make_document("e", ab), ab, rng));

    const std::vector<std::string> abc{"a", "b", "c"};
    const auto usage = tfidf_usage(std::vector<Document>{d, make_document("e", {"b", "c"})}, abc);
    const auto feats = label_features(usage);
    ContextualDocument cd{d, ContextHistogram{{0.5, 0.5}}, bow_target(d, abc)};
    const auto neg = make_negative(cd, abc, feats, rng);
    REQUIRE(neg);
    CHECK(neg->target.values == Vector{-1, 1, 1});
    CHECK(neg->polarity == Polarity::negative);
    CHECK(neg->context.values == cd.context.values);
    CHECK(neg->label != "a");

    std::vector<std::string> v10;
    for (int i = 0; i < 10; ++i) v10.push_back("l" + std::to_string(i));
    const auto d3 = make_document("x", {"l1", "l4", "l7"});
    std::map<std::string, int> counts;
    for (int i = 0; i < 10000; ++i) ++counts[*draw_negative_label(d3, v10, rng)];
    CHECK(counts.size() == 7);
    for (const auto& [label, n] : counts) {
      CHECK(!d3.has(label));
      CHECK(std::abs(n - 10000.0 / 7.0) <= 0.2 * 10000.0 / 7.0);
    }
  }

  TEST_CASE("training separates planted contexts") {
    const std::vector<std::string> vocab{"a", "b", "c", "d"};
    std::vector<Document> docs;
    for (int i = 0; i < 20; ++i) {
      docs.push_back(make_document("x" + std::to_string(i), i % 2 ? std::vector<std::string>{"a", "b"}
                                                                 : std::vector<std::string>{"a", "b", "c"}));
      docs.push_back(make_document("y" + std::to_string(i), i % 2 ? std::vector<std::string>{"c", "d"}
                                                                 : std::vector<std::string>{"b", "c", "d"}));
    }
    SemanticsData data;
    data.vocabulary = vocab;
    data.features = label_features(tfidf_usage(docs, vocab));
    for (const auto& d : docs) {
      const bool first = d.doc_id[0] == 'x';
      data.train.push_back({d, ContextHistogram{first ? Vector{0.9, 0.1} : Vector{0.1, 0.9}}, bow_target(d, vocab)});
    }
    CeHyperParams h;
    h.hidden = {8};
    h.code_size = 3;
    h.learning_rate = 0.05;
    h.batch_size = 8;
    h.epochs = 200;
    h.seed = 4;

    h.epochs = 0;
    const auto untrained = train(data, h);
    CHECK(untrained.params == init_network({4 + 2, 8, 3, 4}, 4));
    h.epochs = 200;
    const auto model = train(data, h);
    REQUIRE(model.trace.train_loss.size() == 200);
    CHECK(model.trace.train_loss.back() < model.trace.train_loss.front());

    std::vector<std::pair<int, Vector>> codes;
    for (const auto& cd : data.train)
      for (const auto& l : cd.doc.labels)
        codes.emplace_back(cd.doc.doc_id[0] == 'x' ? 0 : 1, embed(model, data.features.feature(l), cd.context));
    double within = 0, across = 0;
    int nw = 0, na = 0;
    for (std::size_t i = 0; i < codes.size(); ++i)
      for (std::size_t j = i + 1; j < codes.size(); ++j) {
        const double d = oracle::dist(codes[i].second, codes[j].second);
        if (codes[i].first == codes[j].first) within += d, ++nw;
        else across += d, ++na;
      }
    CHECK(within / nw < across / na);
    for (const auto& [g, c] : codes)
      for (double v : c) CHECK(std::abs(v) < 1.0);

    // same concept twice is the same vector; contexts move the embedding
    const auto fa = data.features.feature("b");
    CHECK(embed(model, fa, ContextHistogram{{0.9, 0.1}}) == embed(model, fa, ContextHistogram{{0.9, 0.1}}));
    CHECK(embed(model, fa, ContextHistogram{{0.9, 0.1}}) != embed(model, fa, ContextHistogram{{0.1, 0.9}}));
    CHECK_THROWS_AS(embed(model, Vector{1.0}, ContextHistogram{{0.5, 0.5}}), Error);

    const auto back = siamese_model_from_json(to_json(model));
    CHECK(back.params == model.params);
    CHECK(back.vocabulary == model.vocabulary);
  }

  TEST_CASE("hyperparameter validation") {
    CeHyperParams h;
    CHECK(h.effective_beta() == doctest::Approx(std::sqrt(10.0)));
    h.rho = 1.5;
    CHECK_THROWS_AS(h.validate(), Error);
    h = {};
    h.learning_rate = 0.0;
    CHECK_THROWS_AS(h.validate(), Error);
    h = {};
    const auto j = to_json(h);
    CHECK(to_json(ce_hyper_from_json(j)) == j);
  }
}
