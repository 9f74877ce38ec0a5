// Acceptance driver: `acceptance [n]` checks criterion n (or all of them)
// and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "cezsl/concept_space.hpp"
#include "cezsl/evaluation.hpp"
#include "cezsl/experiment.hpp"
#include "cezsl/im_regressor.hpp"
#include "cezsl/semantics.hpp"
#include "cezsl/siamese.hpp"
#include "cezsl/simd/kernels.hpp"
#include "oracles.hpp"

using namespace cezsl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path source_dir() { return fs::path(CEZSL_SOURCE_DIR); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cezsl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig bundled_config() { return load_config(source_dir() / "configs/synthetic.json"); }

// 1: analytic gradients against central differences
Verdict gradients() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst_total = 0, worst_pred = 0, worst_dist = 0;
  for (int t = 0; t < 100; ++t) {
    const auto kind = static_cast<PairCase>(t % 3);
    const auto params = init_network({10, 8, 4, 10}, 500 + static_cast<std::uint64_t>(t));
    const auto pair = oracle::random_pair(rng, 10, 10, kind);
    CeHyperParams h;
    h.code_size = 4;
    h.alpha = rng.uniform(0.2, 2.0);
    h.rho = rng.uniform(0.2, 0.8);

    auto fd = [&](const std::function<double(const SubNetworkParams&)>& f) {
      return oracle::numeric_gradient(params, f, 1e-5);
    };
    const auto total = oracle::flatten(gradient(pair, params, h));
    worst_total = std::max(worst_total, oracle::max_relative_error(
                                            total, fd([&](const SubNetworkParams& q) { return total_loss(pair, q, h); }), 1e-4));

    CeHyperParams h0 = h;
    h0.alpha = 0.0;
    const auto pred = oracle::flatten(gradient(pair, params, h0));
    worst_pred = std::max(worst_pred, oracle::max_relative_error(
                                          pred, fd([&](const SubNetworkParams& q) { return total_loss(pair, q, h0); }), 1e-4));

    std::vector<double> dist(total.size());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = (total[i] - pred[i]) / h.alpha;
    const auto dist_fd = fd([&](const SubNetworkParams& q) {
      return distance_loss(forward(q, pair.input1).code(), forward(q, pair.input2).code(), pair.similarity, pair.kind,
                           h.effective_beta(), h.rho);
    });
    worst_dist = std::max(worst_dist, oracle::max_relative_error(dist, dist_fd, 1e-4));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_total <= 1e-4 && worst_pred <= 1e-4 && worst_dist <= 1e-4 && secs < 60.0;
  return {pass, fmt("max rel err total %.2e prediction %.2e distance %.2e over 100 nets, %.1fs", worst_total, worst_pred,
                    worst_dist, secs)};
}

// 2: loss values at known points
Verdict loss_fixed_points() {
  const Vector y{1, -1};
  const Vector a{0.0, 0.0}, b{0.6, 0.8};
  struct Case {
    const char* what;
    double got, want;
  };
  const Case cases[] = {
      {"prediction at 0", prediction_loss(y, Vector{0.0, 0.0}), 0.0},
      {"prediction at (0.5,-0.5)", prediction_loss(y, Vector{0.5, -0.5}), -std::log(1.5)},
      {"positive pair, equal codes", distance_loss(a, a, 1.0, PairCase::both_positive, 2.0, 0.5), 0.0},
      {"positive pair, d = S beta", distance_loss(a, b, 0.5, PairCase::both_positive, 2.0, 0.5), 0.0},
      {"mixed pair beyond margin", distance_loss(a, b, 0.3, PairCase::mixed, 1.0, 0.5), 0.0},
      {"mixed pair inside margin", distance_loss(a, b, 0.25, PairCase::mixed, 2.0, 0.5), 0.25},
      {"negative pair, equal codes", distance_loss(a, a, 0.5, PairCase::both_negative, 2.0, 0.5), 0.5},
  };
  std::string failed;
  for (const auto& c : cases)
    if (std::abs(c.got - c.want) > 1e-12) failed += fmt(" [%s: %.15g != %.15g]", c.what, c.got, c.want);
  // the prediction loss falls monotonically toward the target
  double prev = prediction_loss(y, Vector{-0.95, 0.0});
  for (double v = -0.9; v < 0.96; v += 0.05) {
    const double now = prediction_loss(y, Vector{v, 0.0});
    if (!(now < prev)) failed += fmt(" [not monotone at %.2f]", v);
    prev = now;
  }
  if (!std::isfinite(prediction_loss(y, Vector{-1.0, 1.0}))) failed += " [saturated prediction not finite]";
  return {failed.empty(), failed.empty() ? std::string("7 fixed points exact, monotone, finite at saturation") : failed};
}

// 3: nu-SVR against the dense oracle
Verdict svr_oracle() {
  const auto t0 = Clock::now();
  Rng rng(77);
  double worst_obj = 0, worst_eq = 0, worst_budget = 0, worst_pred = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 6 + rng.index(25);
    const std::size_t dim = 1 + rng.index(4);
    std::vector<Vector> x;
    Vector y;
    for (std::size_t i = 0; i < n; ++i) {
      Vector v(dim);
      for (auto& e : v) e = rng.uniform(-1, 1);
      y.push_back(std::cos(1.5 * v[0]) - 0.7 * v[dim - 1] + rng.normal(0, 0.1));
      x.push_back(std::move(v));
    }
    SvrConfig cfg;
    cfg.nu = rng.uniform(0.1, 0.9);
    cfg.C = rng.uniform(0.5, 30.0);
    cfg.kernel.type = t % 2 ? KernelType::linear : KernelType::rbf;
    cfg.kernel.gamma = rng.uniform(0.2, 2.0);
    const Matrix K = kernel_matrix(x, cfg.kernel);
    const auto sol = solve_nu_svr(K, y, cfg);
    const auto ref = oracle::projected_gradient_nu_svr(K, y, cfg.C, cfg.nu);
    worst_obj = std::max(worst_obj, sol.objective - ref.objective);
    double eq = 0, budget = 0, box = 0;
    for (std::size_t i = 0; i < n; ++i) {
      eq += sol.alpha[i] - sol.alpha_star[i];
      budget += sol.alpha[i] + sol.alpha_star[i];
      for (double a : {sol.alpha[i], sol.alpha_star[i]})
        box = std::max({box, -a, a - cfg.C / static_cast<double>(n)});
    }
    worst_eq = std::max({worst_eq, std::abs(eq), box});
    worst_budget = std::max(worst_budget, budget - cfg.C * cfg.nu);
    const auto coef = sol.coefficients();
    for (std::size_t i = 0; i < n; ++i) {
      double f = sol.bias, g = ref.bias;
      for (std::size_t j = 0; j < n; ++j) {
        f += coef[j] * K(i, j);
        g += (ref.alpha_star[j] - ref.alpha[j]) * K(i, j);
      }
      worst_pred = std::max(worst_pred, std::abs(f - g));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_obj <= 1e-6 && worst_eq <= 1e-8 && worst_budget <= 1e-8 && worst_pred <= 1e-3 && secs < 120.0;
  return {pass, fmt("objective excess %.2e, equality/box %.2e, budget %.2e, prediction gap %.2e, %.1fs", worst_obj,
                    worst_eq, worst_budget, worst_pred, secs)};
}

// 4: metric fixtures and invariance under monotone score transforms
Verdict metrics() {
  std::string failed;
  const std::vector<std::string> ab{"a", "b"};
  RankedScores r{"doc", {{"a", 0.5}, {"x", 0.25}, {"b", 0.125}, {"y", 0.0625}}};
  if (e_map(ab, r) != 0.75) failed += " [E-MAP fixture]";
  const std::vector<std::string> ids{"i1", "i2", "i3", "i4"};
  const std::vector<double> s{0.9, 0.7, 0.5, 0.1};
  if (*c_map(ids, s, {"i1", "i3"}) != 28.0 / 33.0) failed += " [C-MAP fixture]";

  // the bundled score fixture against its hand-computed table
  const auto fixtures = source_dir() / "tests/fixtures";
  const auto j = read_json(fixtures / "scores.json");
  std::vector<RankedScores> ranked;
  for (const auto& e : j.at("scores")) ranked.push_back(ranked_scores_from_json(e));
  const auto truth = load_corpus(fixtures / "truth.jsonl");
  SubsetRules rules;
  rules.train = {"a", "b", "c", "x"};
  const auto m = evaluate_trial(ranked, truth.documents, rules);
  if (std::abs(*m.at(Subset::all).e_map - 0.375) > 1e-15 || std::abs(*m.at(Subset::all).c_map - 2.0 / 3.0) > 1e-15)
    failed += " [score-file fixture]";

  Rng rng(404);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::string> universe;
    for (int l = 0; l < 8; ++l) universe.push_back("l" + std::to_string(l));
    std::vector<Document> docs;
    std::vector<RankedScores> raw, transformed;
    const std::size_t n = 3 + rng.index(10);
    for (std::size_t d = 0; d < n; ++d) {
      auto labels = universe;
      rng.shuffle(labels);
      labels.resize(1 + rng.index(4));
      docs.push_back(make_document("d" + std::to_string(d), labels));
      RankedScores rs{docs.back().doc_id, {}};
      for (const auto& l : universe) rs.scores.emplace_back(l, std::round(rng.uniform() * 10) / 10);
      std::stable_sort(rs.scores.begin(), rs.scores.end(), [](auto& a, auto& b) { return a.second > b.second; });
      RankedScores ts = rs;
      for (auto& [l, v] : ts.scores) v = std::exp(3.0 * v) + 0.25;
      raw.push_back(rs);
      transformed.push_back(ts);
    }
    SubsetRules sr;
    sr.train = {universe.begin(), universe.begin() + 5};
    sr.zsl = {universe.begin() + 5, universe.end()};
    const auto a = evaluate_trial(raw, docs, sr), b = evaluate_trial(transformed, docs, sr);
    if (to_json(a) != to_json(b)) failed += fmt(" [invariance fixture %d]", t);
    ++checked;
  }
  return {failed.empty(), failed.empty() ? fmt("fixtures exact; %d monotone-transform fixtures invariant", checked) : failed};
}

// 5: priming over random stores
Verdict priming() {
  simd::ScopedBackend scalar(simd::Backend::scalar);
  Rng rng(55);
  double worst_sum = 0;
  std::size_t argmax_bad = 0, distance_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dim = 1 + rng.index(12);
    ConceptStore store(dim);
    std::vector<std::string> universe;
    std::vector<std::vector<Vector>> recs;
    const std::size_t labels = 2 + rng.index(10);
    for (std::size_t l = 0; l < labels; ++l) {
      universe.push_back("l" + std::to_string(l));
      recs.emplace_back();
      for (std::size_t k = 0; k < 1 + rng.index(4); ++k) {
        Vector e(dim);
        for (auto& x : e) x = rng.normal();
        recs.back().push_back(e);
        store.add({universe.back(), "d" + std::to_string(k), e});
      }
    }
    Vector q(dim);
    for (auto& x : q) x = rng.normal();
    const auto r = prime(q, store, universe);
    double sum = 0;
    for (const auto& [l, v] : r.scores) sum += v;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    std::size_t nearest = 0;
    double best = INFINITY;
    for (std::size_t l = 0; l < labels; ++l) {
      const double d = oracle::brute_force_min_distance(q, recs[l]);
      if (label_distance(q, universe[l], store) != d) ++distance_bad;
      if (d < best) {
        best = d;
        nearest = l;
      }
    }
    if (r.scores.front().first != universe[nearest]) ++argmax_bad;
  }
  const bool pass = worst_sum <= 1e-9 && argmax_bad == 0 && distance_bad == 0;
  return {pass, fmt("1000 stores: max |sum-1| %.1e, argmax mismatches %zu, inexact distances %zu", worst_sum, argmax_bad,
                    distance_bad)};
}

ConceptEncoder toy_encoder(std::uint64_t seed) {
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f"};
  const std::vector<Document> docs{make_document("s0", {"a", "b"}), make_document("s1", {"b", "c", "f"}),
                                   make_document("s2", {"c", "d", "e"}), make_document("s3", {"a", "e"}),
                                   make_document("s4", {"d", "e", "f"}), make_document("s5", {"a", "c"})};
  auto features = label_features(tfidf_usage(docs, vocab));
  LdaConfig lda;
  lda.topics = 2;
  lda.alpha = 0.5;
  lda.iterations = 30;
  lda.seed = seed;
  auto topics = fit_lda(docs, vocab, lda);
  CeHyperParams h;
  h.hidden = {8};
  h.code_size = 4;
  h.epochs = 5;
  h.learning_rate = 0.01;
  h.batch_size = 4;
  h.seed = seed;
  SemanticsData data;
  data.vocabulary = vocab;
  data.features = features;
  for (const auto& d : docs) data.train.push_back({d, infer_context(topics, d, {20, 1}), bow_target(d, vocab)});
  auto model = train(data, h);
  return ConceptEncoder(std::move(model), std::move(features), std::move(topics), InferConfig{20, 1});
}

// 6: OOV centroid properties
Verdict oov() {
  const auto enc = toy_encoder(12);
  const std::vector<std::string> iv{"a", "b", "c", "d", "e", "f"};
  Rng rng(66);
  std::size_t singleton_bad = 0, order_bad = 0, box_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const auto single = iv[rng.index(iv.size())];
    const std::size_t extra = 1 + rng.index(3);
    std::vector<std::string> with_oov{single};
    for (std::size_t k = 0; k < extra; ++k) with_oov.push_back("unseen" + std::to_string(k));
    rng.shuffle(with_oov);
    if (infer_oov(enc, make_document("s", with_oov)) != enc.embed(single, Document{"s", {single}})) ++singleton_bad;

    auto labels = iv;
    rng.shuffle(labels);
    labels.resize(2 + rng.index(iv.size() - 1));
    labels.push_back("unseen");
    const auto doc = make_document("y", labels);
    const auto c = infer_oov(enc, doc);
    auto shuffled = labels;
    rng.shuffle(shuffled);
    if (infer_oov(enc, make_document("y", shuffled)) != c) ++order_bad;
    const Document ivd = in_vocabulary_part(doc, enc);
    for (std::size_t k = 0; k < c.size(); ++k) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& l : ivd.labels) {
        const double v = enc.embed(l, ivd)[k];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (c[k] < lo || c[k] > hi) ++box_bad;
    }
  }
  const bool pass = singleton_bad == 0 && order_bad == 0 && box_bad == 0;
  return {pass, fmt("100 cases: singleton mismatches %zu, order-dependent %zu, outside bounding box %zu", singleton_bad,
                    order_bad, box_bad)};
}

// 7: divergence and similarity properties
Verdict divergence() {
  Rng rng(7);
  std::size_t bad = 0;
  auto random_hist = [&](std::size_t k) {
    ContextHistogram h{Vector(k)};
    double s = 0;
    for (auto& v : h.values) s += v = rng.uniform(0.01, 1.0);
    for (auto& v : h.values) v /= s;
    return h;
  };
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 2 + rng.index(20);
    const auto p = random_hist(k), q = random_hist(k);
    const double lambda = rng.uniform(0.1, 5.0);
    const double d = context_divergence(p, q);
    if (!(d > 0.0)) ++bad;
    if (d != context_divergence(q, p)) ++bad;
    if (context_divergence(p, p) != 0.0) ++bad;
    const double s = context_similarity(p, q, lambda);
    if (!(s > 0.0 && s < 1.0)) ++bad;
    if (context_similarity(p, p, lambda) != 1.0) ++bad;
    if (std::abs(s - std::exp(-lambda / 2.0 * d)) > 1e-15) ++bad;
    // pulling q toward p lowers the divergence
    ContextHistogram mid{Vector(k)};
    for (std::size_t i = 0; i < k; ++i) mid.values[i] = 0.5 * (p.values[i] + q.values[i]);
    if (!(context_divergence(p, mid) < d)) ++bad;
    if (!(context_similarity(p, mid, lambda) > s)) ++bad;
  }
  const ContextHistogram a{{0.9, 0.1}}, b{{0.1, 0.9}};
  if (std::abs(context_divergence(a, b) - 1.6 * std::log(9.0)) > 1e-12) ++bad;
  return {bad == 0, fmt("500 random pairs: %zu violations (symmetry, positivity, identity, similarity range)", bad)};
}

// 8: zero-shot ranking on the bundled synthetic benchmark
Verdict zsl_benchmark() {
  const auto t0 = Clock::now();
  auto cfg = bundled_config();
  cfg.trials = 5;
  cfg.output_dir = scratch("benchmark");
  const auto r = run_experiment(cfg);
  const double secs = seconds_since(t0);
  if (r.any_failed()) return {false, "a trial failed"};
  const auto& zsl = r.report.e_map.at(Subset::zsl);
  if (!zsl) return {false, "no ZSL E-MAP"};
  const double random = r.report.random_e_map.at(Subset::zsl);
  int dominated = 0;
  std::string per;
  for (const auto& t : r.trials) {
    const double model = *t.metrics.at(Subset::zsl).e_map;
    const double upper = *t.oracle_metrics->at(Subset::zsl).e_map;
    if (upper >= model) ++dominated;
    per += fmt(" %.3f/%.3f", model, upper);
  }
  const bool pass = zsl->mean >= 2.0 * random && dominated >= 4 && secs < 300.0;
  return {pass, fmt("ZSL E-MAP %.4f vs random %.4f; error-free >= model in %d/5 (model/error-free:%s); %.0fs", zsl->mean,
                    random, dominated, per.c_str(), secs)};
}

// 9: relative regression error and its trend with the code size
Verdict regression_trend() {
  const std::vector<Vector> pred{{0.0, 0.0}, {1.0, 1.0}}, truth{{3.0, 4.0}, {1.0, 2.0}};
  const auto fixture = regression_error(pred, truth, 2.0);
  const bool fixture_ok = fixture.mean_error == 3.0 && fixture.relative_error == 1.5;

  std::map<std::size_t, double> mean_eps;
  std::string table;
  for (std::size_t d : {4u, 16u, 64u}) {
    double sum = 0;
    table += fmt(" d=%zu:", d);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto cfg = bundled_config();
      cfg.trials = 1;
      cfg.seed = seed;
      cfg.ce.code_size = d;
      cfg.error_free_oracle = false;
      cfg.output_dir = scratch("trend");
      const auto r = run_experiment(cfg, std::nullopt, Stage::evaluate);
      if (r.any_failed() || !r.trials[0].regression) return {false, fmt("run failed at d=%zu seed=%llu", d, (unsigned long long)seed)};
      const double eps = r.trials[0].regression->relative_error;
      table += fmt(" %.3f", eps);
      sum += eps;
    }
    mean_eps[d] = sum / 3.0;
  }
  const bool trend = mean_eps[4] > mean_eps[16] && mean_eps[16] > mean_eps[64];
  return {fixture_ok && trend, fmt("fixture eps %.3f (%s); mean eps d=4 %.4f, d=16 %.4f, d=64 %.4f;%s", fixture.relative_error,
                                   fixture_ok ? "ok" : "wrong", mean_eps[4], mean_eps[16], mean_eps[64], table.c_str())};
}

std::map<std::string, std::string> artifact_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

std::uint64_t tree_hash(const std::map<std::string, std::string>& tree) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  };
  for (const auto& [name, body] : tree) {
    mix(name);
    mix(body);
  }
  return h;
}

// 10: reruns reproduce every artifact byte for byte
Verdict reproducibility() {
  auto cfg = bundled_config();
  cfg.trials = 2;
  cfg.output_dir = scratch("repro");
  run_experiment(cfg);
  const auto first = artifact_tree(cfg.output_dir);
  cfg.threads = 3;
  run_experiment(cfg);
  const auto second = artifact_tree(cfg.output_dir);
  std::size_t differing = 0;
  for (const auto& [name, body] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != body) ++differing;
  }
  const bool pass = first.size() == second.size() && differing == 0 && !first.empty();
  return {pass, fmt("%zu artifacts, %zu differ; tree hash %016llx vs %016llx", first.size(), differing,
                    (unsigned long long)tree_hash(first), (unsigned long long)tree_hash(second))};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"gradient check", gradients},       {"loss fixed points", loss_fixed_points},
      {"nu-SVR vs oracle", svr_oracle},    {"ranking metrics", metrics},
      {"priming", priming},                {"OOV inference", oov},
      {"context divergence", divergence},  {"zero-shot benchmark", zsl_benchmark},
      {"regression error trend", regression_trend}, {"reproducibility", reproducibility},
  };
  std::size_t only = 0;
  if (argc > 1) {
    only = std::strtoul(argv[1], nullptr, 10);
    if (only < 1 || only > criteria.size()) {
      std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria.size());
      return 2;
    }
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && only != i + 1) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %zu (%s): %s - %s\n", i + 1, criteria[i].first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
