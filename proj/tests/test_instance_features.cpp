#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cezsl/instance_features.hpp"

using namespace cezsl;

namespace {

Matrix two_clusters(std::size_t n, Rng& rng) {
  Matrix m(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = i % 2 ? 5.0 : -5.0;
    m(i, 0) = cx + rng.normal(0, 0.5);
    m(i, 1) = rng.normal(0, 0.5);
  }
  return m;
}

}  // namespace

TEST_SUITE("instance_features") {
  TEST_CASE("component density by hand") {
    GaussianComponent g{{0.0, 1.0}, {1.0, 4.0}, 0.25};
    const Vector f{1.0, 3.0};
    const double expected = -0.5 * (2 * std::log(2 * M_PI) + std::log(4.0) + 1.0 + 1.0);
    CHECK(component_log_density(f, g, false) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(component_log_density(f, g) == doctest::Approx(expected + std::log(0.25)).epsilon(1e-14));
  }

  TEST_CASE("codebook fit separates clusters and EM is monotone") {
    Rng rng(1);
    const Matrix frames = two_clusters(400, rng);
    CodebookConfig cfg;
    cfg.size = 2;
    cfg.em_iterations = 30;
    cfg.seed = 4;
    const auto fit = fit_codebook(frames, cfg);
    REQUIRE(fit.codebook.size() == 2);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9);
    double wsum = 0;
    for (const auto& c : fit.codebook.components) {
      CHECK(std::abs(std::abs(c.mean[0]) - 5.0) < 0.3);
      for (double v : c.variance) CHECK(v >= kVarianceFloor);
      wsum += c.weight;
    }
    CHECK(wsum == doctest::Approx(1.0));
    CHECK(fit.codebook.components[0].mean[0] * fit.codebook.components[1].mean[0] < 0);
    CHECK(to_json(fit_codebook(frames, cfg).codebook) == to_json(fit.codebook));
    CHECK(to_json(codebook_from_json(to_json(fit.codebook))) == to_json(fit.codebook));

    cfg.size = 100;
    CHECK_THROWS_AS(fit_codebook(frames, cfg), Error);
  }

  TEST_CASE("assignment and ABoW") {
    Codebook cb;
    cb.components = {{{0.0}, {1.0}, 0.5}, {{4.0}, {1.0}, 0.5}, {{4.0}, {1.0}, 0.5}};
    CHECK(assign_codeword(Vector{0.3}, cb) == 0);
    CHECK(assign_codeword(Vector{3.9}, cb) == 1);  // tie goes to the lower index
    CHECK(assign_codeword(Vector{2.0}, cb) == 0);
    CHECK_THROWS_AS(assign_codeword(Vector{1.0, 2.0}, cb), Error);
    cb.components[0].weight = 1e-9;
    CHECK(assign_codeword(Vector{1.9}, cb) == 1);
    CHECK(assign_codeword(Vector{1.9}, cb, false) == 0);
    cb.components[0].weight = 0.5;

    FrameSequence fs{"x", Matrix(4, 1)};
    fs.frames(0, 0) = 0.0;
    fs.frames(1, 0) = 0.1;
    fs.frames(2, 0) = 4.2;
    fs.frames(3, 0) = -1.0;
    const auto h = abow(fs, cb);
    CHECK(h == Vector{0.75, 0.25, 0.0});
    CHECK(std::accumulate(h.begin(), h.end(), 0.0) == 1.0);
    CHECK_THROWS_AS(abow(FrameSequence{"e", Matrix(0, 1)}, cb), Error);
  }

  TEST_CASE("deltas") {
    Matrix m(3, 1);
    m(0, 0) = 1;
    m(1, 0) = 4;
    m(2, 0) = 9;
    const auto a = augment_with_deltas(m);
    REQUIRE(a.cols() == 3);
    CHECK(a(0, 1) == 1.5);
    CHECK(a(1, 1) == 4.0);
    CHECK(a(2, 1) == 2.5);
    CHECK(a(1, 2) == 0.5);
    CHECK(a(2, 0) == 9.0);
  }

  TEST_CASE("vector and frame files") {
    const auto dir = std::filesystem::temp_directory_path() / "cezsl_if_test";
    std::filesystem::create_directories(dir);
    std::vector<InstanceVector> v{{"a", {1.0, 2.0}}, {"b", {3.0, -1.5}}};
    save_vectors(v, dir / "v.jsonl");
    const auto back = load_vectors(dir / "v.jsonl", 2);
    REQUIRE(back.size() == 2);
    CHECK(back[1].values == v[1].values);
    CHECK_THROWS_AS(load_vectors(dir / "v.jsonl", 3), Error);
    std::ofstream(dir / "bad.jsonl") << "{\"instance_id\":\"a\",\"values\":[1.0,null]}\n";
    try {
      load_vectors(dir / "bad.jsonl");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::numeric);
    }
    std::ofstream(dir / "mixed.jsonl") << "{\"instance_id\":\"a\",\"values\":[1.0]}\n{\"instance_id\":\"b\",\"values\":[1.0,2.0]}\n";
    CHECK_THROWS_AS(load_vectors(dir / "mixed.jsonl"), Error);

    std::vector<FrameSequence> f{{"a", Matrix(2, 3, 0.5)}};
    save_frames(f, dir / "f.jsonl");
    const auto fb = load_frames(dir / "f.jsonl");
    REQUIRE(fb.size() == 1);
    CHECK(fb[0].frames == f[0].frames);
    std::filesystem::remove_all(dir);
  }
}
