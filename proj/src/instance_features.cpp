#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <spdlog/spdlog.h>

#include "cezsl/instance_features.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

using nlohmann::json;

namespace {

double log_sum_exp(std::span<const double> values) {
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Vector global_variance(const Matrix& frames) {
  const std::size_t n = frames.rows();
  const std::size_t d = frames.cols();
  Vector mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) simd::axpy(1.0, frames.row(i), mean);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) var[c] += (frames(i, c) - mean[c]) * (frames(i, c) - mean[c]);
  for (double& v : var) v = std::max(kVarianceFloor, v / static_cast<double>(n));
  return var;
}

std::vector<Vector> kmeanspp_means(const Matrix& frames, std::size_t k, Rng& rng) {
  std::vector<Vector> means;
  const std::size_t n = frames.rows();
  auto first = frames.row(rng.index(n));
  means.emplace_back(first.begin(), first.end());
  Vector d2(n, std::numeric_limits<double>::infinity());
  while (means.size() < k) {
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], simd::squared_distance(frames.row(i), means.back()));
    double total = 0.0;
    for (double v : d2) total += v;
    const std::size_t pick = total > 0.0 ? rng.discrete(d2) : rng.index(n);
    auto row = frames.row(pick);
    means.emplace_back(row.begin(), row.end());
  }
  return means;
}

}  // namespace

double component_log_density(std::span<const double> frame, const GaussianComponent& component, bool include_weight) {
  constexpr double log_two_pi = 1.8378770664093453;  // ln(2 pi)
  double acc = 0.0;
  for (std::size_t c = 0; c < frame.size(); ++c) {
    const double diff = frame[c] - component.mean[c];
    acc += log_two_pi + std::log(component.variance[c]) + diff * diff / component.variance[c];
  }
  const double log_density = -0.5 * acc;
  return include_weight ? log_density + std::log(component.weight) : log_density;
}

CodebookFit fit_codebook(const Matrix& frames, const CodebookConfig& config) {
  const std::size_t k = config.size;
  const std::size_t n = frames.rows();
  const std::size_t d = frames.cols();
  if (k == 0) throw Error(Errc::config, "codebook size must be positive");
  if (n < 10 * k)
    throw Error(Errc::config, "codebook of size " + std::to_string(k) + " needs at least " + std::to_string(10 * k) +
                                  " frames, got " + std::to_string(n));
  if (!all_finite(frames.data())) throw Error(Errc::numeric, "frames contain non-finite values");

  Rng rng(derive_seed(config.seed, "fit_codebook"));
  const Vector var0 = global_variance(frames);
  CodebookFit fit;
  for (auto& mean : kmeanspp_means(frames, k, rng))
    fit.codebook.components.push_back({std::move(mean), var0, 1.0 / static_cast<double>(k)});

  std::vector<bool> reseeded(k, false);
  Matrix resp(n, k);
  Vector logp(k);
  auto e_step = [&] {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) logp[j] = component_log_density(frames.row(i), fit.codebook.components[j]);
      const double lse = log_sum_exp(logp);
      ll += lse;
      for (std::size_t j = 0; j < k; ++j) resp(i, j) = std::exp(logp[j] - lse);
    }
    return ll / static_cast<double>(n);
  };

  for (std::size_t iter = 0; iter < config.em_iterations; ++iter) {
    const double ll = e_step();
    fit.log_likelihood.push_back(ll);
    if (config.tolerance > 0.0 && iter > 0 && ll - fit.log_likelihood[iter - 1] < config.tolerance) break;

    for (std::size_t j = 0; j < k; ++j) {
      auto& comp = fit.codebook.components[j];
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, j);
      const double weight = nk / static_cast<double>(n);
      if (weight < 1e-8) {
        if (reseeded[j]) throw Error(Errc::numeric, "codebook component " + std::to_string(j) + " collapsed twice");
        reseeded[j] = true;
        spdlog::warn("codebook component {} collapsed; re-seeding it", j);
        auto row = frames.row(rng.index(n));
        comp.mean.assign(row.begin(), row.end());
        comp.variance = var0;
        comp.weight = 1.0 / static_cast<double>(k);
        continue;
      }
      Vector mean(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) simd::axpy(resp(i, j), frames.row(i), mean);
      for (double& m : mean) m /= nk;
      Vector var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) var[c] += resp(i, j) * (frames(i, c) - mean[c]) * (frames(i, c) - mean[c]);
      for (double& v : var) v = std::max(kVarianceFloor, v / nk);
      comp = {std::move(mean), std::move(var), weight};
    }
    double total = 0.0;
    for (const auto& comp : fit.codebook.components) total += comp.weight;
    for (auto& comp : fit.codebook.components) comp.weight /= total;
  }
  fit.log_likelihood.push_back(e_step());
  return fit;
}

std::size_t assign_codeword(std::span<const double> frame, const Codebook& codebook, bool include_weight) {
  if (frame.size() != codebook.frame_dim())
    throw Error(Errc::dimension, "frame has " + std::to_string(frame.size()) + " values, codebook expects " +
                                     std::to_string(codebook.frame_dim()));
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < codebook.size(); ++j) {
    const double score = component_log_density(frame, codebook.components[j], include_weight);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

Vector abow(const FrameSequence& frames, const Codebook& codebook, bool include_weight) {
  if (frames.frames.rows() == 0) throw Error(Errc::domain, "instance '" + frames.instance_id + "' has no frames");
  Vector hist(codebook.size(), 0.0);
  for (std::size_t i = 0; i < frames.frames.rows(); ++i)
    hist[assign_codeword(frames.frames.row(i), codebook, include_weight)] += 1.0;
  for (double& h : hist) h /= static_cast<double>(frames.frames.rows());
  return hist;
}

Matrix augment_with_deltas(const Matrix& frames) {
  const std::size_t n = frames.rows();
  const std::size_t d = frames.cols();
  auto delta = [n, d](const Matrix& m) {
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t prev = i == 0 ? 0 : i - 1;
      const std::size_t next = i + 1 == n ? n - 1 : i + 1;
      for (std::size_t c = 0; c < d; ++c) out(i, c) = 0.5 * (m(next, c) - m(prev, c));
    }
    return out;
  };
  const Matrix d1 = delta(frames);
  const Matrix d2 = delta(d1);
  Matrix out(n, 3 * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      out(i, c) = frames(i, c);
      out(i, d + c) = d1(i, c);
      out(i, 2 * d + c) = d2(i, c);
    }
  return out;
}

namespace {

Vector finite_values(const json& array, const std::string& id, const std::string& where) {
  if (!array.is_array()) throw Error(Errc::parse, where + ": values of '" + id + "' must be an array");
  Vector out;
  out.reserve(array.size());
  for (const auto& v : array) {
    if (!v.is_number()) throw Error(Errc::numeric, where + ": instance '" + id + "' has a non-finite entry");
    out.push_back(v.get<double>());
    if (!std::isfinite(out.back())) throw Error(Errc::numeric, where + ": instance '" + id + "' has a non-finite entry");
  }
  return out;
}

template <class F>
void for_each_record(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, where + ": " + e.what());
    }
    if (!record.contains("instance_id") || !record["instance_id"].is_string())
      throw Error(Errc::parse, where + ": record needs a string instance_id");
    f(record, where);
  }
}

}  // namespace

std::vector<InstanceVector> load_vectors(const std::filesystem::path& path, std::size_t expected_dim) {
  std::vector<InstanceVector> out;
  for_each_record(path, [&](const json& record, const std::string& where) {
    const auto id = record["instance_id"].get<std::string>();
    if (!record.contains("values")) throw Error(Errc::parse, where + ": instance '" + id + "' has no values");
    Vector values = finite_values(record["values"], id, where);
    if (values.empty()) throw Error(Errc::dimension, where + ": instance '" + id + "' is 0-dimensional");
    if (expected_dim == 0) expected_dim = values.size();
    if (values.size() != expected_dim)
      throw Error(Errc::dimension, where + ": instance '" + id + "' has " + std::to_string(values.size()) +
                                       " values, expected " + std::to_string(expected_dim));
    out.push_back({id, std::move(values)});
  });
  return out;
}

void save_vectors(const std::vector<InstanceVector>& vectors, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& v : vectors) out << json{{"instance_id", v.instance_id}, {"values", v.values}}.dump() << '\n';
}

std::vector<FrameSequence> load_frames(const std::filesystem::path& path) {
  std::vector<FrameSequence> out;
  for_each_record(path, [&](const json& record, const std::string& where) {
    const auto id = record["instance_id"].get<std::string>();
    const auto& frames = record.value("frames", json::array());
    if (!frames.is_array() || frames.empty()) throw Error(Errc::domain, where + ": instance '" + id + "' has no frames");
    std::vector<Vector> rows;
    for (const auto& f : frames) rows.push_back(finite_values(f, id, where));
    const std::size_t d = rows.front().size();
    if (d == 0) throw Error(Errc::dimension, where + ": instance '" + id + "' has 0-dimensional frames");
    Matrix m(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) throw Error(Errc::dimension, where + ": instance '" + id + "' has ragged frames");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    out.push_back({id, std::move(m)});
  });
  return out;
}

void save_frames(const std::vector<FrameSequence>& frames, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& seq : frames) {
    json rows = json::array();
    for (std::size_t i = 0; i < seq.frames.rows(); ++i) {
      auto r = seq.frames.row(i);
      rows.push_back(Vector(r.begin(), r.end()));
    }
    out << json{{"instance_id", seq.instance_id}, {"frames", rows}}.dump() << '\n';
  }
}

json to_json(const Codebook& codebook) {
  json comps = json::array();
  for (const auto& c : codebook.components)
    comps.push_back(json{{"mean", c.mean}, {"variance", c.variance}, {"weight", c.weight}});
  return json{{"components", comps}};
}

Codebook codebook_from_json(const json& j) {
  Codebook codebook;
  for (const auto& c : j.at("components"))
    codebook.components.push_back({c.at("mean").get<Vector>(), c.at("variance").get<Vector>(), c.at("weight").get<double>()});
  return codebook;
}

}  // namespace cezsl
