#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "cezsl/evaluation.hpp"

namespace cezsl {

using nlohmann::json;

namespace {

// exact sum of small fractions; falls back to floating point if the
// denominators get out of hand
class FractionSum {
 public:
  void add(std::int64_t num, std::int64_t den) {
    if (exact_) {
      const std::int64_t g = std::gcd(num, den);
      num /= g;
      den /= g;
      const std::int64_t l = den_ / std::gcd(den_, den);
      __int128 new_den = static_cast<__int128>(l) * den;
      __int128 new_num = static_cast<__int128>(num_) * (new_den / den_) + static_cast<__int128>(num) * (new_den / den);
      if (new_den > (std::int64_t{1} << 52) || new_num > (std::int64_t{1} << 52)) {
        exact_ = false;
      } else {
        num_ = static_cast<std::int64_t>(new_num);
        den_ = static_cast<std::int64_t>(new_den);
        const std::int64_t r = std::gcd(num_, den_);
        if (r > 1) num_ /= r, den_ /= r;
      }
    }
    approx_ += static_cast<double>(num) / static_cast<double>(den);
  }
  double divided_by(std::int64_t n) const {
    if (exact_ && den_ * n < (std::int64_t{1} << 52)) return static_cast<double>(num_) / static_cast<double>(den_ * n);
    return approx_ / static_cast<double>(n);
  }

 private:
  bool exact_ = true;
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
  double approx_ = 0.0;
};

}  // namespace

double precision_at_k(std::size_t k, std::span<const std::string> truth, const RankedScores& ranked) {
  if (k < 1 || k > ranked.scores.size())
    throw Error(Errc::domain, "P@k needs 1 <= k <= " + std::to_string(ranked.scores.size()) + ", got k=" +
                                  std::to_string(k));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (std::find(truth.begin(), truth.end(), ranked.scores[i].first) != truth.end()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double e_map(std::span<const std::string> truth, const RankedScores& ranked) {
  if (truth.empty()) throw Error(Errc::domain, "E-MAP needs a non-empty label set for " + ranked.doc_id);
  if (ranked.scores.size() < truth.size())
    throw Error(Errc::domain, "E-MAP needs at least |truth| ranked labels for " + ranked.doc_id);
  const std::set<std::string> wanted(truth.begin(), truth.end());
  FractionSum sum;
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (wanted.count(ranked.scores[i].first)) ++hits;
    sum.add(hits, static_cast<std::int64_t>(i + 1));
  }
  return sum.divided_by(static_cast<std::int64_t>(truth.size()));
}

double recall_at_k(std::size_t k, const std::set<std::string>& positives, std::span<const std::string> ranked) {
  if (positives.empty()) throw Error(Errc::domain, "R@k is undefined for an empty positive set");
  if (k < 1 || k > ranked.size())
    throw Error(Errc::domain, "R@k needs 1 <= k <= " + std::to_string(ranked.size()) + ", got k=" + std::to_string(k));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += positives.count(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

std::optional<double> c_map(std::span<const std::string> instance_ids, std::span<const double> scores,
                            const std::set<std::string>& positives) {
  if (instance_ids.size() != scores.size()) throw Error(Errc::dimension, "C-MAP ids and scores differ in length");
  std::vector<std::size_t> order(instance_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return instance_ids[a] < instance_ids[b];
  });
  std::int64_t total = 0;
  for (const auto& id : instance_ids) total += static_cast<std::int64_t>(positives.count(id));
  if (total == 0) return std::nullopt;

  // best[i] = max precision over cut-offs whose recall reaches level i/10
  std::vector<std::pair<std::int64_t, std::int64_t>> best(11, {0, 1});
  std::int64_t hits = 0;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    hits += static_cast<std::int64_t>(positives.count(instance_ids[order[k - 1]]));
    const auto kk = static_cast<std::int64_t>(k);
    for (std::int64_t level = 0; level <= 10; ++level) {
      if (hits * 10 < level * total) break;
      auto& [bn, bd] = best[static_cast<std::size_t>(level)];
      if (hits * bd > bn * kk) bn = hits, bd = kk;
    }
  }
  FractionSum sum;
  for (const auto& [n, d] : best) sum.add(n, d);
  return sum.divided_by(11);
}

double random_e_map(std::size_t truth_size, std::size_t universe_size) {
  if (universe_size == 0) throw Error(Errc::domain, "empty label universe");
  return static_cast<double>(std::min(truth_size, universe_size)) / static_cast<double>(universe_size);
}

std::string to_string(Subset subset) {
  switch (subset) {
    case Subset::training: return "Training Labels";
    case Subset::zsl: return "ZSL Labels";
    case Subset::all: return "All Labels";
    case Subset::oov: return "OOV Labels";
  }
  return "?";
}

namespace {

std::string subset_key(Subset s) {
  switch (s) {
    case Subset::training: return "training";
    case Subset::zsl: return "zsl";
    case Subset::all: return "all";
    case Subset::oov: return "oov";
  }
  return "?";
}

Subset subset_from_key(const std::string& k) {
  for (auto s : kSubsets)
    if (subset_key(s) == k) return s;
  throw Error(Errc::parse, "unknown subset '" + k + "'");
}

}  // namespace

SubsetRules SubsetRules::from(const LabelPartition& p, std::span<const std::string> semantics_vocabulary) {
  SubsetRules r;
  r.train.insert(p.train.begin(), p.train.end());
  r.zsl.insert(p.zsl.begin(), p.zsl.end());
  r.oov.insert(p.oov.begin(), p.oov.end());
  r.semantics_vocabulary.insert(semantics_vocabulary.begin(), semantics_vocabulary.end());
  return r;
}

TrialMetrics evaluate_trial(std::span<const RankedScores> ranked, std::span<const Document> truth,
                            const SubsetRules& rules) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : truth) by_id[d.doc_id] = &d;

  struct Member {
    const RankedScores* ranked;
    std::vector<std::string> truth;
  };
  std::map<Subset, std::vector<Member>> members;
  for (const auto& r : ranked) {
    auto it = by_id.find(r.doc_id);
    if (it == by_id.end()) throw Error(Errc::coverage, "no ground truth for ranked instance " + r.doc_id);
    const auto& labels = it->second->labels;
    bool all_train = true, any_zsl = false, any_oov = false;
    for (const auto& l : labels) {
      const bool in_s = rules.semantics_vocabulary.empty() || rules.semantics_vocabulary.count(l);
      if (!rules.train.count(l) || !in_s) all_train = false;
      if (rules.zsl.count(l)) any_zsl = true;
      if (rules.oov.count(l)) any_oov = true;
    }
    members[Subset::all].push_back({&r, labels});
    if (all_train) members[Subset::training].push_back({&r, labels});
    if (any_zsl) members[Subset::zsl].push_back({&r, labels});
    if (any_oov) {
      // OOV-only view: truth and ranking both restricted to OOV labels
      std::vector<std::string> oov_truth;
      for (const auto& l : labels)
        if (rules.oov.count(l)) oov_truth.push_back(l);
      members[Subset::oov].push_back({&r, oov_truth});
    }
  }

  TrialMetrics out;
  for (auto subset : kSubsets) {
    SubsetMetrics m;
    auto& list = members[subset];
    m.instances = list.size();
    if (list.empty()) {
      out[subset] = m;
      continue;
    }
    // label universe for this subset's ranking/C-MAP
    std::vector<std::string> universe;
    for (const auto& [label, score] : list.front().ranked->scores) {
      (void)score;
      const bool keep = subset == Subset::all || (subset == Subset::training && rules.train.count(label)) ||
                        (subset == Subset::zsl && rules.zsl.count(label)) ||
                        (subset == Subset::oov && rules.oov.count(label));
      if (keep) universe.push_back(label);
    }
    std::sort(universe.begin(), universe.end());

    double e_sum = 0.0, rnd_sum = 0.0;
    std::size_t e_count = 0;
    for (const auto& mem : list) {
      if (subset == Subset::oov) {
        RankedScores restricted{mem.ranked->doc_id, {}};
        for (const auto& entry : mem.ranked->scores)
          if (rules.oov.count(entry.first)) restricted.scores.push_back(entry);
        if (restricted.scores.size() < mem.truth.size() || mem.truth.empty()) continue;
        e_sum += e_map(mem.truth, restricted);
        rnd_sum += random_e_map(mem.truth.size(), restricted.scores.size());
      } else {
        e_sum += e_map(mem.truth, *mem.ranked);
        rnd_sum += random_e_map(mem.truth.size(), mem.ranked->scores.size());
      }
      ++e_count;
    }
    if (e_count) {
      m.e_map = e_sum / static_cast<double>(e_count);
      m.random_e_map = rnd_sum / static_cast<double>(e_count);
    }

    std::vector<std::string> ids;
    for (const auto& mem : list) ids.push_back(mem.ranked->doc_id);
    std::vector<std::unordered_map<std::string, double>> score_maps;
    for (const auto& mem : list) score_maps.emplace_back(mem.ranked->scores.begin(), mem.ranked->scores.end());
    double c_sum = 0.0;
    std::size_t skipped = 0;
    for (const auto& label : universe) {
      std::vector<double> scores;
      std::set<std::string> positives;
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto it = score_maps[i].find(label);
        scores.push_back(it == score_maps[i].end() ? 0.0 : it->second);
        if (std::find(list[i].truth.begin(), list[i].truth.end(), label) != list[i].truth.end())
          positives.insert(ids[i]);
      }
      if (auto ap = c_map(ids, scores, positives)) {
        c_sum += *ap;
        ++m.labels;
      } else {
        ++skipped;
      }
    }
    if (skipped) spdlog::debug("{}: {} labels without positives left out of C-MAP", to_string(subset), skipped);
    if (m.labels) m.c_map = c_sum / static_cast<double>(m.labels);
    out[subset] = m;
  }
  return out;
}

Statistic mean_stderr(std::span<const double> values) {
  Statistic s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.stderr_ = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

EvalReport aggregate(std::span<const TrialMetrics> trials, std::vector<std::size_t> failed) {
  if (trials.empty() && failed.empty()) throw Error(Errc::domain, "aggregate needs at least one trial");
  EvalReport report;
  report.trials = trials.size();
  report.failed = std::move(failed);
  report.single_trial = trials.size() == 1;
  for (auto subset : kSubsets) {
    std::vector<double> e, c, r;
    for (const auto& t : trials) {
      auto it = t.find(subset);
      if (it == t.end()) continue;
      if (it->second.e_map) {
        e.push_back(*it->second.e_map);
        r.push_back(it->second.random_e_map);
      }
      if (it->second.c_map) c.push_back(*it->second.c_map);
    }
    report.e_map[subset] = e.empty() ? std::nullopt : std::optional(mean_stderr(e));
    report.c_map[subset] = c.empty() ? std::nullopt : std::optional(mean_stderr(c));
    report.random_e_map[subset] = r.empty() ? 0.0 : mean_stderr(r).mean;
  }
  return report;
}

json to_json(const SubsetMetrics& m) {
  json j{{"instances", m.instances}, {"labels", m.labels}, {"random_e_map", m.random_e_map}};
  j["e_map"] = m.e_map ? json(*m.e_map) : json(nullptr);
  j["c_map"] = m.c_map ? json(*m.c_map) : json(nullptr);
  return j;
}

json to_json(const TrialMetrics& metrics) {
  json j = json::object();
  for (const auto& [s, m] : metrics) j[subset_key(s)] = to_json(m);
  return j;
}

TrialMetrics trial_metrics_from_json(const json& j) {
  TrialMetrics out;
  for (const auto& [key, v] : j.items()) {
    SubsetMetrics m;
    m.instances = v.at("instances").get<std::size_t>();
    m.labels = v.at("labels").get<std::size_t>();
    m.random_e_map = v.value("random_e_map", 0.0);
    if (!v.at("e_map").is_null()) m.e_map = v.at("e_map").get<double>();
    if (!v.at("c_map").is_null()) m.c_map = v.at("c_map").get<double>();
    out[subset_from_key(key)] = m;
  }
  return out;
}

namespace {

json stat_json(const std::optional<Statistic>& s) {
  if (!s) return nullptr;
  return json{{"mean", s->mean}, {"stderr", s->stderr_}, {"trials", s->count}};
}

std::string cell(const std::optional<Statistic>& s) {
  if (!s) return "absent";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << s->mean << "±" << s->stderr_;
  return os.str();
}

}  // namespace

json to_json(const EvalReport& r) {
  json subsets = json::object();
  for (auto s : kSubsets) {
    subsets[subset_key(s)] = json{{"name", to_string(s)},
                                  {"e_map", stat_json(r.e_map.at(s))},
                                  {"c_map", stat_json(r.c_map.at(s))},
                                  {"random_e_map", r.random_e_map.at(s)}};
  }
  return json{{"trials", r.trials}, {"failed_trials", r.failed}, {"single_trial", r.single_trial},
              {"subsets", subsets}};
}

std::string format_table(const EvalReport& r) {
  std::vector<std::array<std::string, 3>> rows{{"Subset", "E-MAP", "C-MAP"}};
  for (auto s : kSubsets) rows.push_back({to_string(s), cell(r.e_map.at(s)), cell(r.c_map.at(s))});
  // "±" is two bytes but one column
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::array<std::size_t, 3> widths{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 3; ++c) widths[c] = std::max(widths[c], width(row[c]));
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 3; ++c) {
      os << row[c];
      if (c + 1 < 3) os << std::string(widths[c] - width(row[c]) + 2, ' ');
    }
    os << '\n';
  }
  os << "trials: " << r.trials;
  if (!r.failed.empty()) {
    os << " (failed:";
    for (auto f : r.failed) os << ' ' << f;
    os << ')';
  }
  if (r.single_trial) os << " [single trial: stderr 0 by convention]";
  os << '\n';
  return os.str();
}

}  // namespace cezsl
