#include "cezsl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace cezsl {

using nlohmann::json;

bool Document::has(const std::string& label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

const Document* Corpus::find(const std::string& doc_id) const {
  for (const auto& doc : documents)
    if (doc.doc_id == doc_id) return &doc;
  return nullptr;
}

std::unordered_map<std::string, std::size_t> Corpus::vocabulary_index() const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], i);
  return index;
}

Document make_document(std::string doc_id, const std::vector<std::string>& labels) {
  Document doc{std::move(doc_id), {}};
  std::unordered_set<std::string> seen;
  for (const auto& label : labels)
    if (seen.insert(label).second) doc.labels.push_back(label);
  if (doc.labels.empty()) throw Error(Errc::rejected_record, "document '" + doc.doc_id + "' has no labels");
  return doc;
}

std::vector<std::string> load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open vocabulary file " + path.string());
  std::vector<std::string> vocabulary;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (seen.insert(line).second) vocabulary.push_back(line);
  }
  return vocabulary;
}

Corpus parse_corpus(std::istream& in, const std::string& source_name) {
  Corpus corpus;
  std::unordered_set<std::string> seen_labels;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, where + ": malformed record: " + e.what());
    }
    if (!record.is_object() || !record.contains("doc_id") || !record["doc_id"].is_string() ||
        !record.contains("labels") || !record["labels"].is_array())
      throw Error(Errc::parse, where + ": record needs a string doc_id and a labels array");
    std::vector<std::string> labels;
    for (const auto& l : record["labels"]) {
      if (!l.is_string()) throw Error(Errc::parse, where + ": labels must be strings");
      labels.push_back(l.get<std::string>());
    }
    const auto doc_id = record["doc_id"].get<std::string>();
    if (labels.empty()) throw Error(Errc::rejected_record, where + ": document '" + doc_id + "' has an empty label set");
    if (!seen_ids.insert(doc_id).second) throw Error(Errc::parse, where + ": duplicate doc_id '" + doc_id + "'");
    corpus.documents.push_back(make_document(doc_id, labels));
    for (const auto& label : corpus.documents.back().labels)
      if (seen_labels.insert(label).second) corpus.vocabulary.push_back(label);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const std::optional<std::filesystem::path>& vocabulary_path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open corpus file " + path.string());
  Corpus corpus = parse_corpus(in, path.string());
  if (vocabulary_path) {
    const auto union_order = corpus.vocabulary;
    corpus.vocabulary = load_vocabulary(*vocabulary_path);
    const std::unordered_set<std::string> known(corpus.vocabulary.begin(), corpus.vocabulary.end());
    for (const auto& label : union_order)
      if (!known.count(label)) corpus.declared_oov.push_back(label);
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& doc : corpus.documents) out << json{{"doc_id", doc.doc_id}, {"labels", doc.labels}}.dump() << '\n';
}

std::array<std::size_t, 3> largest_remainder_sizes(std::size_t total, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = fractions[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainders[i] = quota - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % 3) {
    if (fractions[order[k]] <= 0.0) continue;
    ++sizes[order[k]];
    ++assigned;
  }
  return sizes;
}

LabelPartition::Kind LabelPartition::kind_of(const std::string& label) const {
  auto in = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), label) != v.end(); };
  if (in(train)) return Kind::train;
  if (in(zsl)) return Kind::zsl;
  if (in(oov)) return Kind::oov;
  return Kind::unknown;
}

LabelPartition split_labels(const std::vector<std::string>& vocabulary, const LabelFractions& fractions,
                            std::uint64_t seed) {
  if (vocabulary.empty()) throw Error(Errc::config, "cannot split an empty vocabulary");
  const std::array<double, 3> f{fractions.train, fractions.zsl, fractions.oov};
  for (double x : f)
    if (x < 0.0 || !std::isfinite(x)) throw Error(Errc::config, "label fractions must be nonnegative");
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw Error(Errc::config, "label fractions must sum to 1");
  const auto sizes = largest_remainder_sizes(vocabulary.size(), f);
  if (sizes[0] == 0) throw Error(Errc::config, "label fractions leave the T-class set empty");

  std::vector<std::string> shuffled = vocabulary;
  Rng rng(derive_seed(seed, "split_labels"));
  rng.shuffle(shuffled);

  LabelPartition partition;
  auto first = shuffled.begin();
  partition.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  partition.zsl.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  partition.oov.assign(first, shuffled.end());
  // Keep each part in vocabulary order so the partition reads the same however it was drawn.
  const std::unordered_map<std::string, std::size_t> rank = [&] {
    std::unordered_map<std::string, std::size_t> r;
    for (std::size_t i = 0; i < vocabulary.size(); ++i) r.emplace(vocabulary[i], i);
    return r;
  }();
  for (auto* part : {&partition.train, &partition.zsl, &partition.oov})
    std::sort(part->begin(), part->end(), [&](const auto& a, const auto& b) { return rank.at(a) < rank.at(b); });
  return partition;
}

std::string to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::wct: return "WCT";
    case Protocol::wct_oov: return "WCT_OOV";
    case Protocol::cct: return "CCT";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "WCT" || name == "wct") return Protocol::wct;
  if (name == "WCT_OOV" || name == "wct_oov") return Protocol::wct_oov;
  if (name == "CCT" || name == "cct") return Protocol::cct;
  throw Error(Errc::config, "unknown protocol '" + name + "'");
}

const std::vector<std::string>& SplitPlan::training_ids() const {
  return protocol == Protocol::wct ? im_tr : oov_tr;
}

std::vector<std::string> SplitPlan::test_ids() const {
  std::vector<std::string> ids = im_tst;
  if (protocol != Protocol::wct) ids.insert(ids.end(), oov_tst.begin(), oov_tst.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

struct DocClass {
  bool zsl = false;
  bool oov = false;
  bool iv = false;  // has at least one T or ZSL label
};

}  // namespace

SplitPlan split_instances(const Corpus& corpus, const LabelPartition& labels, Protocol protocol, std::uint64_t seed,
                          const SplitOptions& options) {
  if (options.d1_fraction <= 0.0 || options.d1_fraction > 1.0)
    throw Error(Errc::config, "d1_fraction must lie in (0, 1]");
  if (options.s_val_fraction < 0.0 || options.s_val_fraction >= 1.0)
    throw Error(Errc::config, "s_val_fraction must lie in [0, 1)");

  std::unordered_map<std::string, LabelPartition::Kind> kind;
  for (const auto& l : labels.train) kind[l] = LabelPartition::Kind::train;
  for (const auto& l : labels.zsl) kind[l] = LabelPartition::Kind::zsl;
  for (const auto& l : labels.oov) kind[l] = LabelPartition::Kind::oov;

  SplitPlan plan;
  plan.protocol = protocol;
  plan.seed = seed;
  plan.labels = labels;

  std::vector<std::size_t> order(corpus.documents.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split_instances"));
  rng.shuffle(order);
  const auto d1_size = static_cast<std::size_t>(std::llround(options.d1_fraction * static_cast<double>(order.size())));

  std::vector<std::string> semantics_pool;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Document& doc = corpus.documents[order[pos]];
    const bool in_d1 = pos < d1_size;
    DocClass c;
    for (const auto& label : doc.labels) {
      auto it = kind.find(label);
      if (it == kind.end())
        throw Error(Errc::protocol, "label '" + label + "' of document '" + doc.doc_id + "' is not in the label partition");
      switch (it->second) {
        case LabelPartition::Kind::zsl: c.zsl = true; c.iv = true; break;
        case LabelPartition::Kind::train: c.iv = true; break;
        case LabelPartition::Kind::oov: c.oov = true; break;
        case LabelPartition::Kind::unknown: break;
      }
    }

    if (protocol == Protocol::wct) {
      if (c.oov) {
        plan.excluded.push_back(doc.doc_id);
        continue;
      }
      if (in_d1) semantics_pool.push_back(doc.doc_id);
      if (c.zsl) plan.im_tst.push_back(doc.doc_id);
      else (in_d1 ? plan.im_tr : plan.im_val).push_back(doc.doc_id);
      continue;
    }

    if (!c.iv) {
      spdlog::warn("document '{}' carries only OOV labels; no in-vocabulary anchor, excluded", doc.doc_id);
      plan.excluded.push_back(doc.doc_id);
      continue;
    }
    if (protocol == Protocol::wct_oov && in_d1 && !c.oov) semantics_pool.push_back(doc.doc_id);
    if (c.zsl) {
      (c.oov ? plan.oov_tst : plan.im_tst).push_back(doc.doc_id);
    } else if (in_d1) {
      if (!c.oov) plan.im_tr.push_back(doc.doc_id);
      plan.oov_tr.push_back(doc.doc_id);
    } else {
      plan.im_val.push_back(doc.doc_id);
    }
  }
  if (protocol == Protocol::wct && !plan.excluded.empty())
    spdlog::warn("{} documents carry OOV labels and are excluded under WCT", plan.excluded.size());

  // semantics_pool is already in shuffled order; hold out its tail for validation.
  const auto n_val =
      static_cast<std::size_t>(std::llround(options.s_val_fraction * static_cast<double>(semantics_pool.size())));
  plan.s_tr.assign(semantics_pool.begin(), semantics_pool.end() - static_cast<std::ptrdiff_t>(n_val));
  plan.s_val.assign(semantics_pool.end() - static_cast<std::ptrdiff_t>(n_val), semantics_pool.end());

  for (auto* ids : {&plan.s_tr, &plan.s_val, &plan.im_tr, &plan.im_val, &plan.im_tst, &plan.oov_tr, &plan.oov_tst,
                    &plan.excluded})
    std::sort(ids->begin(), ids->end());

  if (plan.im_tst.empty() && plan.oov_tst.empty())
    throw Error(Errc::protocol, "no document carries a ZSL-class label; ZSL evaluation is impossible");
  return plan;
}

json to_json(const LabelPartition& partition) {
  return json{{"train", partition.train}, {"zsl", partition.zsl}, {"oov", partition.oov}};
}

LabelPartition label_partition_from_json(const json& j) {
  return LabelPartition{j.at("train").get<std::vector<std::string>>(), j.at("zsl").get<std::vector<std::string>>(),
                        j.at("oov").get<std::vector<std::string>>()};
}

json to_json(const SplitPlan& plan) {
  return json{{"protocol", to_string(plan.protocol)},
              {"seed", plan.seed},
              {"labels", to_json(plan.labels)},
              {"s_tr", plan.s_tr},
              {"s_val", plan.s_val},
              {"im_tr", plan.im_tr},
              {"im_val", plan.im_val},
              {"im_tst", plan.im_tst},
              {"oov_tr", plan.oov_tr},
              {"oov_tst", plan.oov_tst},
              {"excluded", plan.excluded}};
}

SplitPlan split_plan_from_json(const json& j) {
  SplitPlan plan;
  plan.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.labels = label_partition_from_json(j.at("labels"));
  auto ids = [&](const char* key) { return j.value(key, std::vector<std::string>{}); };
  plan.s_tr = ids("s_tr");
  plan.s_val = ids("s_val");
  plan.im_tr = ids("im_tr");
  plan.im_val = ids("im_val");
  plan.im_tst = ids("im_tst");
  plan.oov_tr = ids("oov_tr");
  plan.oov_tst = ids("oov_tst");
  plan.excluded = ids("excluded");
  return plan;
}

}  // namespace cezsl
