#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cezsl/experiment.hpp"

namespace cezsl {

using nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

const std::set<std::string> kTopKeys{"name",  "data",  "protocol",  "labels",   "split",   "trials",
                                     "seed",  "ce",    "lda",       "infer",    "svr",     "codebook",
                                     "vector_dim", "threads", "error_free_oracle", "output_dir"};
const std::set<std::string> kDataKeys{"corpus", "vocabulary", "vectors", "frames", "semantics_corpus", "ce_bundle"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::config, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw Error(Errc::config, "unknown key '" + key + "' in " + where);
  }
}

std::optional<fs::path> optional_path(const json& data, const char* key, const fs::path& base) {
  if (!data.contains(key) || data.at(key).is_null()) return std::nullopt;
  return base / data.at(key).get<std::string>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  try {
    check_keys(j, kTopKeys, "config");
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (!j.contains("data")) throw Error(Errc::config, "config needs a 'data' section");
    const auto& data = j.at("data");
    check_keys(data, kDataKeys, "data");
    if (!data.contains("corpus")) throw Error(Errc::config, "data.corpus is required");
    c.data.corpus = base_dir / data.at("corpus").get<std::string>();
    c.data.vocabulary = optional_path(data, "vocabulary", base_dir);
    c.data.vectors = optional_path(data, "vectors", base_dir);
    c.data.frames = optional_path(data, "frames", base_dir);
    c.data.semantics_corpus = optional_path(data, "semantics_corpus", base_dir);
    c.data.ce_bundle = optional_path(data, "ce_bundle", base_dir);
    c.data.as_written = data;
    if (j.contains("protocol")) c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    if (j.contains("labels")) {
      const auto& l = j.at("labels");
      check_keys(l, {"train", "zsl", "oov"}, "labels");
      c.fractions.train = l.value("train", c.fractions.train);
      c.fractions.zsl = l.value("zsl", c.fractions.zsl);
      c.fractions.oov = l.value("oov", c.fractions.oov);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"d1_fraction", "s_val_fraction"}, "split");
      c.split.d1_fraction = s.value("d1_fraction", c.split.d1_fraction);
      c.split.s_val_fraction = s.value("s_val_fraction", c.split.s_val_fraction);
    }
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ce")) c.ce = ce_hyper_from_json(j.at("ce"), c.ce);
    if (j.contains("lda")) {
      const auto& l = j.at("lda");
      check_keys(l, {"topics", "alpha", "beta", "iterations"}, "lda");
      c.lda.topics = l.value("topics", c.lda.topics);
      c.lda.alpha = l.value("alpha", c.lda.alpha);
      c.lda.beta = l.value("beta", c.lda.beta);
      c.lda.iterations = l.value("iterations", c.lda.iterations);
    }
    if (j.contains("infer")) {
      check_keys(j.at("infer"), {"sweeps"}, "infer");
      c.infer.sweeps = j.at("infer").value("sweeps", c.infer.sweeps);
    }
    if (j.contains("svr")) c.svr = svr_config_from_json(j.at("svr"), c.svr);
    if (j.contains("codebook")) {
      const auto& cb = j.at("codebook");
      check_keys(cb, {"size", "em_iterations", "tolerance", "weighted", "deltas"}, "codebook");
      c.codebook.size = cb.value("size", c.codebook.size);
      c.codebook.em_iterations = cb.value("em_iterations", c.codebook.em_iterations);
      c.codebook.tolerance = cb.value("tolerance", c.codebook.tolerance);
      c.codebook_weighted = cb.value("weighted", c.codebook_weighted);
      c.frame_deltas = cb.value("deltas", c.frame_deltas);
    }
    c.vector_dim = j.value("vector_dim", c.vector_dim);
    c.threads = j.value("threads", c.threads);
    c.error_free_oracle = j.value("error_free_oracle", c.error_free_oracle);
    if (j.contains("output_dir")) c.output_dir = base_dir / j.at("output_dir").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw Error(Errc::config, std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json cb{{"size", c.codebook.size},
          {"em_iterations", c.codebook.em_iterations},
          {"tolerance", c.codebook.tolerance},
          {"weighted", c.codebook_weighted},
          {"deltas", c.frame_deltas}};
  auto ce = to_json(c.ce);
  ce.erase("seed");
  return json{{"name", c.name},
              {"data", c.data.as_written},
              {"protocol", to_string(c.protocol)},
              {"labels", {{"train", c.fractions.train}, {"zsl", c.fractions.zsl}, {"oov", c.fractions.oov}}},
              {"split", {{"d1_fraction", c.split.d1_fraction}, {"s_val_fraction", c.split.s_val_fraction}}},
              {"trials", c.trials},
              {"seed", c.seed},
              {"ce", ce},
              {"lda", {{"topics", c.lda.topics}, {"alpha", c.lda.alpha}, {"beta", c.lda.beta},
                       {"iterations", c.lda.iterations}}},
              {"infer", {{"sweeps", c.infer.sweeps}}},
              {"svr", to_json(c.svr)},
              {"codebook", cb},
              {"vector_dim", c.vector_dim},
              {"threads", c.threads},
              {"error_free_oracle", c.error_free_oracle},
              {"output_dir", c.output_dir.generic_string()}};
}

std::uint64_t ExperimentConfig::hash() const {
  auto j = to_json(*this);
  j.erase("output_dir");
  j.erase("threads");  // does not change any result
  return fnv1a(j.dump());
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(Errc::config, what);
  };
  require(trials >= 1, "trials must be >= 1");
  require(fs::exists(data.corpus), "corpus not found: " + data.corpus.string());
  require(data.vectors || data.frames, "data needs 'vectors' or 'frames'");
  for (const auto* p : {&data.vocabulary, &data.vectors, &data.frames, &data.semantics_corpus, &data.ce_bundle})
    if (*p) require(fs::exists(**p), "file not found: " + (*p)->string());
  require(fractions.train > 0.0 && fractions.zsl > 0.0 && fractions.oov >= 0.0,
          "label fractions need train > 0, zsl > 0, oov >= 0");
  require(std::abs(fractions.train + fractions.zsl + fractions.oov - 1.0) < 1e-9, "label fractions must sum to 1");
  if (protocol == Protocol::cct)
    require(data.semantics_corpus || data.ce_bundle, "the cct protocol needs data.semantics_corpus or data.ce_bundle");
  if (protocol == Protocol::wct_oov) require(fractions.oov > 0.0, "the wct_oov protocol needs labels.oov > 0");
  require(threads >= 1, "threads must be >= 1");
  require(infer.sweeps >= 2, "infer.sweeps must be >= 2");
  if (data.frames) require(codebook.size >= 1 && codebook.em_iterations >= 1, "codebook needs size and iterations >= 1");
  try {
    ce.validate();
    svr.validate();
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::split: return "split";
    case Stage::train_ce: return "train-ce";
    case Stage::embed: return "embed";
    case Stage::build_store: return "build-store";
    case Stage::train_im: return "train-im";
    case Stage::predict: return "predict";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

Stage stage_from_string(const std::string& name) {
  for (auto s : kStages)
    if (to_string(s) == name) return s;
  throw Error(Errc::config, "unknown stage '" + name + "'");
}

// ---------------------------------------------------------------- data

ExperimentData ExperimentData::load(const ExperimentConfig& c) {
  ExperimentData d;
  d.corpus = load_corpus(c.data.corpus, c.data.vocabulary);
  if (c.data.semantics_corpus) d.semantics_corpus = load_corpus(*c.data.semantics_corpus);
  if (c.data.vectors)
    for (auto& v : load_vectors(*c.data.vectors, c.vector_dim)) d.vectors.emplace(v.instance_id, std::move(v.values));
  if (c.data.frames)
    for (auto& f : load_frames(*c.data.frames)) {
      if (c.frame_deltas) f.frames = augment_with_deltas(f.frames);
      d.frames.emplace(f.instance_id, std::move(f));
    }
  return d;
}

json to_json(const CeBundle& b) {
  return json{{"features", to_json(b.features)},
              {"topics", to_json(b.topics)},
              {"model", to_json(b.model)},
              {"infer", {{"sweeps", b.infer.sweeps}, {"seed", b.infer.seed}}},
              {"semantics_store", to_json(b.semantics_store)}};
}

CeBundle ce_bundle_from_json(const json& j) {
  CeBundle b;
  b.features = label_features_from_json(j.at("features"));
  b.topics = topic_model_from_json(j.at("topics"));
  b.model = siamese_model_from_json(j.at("model"));
  b.infer.sweeps = j.at("infer").at("sweeps").get<std::size_t>();
  b.infer.seed = j.at("infer").at("seed").get<std::uint64_t>();
  b.semantics_store = concept_store_from_json(j.at("semantics_store"));
  return b;
}

json with_provenance(json artifact, std::uint64_t config_hash, const std::string& stage, std::uint64_t seed) {
  artifact["provenance"] = json{{"config_hash", hex64(config_hash)}, {"stage", stage}, {"seed", hex64(seed)}};
  return artifact;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "missing artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- trial

namespace {

std::vector<std::string> sorted_union(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

Document restrict(const Document& d, const std::unordered_set<std::string>& keep) {
  Document out{d.doc_id, {}};
  for (const auto& l : d.labels)
    if (keep.count(l)) out.labels.push_back(l);
  return out;
}

std::map<std::string, Vector> vectors_from_json(const json& j) {
  std::map<std::string, Vector> out;
  for (const auto& [k, v] : j.items()) out.emplace(k, v.get<Vector>());
  return out;
}

}  // namespace

struct Trial::State {
  const ExperimentConfig& config;
  const ExperimentData& data;
  std::size_t index;
  std::uint64_t seed;
  std::uint64_t hash;

  std::optional<SplitPlan> plan;
  std::optional<CeBundle> bundle;
  std::unique_ptr<ConceptEncoder> encoder;
  std::optional<std::map<std::string, Vector>> targets;
  std::optional<ConceptStore> store;
  std::vector<std::string> universe;
  std::optional<ImModel> im;
  std::optional<Codebook> codebook;
  std::optional<std::vector<RankedScores>> scores;
  std::optional<std::map<std::string, Vector>> predictions;
  TrialSummary summary;
  bool evaluated = false;

  State(const ExperimentConfig& c, const ExperimentData& d, std::size_t i)
      : config(c), data(d), index(i), seed(derive_seed(c.seed, "trial-" + std::to_string(i))), hash(c.hash()) {}
};

Trial::Trial(const ExperimentConfig& config, const ExperimentData& data, std::size_t index)
    : s_(std::make_unique<State>(config, data, index)) {
  s_->summary.index = index;
  s_->summary.seed = s_->seed;
}

Trial::~Trial() = default;

std::uint64_t Trial::seed() const { return s_->seed; }
std::uint64_t Trial::stage_seed(Stage stage) const { return derive_seed(s_->seed, to_string(stage)); }
fs::path Trial::directory() const { return s_->config.output_dir / ("trial-" + std::to_string(s_->index)); }

fs::path Trial::artifact_path(Stage stage) const {
  static const std::map<Stage, std::string> names{{Stage::split, "split"},         {Stage::train_ce, "ce_bundle"},
                                                  {Stage::embed, "targets"},       {Stage::build_store, "store"},
                                                  {Stage::train_im, "im_model"},   {Stage::predict, "scores"},
                                                  {Stage::evaluate, "metrics"}};
  return directory() / (names.at(stage) + ".seed-" + hex64(stage_seed(stage)) + ".json");
}

namespace {

struct TrialAccess {
  // documents by id across the instance corpus and the semantics corpus
  static const Document& doc(const ExperimentData& data, const std::string& id, bool semantics_side) {
    const Corpus& c = semantics_side && data.semantics_corpus ? *data.semantics_corpus : data.corpus;
    const Document* d = c.find(id);
    if (!d) throw Error(Errc::coverage, "document '" + id + "' not found");
    return *d;
  }
};

}  // namespace

const SplitPlan& Trial::plan() {
  if (!s_->plan) s_->plan = split_plan_from_json(read_json(artifact_path(Stage::split)).at("plan"));
  return *s_->plan;
}

const CeBundle& Trial::bundle() {
  if (!s_->bundle) s_->bundle = ce_bundle_from_json(read_json(artifact_path(Stage::train_ce)).at("bundle"));
  if (!s_->encoder)
    s_->encoder = std::make_unique<ConceptEncoder>(s_->bundle->model, s_->bundle->features, s_->bundle->topics,
                                                   s_->bundle->infer);
  return *s_->bundle;
}

const ConceptStore& Trial::store() {
  if (!s_->store) {
    const auto j = read_json(artifact_path(Stage::build_store));
    s_->store = concept_store_from_json(j.at("store"));
    s_->universe = j.at("universe").get<std::vector<std::string>>();
  }
  return *s_->store;
}

const std::vector<std::string>& Trial::universe() {
  store();
  return s_->universe;
}

const ImModel& Trial::im_model() {
  if (!s_->im) {
    const auto j = read_json(artifact_path(Stage::train_im));
    s_->im = im_model_from_json(j.at("model"));
    if (j.contains("codebook")) s_->codebook = codebook_from_json(j.at("codebook"));
  }
  return *s_->im;
}

const std::vector<RankedScores>& Trial::scores() {
  if (!s_->scores) {
    const auto j = read_json(artifact_path(Stage::predict));
    s_->scores.emplace();
    for (const auto& r : j.at("scores")) s_->scores->push_back(ranked_scores_from_json(r));
    s_->predictions = vectors_from_json(j.at("predictions"));
  }
  return *s_->scores;
}

const TrialSummary& Trial::summary() { return s_->summary; }

void Trial::run_until(Stage last) { run_range(Stage::split, last); }

void Trial::run_range(Stage first, Stage last) {
  for (auto stage : kStages) {
    if (stage < first) continue;
    run(stage);
    if (stage == last) break;
  }
}

void Trial::run(Stage stage) {
  auto& st = *s_;
  const auto& cfg = st.config;
  const auto& data = st.data;
  const std::uint64_t sseed = stage_seed(stage);
  auto save = [&](json artifact) {
    write_json(artifact_path(stage), with_provenance(std::move(artifact), st.hash, to_string(stage), sseed));
  };
  // eval set: ZSL test documents plus held-out T-only documents
  auto eval_ids = [&] { return sorted_union(plan().test_ids(), plan().im_val); };
  auto instance_features = [&](const std::string& id) -> Vector {
    if (cfg.data.frames) {
      auto it = data.frames.find(id);
      if (it == data.frames.end()) throw Error(Errc::coverage, "no frames for instance '" + id + "'");
      if (!st.codebook) throw Error(Errc::io, "codebook not loaded");
      return abow(it->second, *st.codebook, cfg.codebook_weighted);
    }
    auto it = data.vectors.find(id);
    if (it == data.vectors.end()) throw Error(Errc::coverage, "no instance vector for '" + id + "'");
    return it->second;
  };

  spdlog::info("trial {}: {}", st.index, to_string(stage));
  try {
    switch (stage) {
      case Stage::split: {
        SplitPlan plan;
        if (cfg.protocol == Protocol::cct) {
          // embedding vocabulary comes from the other corpus (or the imported bundle)
          std::vector<std::string> s_tr, s_val, gamma_s;
          if (cfg.data.ce_bundle) {
            gamma_s = ce_bundle_from_json(read_json(*cfg.data.ce_bundle).at("bundle")).features.vocabulary;
          } else {
            std::vector<std::string> ids;
            for (const auto& d : data.semantics_corpus->documents) ids.push_back(d.doc_id);
            Rng rng(derive_seed(sseed, "semantics"));
            rng.shuffle(ids);
            const auto n_val = static_cast<std::size_t>(
                std::llround(cfg.split.s_val_fraction * static_cast<double>(ids.size())));
            s_tr.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_val));
            s_val.assign(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end());
            std::sort(s_tr.begin(), s_tr.end());
            std::sort(s_val.begin(), s_val.end());
            std::unordered_set<std::string> seen;
            for (const auto& id : s_tr)
              for (const auto& l : TrialAccess::doc(data, id, true).labels) seen.insert(l);
            for (const auto& l : data.semantics_corpus->vocabulary)
              if (seen.count(l)) gamma_s.push_back(l);
          }
          const std::unordered_set<std::string> known(gamma_s.begin(), gamma_s.end());
          std::vector<std::string> iv, oov;
          for (const auto& l : data.corpus.vocabulary) (known.count(l) ? iv : oov).push_back(l);
          const double t = cfg.fractions.train / (cfg.fractions.train + cfg.fractions.zsl);
          LabelPartition labels = split_labels(iv, {t, 1.0 - t, 0.0}, derive_seed(sseed, "labels"));
          labels.oov = oov;
          plan = split_instances(data.corpus, labels, cfg.protocol, sseed, cfg.split);
          plan.s_tr = std::move(s_tr);
          plan.s_val = std::move(s_val);
        } else {
          const auto labels = split_labels(data.corpus.vocabulary, cfg.fractions, derive_seed(sseed, "labels"));
          plan = split_instances(data.corpus, labels, cfg.protocol, sseed, cfg.split);
        }
        st.plan = plan;
        spdlog::info("trial {}: {} T / {} ZSL / {} OOV labels; s_tr {} s_val {} train {} test {}", st.index,
                     plan.labels.train.size(), plan.labels.zsl.size(), plan.labels.oov.size(), plan.s_tr.size(),
                     plan.s_val.size(), plan.training_ids().size(), plan.test_ids().size());
        save(json{{"plan", to_json(plan)}});
        break;
      }

      case Stage::train_ce: {
        const auto& p = plan();
        CeBundle b;
        if (cfg.protocol == Protocol::cct && cfg.data.ce_bundle) {
          b = ce_bundle_from_json(read_json(*cfg.data.ce_bundle).at("bundle"));
        } else {
          const bool sem_side = cfg.protocol == Protocol::cct;
          std::vector<Document> train_docs, val_docs;
          for (const auto& id : p.s_tr) train_docs.push_back(TrialAccess::doc(data, id, sem_side));
          if (train_docs.empty()) throw Error(Errc::protocol, "no semantics training documents");
          std::unordered_set<std::string> seen;
          for (const auto& d : train_docs) seen.insert(d.labels.begin(), d.labels.end());
          const Corpus& source = sem_side ? *data.semantics_corpus : data.corpus;
          std::vector<std::string> gamma_s;
          for (const auto& l : source.vocabulary)
            if (seen.count(l)) gamma_s.push_back(l);
          const std::unordered_set<std::string> gs(gamma_s.begin(), gamma_s.end());
          for (const auto& id : p.s_val) {
            auto d = restrict(TrialAccess::doc(data, id, sem_side), gs);
            if (!d.labels.empty()) val_docs.push_back(std::move(d));
          }

          b.features = label_features(tfidf_usage(train_docs, gamma_s));
          LdaConfig lda = cfg.lda;
          lda.seed = derive_seed(sseed, "lda");
          b.topics = fit_lda(train_docs, gamma_s, lda);
          b.infer = cfg.infer;
          b.infer.seed = derive_seed(sseed, "infer");

          SemanticsData sd;
          sd.vocabulary = gamma_s;
          sd.features = b.features;
          auto contextual = [&](const Document& d) {
            return ContextualDocument{d, infer_context(b.topics, d, b.infer), bow_target(d, gamma_s)};
          };
          for (const auto& d : train_docs) sd.train.push_back(contextual(d));
          for (const auto& d : val_docs) sd.validation.push_back(contextual(d));
          CeHyperParams hyper = cfg.ce;
          hyper.seed = derive_seed(sseed, "siamese");
          b.model = train(sd, hyper);
          spdlog::info("trial {}: embedding trained, best epoch {} of {}", st.index, b.model.trace.best_epoch,
                       hyper.epochs);

          ConceptEncoder enc(b.model, b.features, b.topics, b.infer);
          b.semantics_store = build_store(enc, train_docs, {});
        }
        st.bundle = std::move(b);
        st.encoder.reset();
        bundle();
        save(json{{"bundle", to_json(*st.bundle)}});
        break;
      }

      case Stage::embed: {
        const auto& p = plan();
        bundle();
        std::map<std::string, Vector> targets;
        for (const auto& id : sorted_union(p.training_ids(), eval_ids())) {
          try {
            targets.emplace(id, compress_target(*st.encoder, TrialAccess::doc(data, id, false)));
          } catch (const Error& e) {
            if (e.code() != Errc::inference) throw;
            spdlog::warn("trial {}: no target for '{}': {}", st.index, id, e.what());
          }
        }
        st.targets = std::move(targets);
        save(json{{"targets", *st.targets}});
        break;
      }

      case Stage::build_store: {
        const auto& p = plan();
        const auto& b = bundle();
        std::vector<Document> inst;
        for (const auto& id : p.training_ids()) inst.push_back(TrialAccess::doc(data, id, false));
        ConceptStore store = b.semantics_store;
        const ConceptStore instance_part = build_store(*st.encoder, {}, inst);
        for (const auto& r : instance_part.records()) store.add(r);

        std::vector<std::string> universe = b.features.vocabulary;
        const std::unordered_set<std::string> gs(universe.begin(), universe.end());
        for (const auto& l : data.corpus.vocabulary)
          if (!gs.count(l) && store.covers(l)) universe.push_back(l);
        if (auto missing = store.uncovered(universe); !missing.empty()) {
          std::string names;
          for (const auto& m : missing) names += " " + m;
          spdlog::warn("trial {}: labels without concepts:{}", st.index, names);
        }
        std::size_t dropped = 0;
        for (const auto& l : data.corpus.vocabulary)
          if (!store.covers(l)) ++dropped;
        if (dropped) spdlog::info("trial {}: {} corpus labels have no concept and are not ranked", st.index, dropped);
        st.store = std::move(store);
        st.universe = std::move(universe);
        save(json{{"store", to_json(*st.store)}, {"universe", st.universe}});
        break;
      }

      case Stage::train_im: {
        const auto& p = plan();
        if (!st.targets) st.targets = vectors_from_json(read_json(artifact_path(Stage::embed)).at("targets"));
        json artifact;
        if (cfg.data.frames) {
          std::size_t rows = 0, dim = 0;
          for (const auto& id : p.training_ids()) {
            auto it = data.frames.find(id);
            if (it == data.frames.end()) throw Error(Errc::coverage, "no frames for instance '" + id + "'");
            rows += it->second.frames.rows();
            dim = it->second.frames.cols();
          }
          Matrix pooled(rows, dim);
          std::size_t r = 0;
          for (const auto& id : p.training_ids()) {
            const auto& f = data.frames.at(id).frames;
            std::copy(f.data().begin(), f.data().end(), pooled.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
            r += f.rows();
          }
          CodebookConfig cb = cfg.codebook;
          cb.seed = derive_seed(sseed, "codebook");
          st.codebook = fit_codebook(pooled, cb).codebook;
          artifact["codebook"] = to_json(*st.codebook);
        }
        std::vector<Vector> x;
        std::vector<std::string> used;
        for (const auto& id : p.training_ids()) {
          auto t = st.targets->find(id);
          if (t == st.targets->end()) continue;
          x.push_back(instance_features(id));
          used.push_back(id);
        }
        const std::size_t dims = bundle().model.hyper.code_size;
        Matrix y(used.size(), dims);
        for (std::size_t i = 0; i < used.size(); ++i) {
          const auto& t = st.targets->at(used[i]);
          std::copy(t.begin(), t.end(), y.row(i).begin());
        }
        st.im = train_im(x, y, cfg.svr, cfg.threads);
        std::size_t unconverged = 0;
        for (bool c : st.im->converged) unconverged += !c;
        if (unconverged) spdlog::warn("trial {}: {} SVR coordinates hit the iteration limit", st.index, unconverged);
        artifact["model"] = to_json(*st.im);
        artifact["training_ids"] = used;
        save(std::move(artifact));
        break;
      }

      case Stage::predict: {
        im_model();
        const auto& store = this->store();
        const auto& universe = this->universe();
        std::vector<RankedScores> ranked;
        std::map<std::string, Vector> predictions;
        for (const auto& id : eval_ids()) {
          auto s_hat = predict_im(*st.im, instance_features(id));
          ranked.push_back(prime(s_hat, store, universe, id));
          predictions.emplace(id, std::move(s_hat));
        }
        st.scores = std::move(ranked);
        st.predictions = std::move(predictions);
        json list = json::array();
        for (const auto& r : *st.scores) list.push_back(to_json(r));
        save(json{{"scores", list}, {"predictions", *st.predictions}});
        break;
      }

      case Stage::evaluate: {
        const auto& p = plan();
        const auto& b = bundle();
        scores();
        const auto& store = this->store();
        const auto& universe = this->universe();
        if (!st.targets) st.targets = vectors_from_json(read_json(artifact_path(Stage::embed)).at("targets"));
        const std::unordered_set<std::string> ranked_labels(universe.begin(), universe.end());
        std::vector<Document> truth;
        std::vector<Document> full;
        std::size_t dropped = 0;
        for (const auto& id : eval_ids()) {
          const auto& d = TrialAccess::doc(data, id, false);
          auto r = restrict(d, ranked_labels);
          dropped += d.labels.size() - r.labels.size();
          if (r.labels.empty()) continue;
          truth.push_back(std::move(r));
          full.push_back(d);
        }
        if (dropped) spdlog::info("trial {}: {} test labels outside the ranked universe ignored", st.index, dropped);
        std::vector<RankedScores> kept;
        std::unordered_set<std::string> truth_ids;
        for (const auto& d : truth) truth_ids.insert(d.doc_id);
        for (const auto& r : *st.scores)
          if (truth_ids.count(r.doc_id)) kept.push_back(r);

        const auto rules = SubsetRules::from(p.labels, b.features.vocabulary);
        auto& sum = st.summary;
        sum.metrics = evaluate_trial(kept, truth, rules);
        if (cfg.error_free_oracle) sum.oracle_metrics = error_free_metrics(*st.encoder, store, universe, full, rules);

        std::vector<Vector> pred, tgt;
        for (const auto& d : full) {
          auto t = st.targets->find(d.doc_id);
          if (t == st.targets->end()) continue;
          pred.push_back(st.predictions->at(d.doc_id));
          tgt.push_back(t->second);
        }
        try {
          sum.regression = regression_error(pred, tgt, scattering(store));
        } catch (const Error& e) {
          spdlog::warn("trial {}: regression statistics unavailable: {}", st.index, e.what());
        }
        sum.ok = true;
        st.evaluated = true;
        save(to_json(sum));
        break;
      }
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const json::exception& e) {
    throw StageError(stage, Error(Errc::parse, e.what()));
  } catch (const std::exception& e) {
    throw StageError(stage, Error(Errc::numeric, e.what()));
  }
}

// ---------------------------------------------------------------- experiment

TrialMetrics error_free_metrics(const ConceptEncoder& encoder, const ConceptStore& store,
                                std::span<const std::string> universe, std::span<const Document> test_docs,
                                const SubsetRules& rules) {
  const std::unordered_set<std::string> ranked_labels(universe.begin(), universe.end());
  std::vector<RankedScores> ranked;
  std::vector<Document> truth;
  for (const auto& d : test_docs) {
    auto r = restrict(d, ranked_labels);
    if (r.labels.empty()) continue;
    Vector s;
    try {
      s = compress_target(encoder, d);
    } catch (const Error& e) {
      if (e.code() != Errc::inference) throw;
      continue;
    }
    ranked.push_back(prime(s, store, universe, d.doc_id));
    truth.push_back(std::move(r));
  }
  return evaluate_trial(ranked, truth, rules);
}

bool ExperimentResult::all_failed() const {
  return std::none_of(trials.begin(), trials.end(), [](const auto& t) { return t.ok; });
}

bool ExperimentResult::any_failed() const {
  return std::any_of(trials.begin(), trials.end(), [](const auto& t) { return !t.ok; });
}

namespace {

json stats_json(const RegressionStats& r) {
  return json{{"mean_error", r.mean_error}, {"scattering", r.scattering}, {"relative_error", r.relative_error}};
}

}  // namespace

json to_json(const TrialSummary& s) {
  json j{{"trial", s.index}, {"seed", hex64(s.seed)}, {"ok", s.ok}};
  if (s.failed_stage) j["failed_stage"] = to_string(*s.failed_stage);
  if (!s.ok && s.failed_stage) j["error_code"] = std::string(to_string(s.error_code));
  if (!s.error.empty()) j["error"] = s.error;
  if (s.ok) {
    j["metrics"] = to_json(s.metrics);
    if (s.oracle_metrics) j["error_free_metrics"] = to_json(*s.oracle_metrics);
    if (s.regression) j["regression"] = stats_json(*s.regression);
  }
  return j;
}

json to_json(const ExperimentResult& r) {
  json trials = json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  json j{{"report", to_json(r.report)}, {"trials", trials}};
  if (r.oracle_report) j["error_free_report"] = to_json(*r.oracle_report);
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::optional<std::size_t> only_trial, Stage last,
                                Stage first) {
  config.validate();
  if (first > last) throw Error(Errc::config, "stage " + to_string(first) + " comes after " + to_string(last));
  if (only_trial && *only_trial >= config.trials)
    throw Error(Errc::config, "trial " + std::to_string(*only_trial) + " out of range (trials = " +
                                  std::to_string(config.trials) + ")");
  const auto data = ExperimentData::load(config);
  fs::create_directories(config.output_dir);
  ExperimentResult result;
  result.config_hash = config.hash();
  auto cfg_json = to_json(config);
  cfg_json.erase("output_dir");
  cfg_json.erase("threads");
  write_json(config.output_dir / "config.json",
             with_provenance(json{{"config", cfg_json}}, result.config_hash, "config", config.seed));

  std::vector<TrialMetrics> metrics, oracle;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < config.trials; ++i) {
    if (only_trial && *only_trial != i) continue;
    Trial trial(config, data, i);
    TrialSummary summary;
    try {
      trial.run_range(first, last);
      summary = trial.summary();
      summary.ok = true;
    } catch (const StageError& e) {
      summary.index = i;
      summary.seed = trial.seed();
      summary.ok = false;
      summary.failed_stage = e.stage();
      summary.error_code = e.code();
      summary.error = e.what();
      spdlog::error("trial {} failed in {}: {}", i, to_string(e.stage()), e.what());
      failed.push_back(i);
    }
    if (summary.ok && last == Stage::evaluate) {
      metrics.push_back(summary.metrics);
      if (summary.oracle_metrics) oracle.push_back(*summary.oracle_metrics);
    }
    result.trials.push_back(std::move(summary));
  }

  if (last == Stage::evaluate) {
    result.report = aggregate(metrics, failed);
    if (!oracle.empty()) result.oracle_report = aggregate(oracle, failed);
    const std::uint64_t rseed = derive_seed(config.seed, "report");
    write_json(config.output_dir / "report.json", with_provenance(to_json(result), result.config_hash, "report", rseed));
    std::ofstream txt(config.output_dir / "report.txt", std::ios::binary);
    txt << "# " << config.name << " protocol=" << to_string(config.protocol) << " config_hash="
        << hex64(result.config_hash) << " seed=" << hex64(rseed) << "\n";
    txt << format_table(result.report);
    if (result.oracle_report) txt << "\nerror-free regression:\n" << format_table(*result.oracle_report);
    if (!txt) throw Error(Errc::io, "cannot write report.txt");
  }
  return result;
}

EvalReport error_free_upper_bound(const ExperimentConfig& config) {
  config.validate();
  const auto data = ExperimentData::load(config);
  std::vector<TrialMetrics> metrics;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < config.trials; ++i) {
    Trial trial(config, data, i);
    try {
      trial.run_until(Stage::build_store);
      const auto& p = trial.plan();
      const auto& b = trial.bundle();
      ConceptEncoder enc(b.model, b.features, b.topics, b.infer);
      std::vector<Document> docs;
      for (const auto& id : sorted_union(p.test_ids(), p.im_val)) docs.push_back(*data.corpus.find(id));
      metrics.push_back(error_free_metrics(enc, trial.store(), trial.universe(), docs,
                                           SubsetRules::from(p.labels, b.features.vocabulary)));
    } catch (const StageError& e) {
      spdlog::error("trial {} failed in {}: {}", i, to_string(e.stage()), e.what());
      failed.push_back(i);
    }
  }
  return aggregate(metrics, failed);
}

}  // namespace cezsl
