#include <algorithm>
#include <cstdio>

#include "cezsl/synthetic.hpp"

namespace cezsl {

using nlohmann::json;

namespace {

std::string label_name(std::size_t topic, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%zu_l%zu", topic, k);
  return buf;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& c) {
  if (c.topics < 1 || c.labels_per_topic < 1 || c.documents < 1 || c.min_labels < 1 || c.min_labels > c.max_labels ||
      c.max_labels > c.labels_per_topic || c.instance_dim < 1)
    throw Error(Errc::config, "inconsistent synthetic dataset parameters");
  Rng rng(derive_seed(c.seed, "synthetic"));

  std::vector<Vector> centres(c.topics, Vector(c.instance_dim));
  for (auto& v : centres)
    for (auto& x : v) x = rng.normal(0.0, c.centre_scale);
  std::vector<std::vector<Vector>> offsets(c.topics, std::vector<Vector>(c.labels_per_topic, Vector(c.instance_dim)));
  for (auto& topic : offsets)
    for (auto& v : topic)
      for (auto& x : v) x = rng.normal(0.0, c.label_scale);
  // frame-level emitters: one Gaussian mean per topic
  std::vector<Vector> frame_means(c.topics, Vector(c.frame_dim));
  for (auto& v : frame_means)
    for (auto& x : v) x = rng.normal(0.0, 2.0);

  SyntheticDataset out;
  for (std::size_t t = 0; t < c.topics; ++t)
    for (std::size_t k = 0; k < c.labels_per_topic; ++k) out.corpus.vocabulary.push_back(label_name(t, k));

  char id[32];
  for (std::size_t d = 0; d < c.documents; ++d) {
    std::snprintf(id, sizeof id, "doc%05zu", d);
    const std::size_t topic = rng.index(c.topics);
    const std::size_t n = c.min_labels + rng.index(c.max_labels - c.min_labels + 1);
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    std::vector<std::string> labels;
    while (labels.size() < n) {
      std::size_t t = topic;
      if (c.topics > 1 && rng.uniform() < c.off_topic_rate) t = (topic + 1 + rng.index(c.topics - 1)) % c.topics;
      const std::size_t k = rng.index(c.labels_per_topic);
      const auto name = label_name(t, k);
      if (std::find(labels.begin(), labels.end(), name) != labels.end()) continue;
      labels.push_back(name);
      picked.emplace_back(t, k);
    }
    out.corpus.documents.push_back(make_document(id, labels));
    out.topic_of_document.push_back(topic);

    Vector x = centres[topic];
    for (const auto& [t, k] : picked)
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += offsets[t][k][i] / static_cast<double>(picked.size());
    for (auto& v : x) v += rng.normal(0.0, c.noise);
    out.vectors.push_back({id, std::move(x)});

    if (c.frames_per_instance > 0) {
      FrameSequence seq{id, Matrix(c.frames_per_instance, c.frame_dim)};
      for (std::size_t f = 0; f < c.frames_per_instance; ++f) {
        // most frames from the document topic, the rest from its labels' topics
        const auto& src = rng.uniform() < 0.7 ? frame_means[topic] : frame_means[picked[rng.index(picked.size())].first];
        for (std::size_t i = 0; i < c.frame_dim; ++i) seq.frames(f, i) = src[i] + rng.normal(0.0, 0.5);
      }
      out.frames.push_back(std::move(seq));
    }
  }
  return out;
}

void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(data.corpus, dir / "corpus.jsonl");
  save_vectors(data.vectors, dir / "vectors.jsonl");
  if (!data.frames.empty()) save_frames(data.frames, dir / "frames.jsonl");
}

json to_json(const SyntheticConfig& c) {
  return json{{"topics", c.topics},
              {"labels_per_topic", c.labels_per_topic},
              {"documents", c.documents},
              {"min_labels", c.min_labels},
              {"max_labels", c.max_labels},
              {"off_topic_rate", c.off_topic_rate},
              {"instance_dim", c.instance_dim},
              {"centre_scale", c.centre_scale},
              {"label_scale", c.label_scale},
              {"noise", c.noise},
              {"frames_per_instance", c.frames_per_instance},
              {"frame_dim", c.frame_dim},
              {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  c.topics = j.value("topics", c.topics);
  c.labels_per_topic = j.value("labels_per_topic", c.labels_per_topic);
  c.documents = j.value("documents", c.documents);
  c.min_labels = j.value("min_labels", c.min_labels);
  c.max_labels = j.value("max_labels", c.max_labels);
  c.off_topic_rate = j.value("off_topic_rate", c.off_topic_rate);
  c.instance_dim = j.value("instance_dim", c.instance_dim);
  c.centre_scale = j.value("centre_scale", c.centre_scale);
  c.label_scale = j.value("label_scale", c.label_scale);
  c.noise = j.value("noise", c.noise);
  c.frames_per_instance = j.value("frames_per_instance", c.frames_per_instance);
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace cezsl
