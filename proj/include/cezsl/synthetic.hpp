#pragma once

// Planted-topic dataset generator: documents draw their labels mostly from
// one topic; instance vectors sit near that topic's cluster centre.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/corpus.hpp"
#include "cezsl/instance_features.hpp"

namespace cezsl {

struct SyntheticConfig {
  std::size_t topics = 6;
  std::size_t labels_per_topic = 8;
  std::size_t documents = 600;
  std::size_t min_labels = 3;
  std::size_t max_labels = 5;
  double off_topic_rate = 0.1;   ///< chance each label is drawn from a random other topic
  std::size_t instance_dim = 16;
  double centre_scale = 1.0;     ///< stddev of topic cluster centres
  double label_scale = 0.3;      ///< stddev of per-label offsets
  double noise = 0.25;           ///< stddev of per-instance noise
  std::size_t frames_per_instance = 0;  ///< > 0 also emits frame sequences
  std::size_t frame_dim = 4;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  Corpus corpus;
  std::vector<InstanceVector> vectors;
  std::vector<FrameSequence> frames;
  std::vector<std::size_t> topic_of_document;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Write corpus.jsonl, vectors.jsonl and (if any) frames.jsonl into `dir`.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

nlohmann::json to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig defaults = {});

}  // namespace cezsl
