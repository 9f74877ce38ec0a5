#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"

namespace cezsl {

/// One annotation document: the label set attached to a single instance.
struct Document {
  std::string doc_id;
  std::vector<std::string> labels;  ///< insertion-ordered, no duplicates

  bool has(const std::string& label) const;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<std::string> vocabulary;  ///< stable order, persisted with every artifact
  std::vector<std::string> declared_oov;  ///< labels seen in documents but outside an explicit vocabulary

  const Document* find(const std::string& doc_id) const;
  std::unordered_map<std::string, std::size_t> vocabulary_index() const;
};

/// Build a document, deduplicating labels while keeping first-seen order.
/// Throws Errc::rejected_record on an empty label set.
Document make_document(std::string doc_id, const std::vector<std::string>& labels);

/// Read line-delimited JSON records {"doc_id": ..., "labels": [...]}. The
/// vocabulary is the first-seen union of labels unless `vocabulary_path` names
/// a file with one label per line.
Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& vocabulary_path = std::nullopt);
Corpus parse_corpus(std::istream& in, const std::string& source_name = "<stream>");
std::vector<std::string> load_vocabulary(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct LabelFractions {
  double train = 0.75;
  double zsl = 0.25;
  double oov = 0.0;
};

struct LabelPartition {
  std::vector<std::string> train;  ///< T-class labels
  std::vector<std::string> zsl;
  std::vector<std::string> oov;

  enum class Kind { train, zsl, oov, unknown };
  Kind kind_of(const std::string& label) const;
};

/// Random disjoint partition with largest-remainder sizes; deterministic in `seed`.
LabelPartition split_labels(const std::vector<std::string>& vocabulary, const LabelFractions& fractions,
                            std::uint64_t seed);

/// Section sizes from fractions by largest-remainder rounding, ties to the earlier slot.
std::array<std::size_t, 3> largest_remainder_sizes(std::size_t total, const std::array<double, 3>& fractions);

enum class Protocol { wct, wct_oov, cct };

std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name);

struct SplitOptions {
  double d1_fraction = 2.0 / 3.0;     ///< |D1| / |corpus|
  double s_val_fraction = 0.1;        ///< share of semantics documents held out for validation
};

struct SplitPlan {
  Protocol protocol = Protocol::wct;
  std::uint64_t seed = 0;
  LabelPartition labels;
  std::vector<std::string> s_tr, s_val;
  std::vector<std::string> im_tr, im_val, im_tst;
  std::vector<std::string> oov_tr, oov_tst;
  std::vector<std::string> excluded;  ///< documents no protocol rule admits (logged at split time)

  /// Documents the instance-mapping regressor trains on.
  const std::vector<std::string>& training_ids() const;
  /// Documents evaluated for ZSL: im_tst, plus oov_tst outside plain WCT.
  std::vector<std::string> test_ids() const;
};

SplitPlan split_instances(const Corpus& corpus, const LabelPartition& labels, Protocol protocol,
                          std::uint64_t seed, const SplitOptions& options = {});

nlohmann::json to_json(const LabelPartition& partition);
LabelPartition label_partition_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const nlohmann::json& j);

}  // namespace cezsl
