#pragma once

// Siamese concept-embedding network: two weight-tied tanh towers that map
// [t(label), lc(context)] to a BoW prediction, coupled at their coding
// (penultimate) layers by a context-aware distance loss.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"
#include "cezsl/corpus.hpp"
#include "cezsl/semantics.hpp"

namespace cezsl {

struct DenseLayer {
  Matrix weights;  ///< out x in
  Vector bias;     ///< out
};

struct SubNetworkParams {
  std::vector<DenseLayer> layers;

  std::vector<std::size_t> layer_sizes() const;
  std::size_t input_size() const { return layers.front().weights.cols(); }
  std::size_t code_size() const { return layers[layers.size() - 2].weights.rows(); }
  std::size_t output_size() const { return layers.back().weights.rows(); }
  std::size_t parameter_count() const;

  /// Zero-valued parameters of identical shape (gradient accumulator).
  SubNetworkParams zeros_like() const;
  /// this += scale * other
  void add_scaled(const SubNetworkParams& other, double scale);
  bool all_finite() const;

  bool operator==(const SubNetworkParams& other) const;
};

/// Which entries of the target get the larger weight in the prediction loss.
enum class KappaRule {
  negatives_fraction,  ///< kappa = |{j : y_j = -1}| / n (positives weighted up)
  positives_fraction,  ///< kappa = |{j : y_j = +1}| / n
};

struct CeHyperParams {
  std::vector<std::size_t> hidden = {100, 100};
  std::size_t code_size = 10;  ///< d^(S)
  double lambda = 1.0;
  double beta = -1.0;  ///< <= 0 selects sqrt(code_size)
  double rho = 0.5;
  double alpha = 1.0;
  double learning_rate = 1e-4;
  double decay_factor = 0.95;
  std::size_t decay_every = 200;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t negative_ratio = 1;
  std::array<double, 3> case_mix = {0.5, 0.25, 0.25};  ///< I1, I2, I3 proportions
  std::size_t pairs_per_epoch = 0;  ///< 0 -> one pair per positive concept
  KappaRule kappa_rule = KappaRule::negatives_fraction;
  bool pretrain = false;
  std::size_t pretrain_epochs = 10;
  double pretrain_learning_rate = 0.01;
  std::uint64_t seed = 1;

  double effective_beta() const;
  void validate() const;
};

enum class Polarity { positive, negative };

struct ConceptInput {
  std::string label;
  std::string doc_id;
  Vector label_features;
  ContextHistogram context;
  Polarity polarity = Polarity::positive;
  BowTarget target;

  /// Network input: label features followed by the context histogram.
  Vector input() const;
};

enum class PairCase { both_positive, both_negative, mixed };

PairCase pair_case(Polarity a, Polarity b);

/// A training pair reduced to what the loss needs.
struct ConceptPair {
  Vector input1, input2;
  Vector target1, target2;
  double similarity = 1.0;
  PairCase kind = PairCase::both_positive;
};

ConceptPair make_pair(const ConceptInput& a, const ConceptInput& b, double lambda);

struct PretrainTrace {
  std::vector<std::vector<double>> reconstruction_error;  ///< per layer, per epoch
};

/// Scaled-uniform init; with `pretrain`, hidden layers are then fitted as
/// stacked tanh autoencoders (linear decoder, squared error, full-batch
/// gradient descent) on `pretrain_data` rows.
SubNetworkParams init_network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed, bool pretrain = false,
                              const Matrix* pretrain_data = nullptr, std::size_t pretrain_epochs = 10,
                              double pretrain_learning_rate = 0.01, PretrainTrace* trace = nullptr);

struct ForwardResult {
  std::vector<Vector> activations;  ///< one per layer; [size-2] is the code, back() the prediction

  const Vector& code() const { return activations[activations.size() - 2]; }
  const Vector& prediction() const { return activations.back(); }
};

ForwardResult forward(const SubNetworkParams& params, std::span<const double> input);

inline constexpr double kPredictionClamp = 1.0 - 1e-7;

double kappa(std::span<const double> target, KappaRule rule);
double prediction_loss(std::span<const double> target, std::span<const double> prediction,
                       KappaRule rule = KappaRule::negatives_fraction);
double distance_loss(std::span<const double> code1, std::span<const double> code2, double similarity, PairCase kind,
                     double beta, double rho);
double total_loss(const ConceptPair& pair, const SubNetworkParams& params, const CeHyperParams& hyper);

/// Analytic gradient of total_loss; both towers accumulate into one set.
SubNetworkParams gradient(const ConceptPair& pair, const SubNetworkParams& params, const CeHyperParams& hyper,
                          double* loss = nullptr);

/// Uniform draw from vocabulary minus the document's labels; nullopt when the
/// document already uses the whole vocabulary.
std::optional<std::string> draw_negative_label(const Document& doc, const std::vector<std::string>& vocabulary, Rng& rng);

struct ContextualDocument {
  Document doc;
  ContextHistogram context;
  BowTarget bow;
};

std::optional<ConceptInput> make_negative(const ContextualDocument& doc, const std::vector<std::string>& vocabulary,
                                          const LabelFeatures& features, Rng& rng);
ConceptInput make_positive(const ContextualDocument& doc, const std::string& label, const LabelFeatures& features);

struct SemanticsData {
  std::vector<std::string> vocabulary;  ///< Gamma^(S); BoW and output order
  LabelFeatures features;
  std::vector<ContextualDocument> train;
  std::vector<ContextualDocument> validation;
};

struct TrainTrace {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  ///< 0 = initial network
};

struct SiameseModel {
  SubNetworkParams params;
  CeHyperParams hyper;
  std::vector<std::string> vocabulary;
  std::size_t topic_count = 0;
  TrainTrace trace;
};

SiameseModel train(const SemanticsData& data, const CeHyperParams& hyper);

/// Coding-layer activations for one concept.
Vector embed(const SiameseModel& model, std::span<const double> label_features, const ContextHistogram& context);
Vector embed(const SubNetworkParams& params, std::span<const double> input);

nlohmann::json to_json(const SubNetworkParams& params);
SubNetworkParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CeHyperParams& hyper);
CeHyperParams ce_hyper_from_json(const nlohmann::json& j, CeHyperParams defaults = {});
nlohmann::json to_json(const SiameseModel& model);
SiameseModel siamese_model_from_json(const nlohmann::json& j);

}  // namespace cezsl
