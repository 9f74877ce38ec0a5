#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cezsl/siamese.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

using nlohmann::json;

std::vector<std::size_t> SubNetworkParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(layers.front().weights.cols());
  for (const auto& layer : layers) sizes.push_back(layer.weights.rows());
  return sizes;
}

std::size_t SubNetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.data().size() + layer.bias.size();
  return n;
}

SubNetworkParams SubNetworkParams::zeros_like() const {
  SubNetworkParams out;
  for (const auto& layer : layers)
    out.layers.push_back({Matrix(layer.weights.rows(), layer.weights.cols()), Vector(layer.bias.size(), 0.0)});
  return out;
}

void SubNetworkParams::add_scaled(const SubNetworkParams& other, double scale) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    simd::axpy(scale, other.layers[l].weights.data(), layers[l].weights.data());
    simd::axpy(scale, other.layers[l].bias, layers[l].bias);
  }
}

bool SubNetworkParams::all_finite() const {
  for (const auto& layer : layers)
    if (!cezsl::all_finite(layer.weights.data()) || !cezsl::all_finite(layer.bias)) return false;
  return true;
}

bool SubNetworkParams::operator==(const SubNetworkParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (!(layers[l].weights == other.layers[l].weights) || layers[l].bias != other.layers[l].bias) return false;
  return true;
}

double CeHyperParams::effective_beta() const {
  return beta > 0.0 ? beta : std::sqrt(static_cast<double>(code_size));
}

void CeHyperParams::validate() const {
  if (!(lambda > 0.0)) throw Error(Errc::config, "lambda must be positive");
  if (!(learning_rate > 0.0)) throw Error(Errc::config, "learning_rate must be positive");
  if (rho < 0.0 || rho > 1.0) throw Error(Errc::config, "rho must lie in [0, 1]");
  if (alpha < 0.0) throw Error(Errc::config, "alpha must be nonnegative");
  if (code_size == 0) throw Error(Errc::config, "code_size must be positive");
  if (batch_size == 0) throw Error(Errc::config, "batch_size must be positive");
  if (decay_every == 0) throw Error(Errc::config, "decay_every must be positive");
  if (case_mix[0] < 0 || case_mix[1] < 0 || case_mix[2] < 0 || case_mix[0] + case_mix[1] + case_mix[2] <= 0)
    throw Error(Errc::config, "case_mix must be nonnegative with a positive sum");
}

Vector ConceptInput::input() const {
  Vector x = label_features;
  x.insert(x.end(), context.values.begin(), context.values.end());
  return x;
}

PairCase pair_case(Polarity a, Polarity b) {
  if (a == Polarity::positive && b == Polarity::positive) return PairCase::both_positive;
  if (a == Polarity::negative && b == Polarity::negative) return PairCase::both_negative;
  return PairCase::mixed;
}

ConceptPair make_pair(const ConceptInput& a, const ConceptInput& b, double lambda) {
  return ConceptPair{a.input(), b.input(), a.target.values, b.target.values,
                     context_similarity(a.context, b.context, lambda), pair_case(a.polarity, b.polarity)};
}

namespace {

Matrix uniform_init(std::size_t out, std::size_t in, Rng& rng) {
  Matrix w(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& x : w.data()) x = rng.uniform(-limit, limit);
  return w;
}

// y = tanh(W x + b)
void dense_tanh(const DenseLayer& layer, std::span<const double> x, Vector& y) {
  y.resize(layer.weights.rows());
  for (std::size_t r = 0; r < y.size(); ++r) y[r] = std::tanh(simd::dot(layer.weights.row(r), x) + layer.bias[r]);
}

// Stacked autoencoder pretraining of one layer on `data` rows; returns the per-epoch error.
std::vector<double> pretrain_layer(DenseLayer& layer, const Matrix& data, std::size_t epochs, double lr, Rng& rng) {
  const std::size_t in = layer.weights.cols();
  const std::size_t out = layer.weights.rows();
  DenseLayer decoder{uniform_init(in, out, rng), Vector(in, 0.0)};
  const double n = static_cast<double>(data.rows());
  std::vector<double> errors;
  Vector h, recon(in), g_recon(in), g_h(out);
  for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
    DenseLayer g_enc{Matrix(out, in), Vector(out, 0.0)};
    DenseLayer g_dec{Matrix(in, out), Vector(in, 0.0)};
    double error = 0.0;
    for (std::size_t s = 0; s < data.rows(); ++s) {
      const auto x = data.row(s);
      dense_tanh(layer, x, h);
      for (std::size_t i = 0; i < in; ++i) {
        recon[i] = simd::dot(decoder.weights.row(i), h) + decoder.bias[i];
        g_recon[i] = (recon[i] - x[i]) / n;
        error += 0.5 * (recon[i] - x[i]) * (recon[i] - x[i]) / n;
      }
      std::fill(g_h.begin(), g_h.end(), 0.0);
      for (std::size_t i = 0; i < in; ++i) {
        simd::axpy(g_recon[i], h, g_dec.weights.row(i));
        g_dec.bias[i] += g_recon[i];
        simd::axpy(g_recon[i], decoder.weights.row(i), g_h);
      }
      for (std::size_t j = 0; j < out; ++j) {
        const double delta = g_h[j] * (1.0 - h[j] * h[j]);
        simd::axpy(delta, x, g_enc.weights.row(j));
        g_enc.bias[j] += delta;
      }
    }
    errors.push_back(error);
    if (epoch == epochs) break;
    simd::axpy(-lr, g_enc.weights.data(), layer.weights.data());
    simd::axpy(-lr, g_enc.bias, layer.bias);
    simd::axpy(-lr, g_dec.weights.data(), decoder.weights.data());
    simd::axpy(-lr, g_dec.bias, decoder.bias);
  }
  return errors;
}

}  // namespace

SubNetworkParams init_network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed, bool pretrain,
                              const Matrix* pretrain_data, std::size_t pretrain_epochs, double pretrain_learning_rate,
                              PretrainTrace* trace) {
  if (layer_sizes.size() < 3) throw Error(Errc::config, "a sub-network needs input, coding and output layers");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw Error(Errc::config, "layer sizes must be positive");

  Rng rng(derive_seed(seed, "init_network"));
  SubNetworkParams params;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l)
    params.layers.push_back({uniform_init(layer_sizes[l], layer_sizes[l - 1], rng), Vector(layer_sizes[l], 0.0)});

  if (!pretrain) return params;
  if (pretrain_data == nullptr || pretrain_data->rows() == 0)
    throw Error(Errc::config, "pretraining requested without data");
  if (pretrain_data->cols() != layer_sizes.front())
    throw Error(Errc::dimension, "pretraining data has " + std::to_string(pretrain_data->cols()) +
                                     " columns, network input is " + std::to_string(layer_sizes.front()));

  Rng ae_rng(derive_seed(seed, "pretrain"));
  Matrix data = *pretrain_data;
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    auto errors = pretrain_layer(params.layers[l], data, pretrain_epochs, pretrain_learning_rate, ae_rng);
    if (trace) trace->reconstruction_error.push_back(std::move(errors));
    Matrix next(data.rows(), params.layers[l].weights.rows());
    Vector h;
    for (std::size_t s = 0; s < data.rows(); ++s) {
      dense_tanh(params.layers[l], data.row(s), h);
      std::copy(h.begin(), h.end(), next.row(s).begin());
    }
    data = std::move(next);
  }
  return params;
}

ForwardResult forward(const SubNetworkParams& params, std::span<const double> input) {
  if (input.size() != params.input_size())
    throw Error(Errc::dimension, "network input has " + std::to_string(input.size()) + " entries, expected " +
                                     std::to_string(params.input_size()));
  ForwardResult result;
  result.activations.resize(params.layers.size());
  std::span<const double> x = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    dense_tanh(params.layers[l], x, result.activations[l]);
    x = result.activations[l];
  }
  if (!all_finite(result.prediction())) throw Error(Errc::numeric, "non-finite activation in forward pass");
  return result;
}

double kappa(std::span<const double> target, KappaRule rule) {
  const auto positives = static_cast<double>(std::count_if(target.begin(), target.end(), [](double y) { return y > 0.0; }));
  const auto n = static_cast<double>(target.size());
  return rule == KappaRule::negatives_fraction ? (n - positives) / n : positives / n;
}

namespace {

double clamp_prediction(double y) {
  return std::clamp(y, -kPredictionClamp, kPredictionClamp);
}

}  // namespace

double prediction_loss(std::span<const double> target, std::span<const double> prediction, KappaRule rule) {
  if (target.size() != prediction.size()) throw Error(Errc::dimension, "target and prediction differ in length");
  const double k = kappa(target, rule);
  double sum = 0.0;
  bool clamped = false;
  for (std::size_t j = 0; j < target.size(); ++j) {
    const double yh = clamp_prediction(prediction[j]);
    clamped |= yh != prediction[j];
    const double y = target[j];
    // Skip zero-weight terms so ln(0) never multiplies a zero coefficient.
    if (1.0 + y != 0.0) sum += k * (1.0 + y) * std::log1p(yh);
    if (1.0 - y != 0.0) sum += (1.0 - k) * (1.0 - y) * std::log1p(-yh);
  }
  if (clamped) spdlog::debug("prediction clamped to +-{} before logarithms", kPredictionClamp);
  return -sum / static_cast<double>(target.size());
}

namespace {

// dL_p / d prediction
void prediction_loss_grad(std::span<const double> target, std::span<const double> prediction, KappaRule rule,
                          Vector& grad) {
  const double k = kappa(target, rule);
  const double n = static_cast<double>(target.size());
  grad.resize(target.size());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const double yh = clamp_prediction(prediction[j]);
    const double y = target[j];
    grad[j] = -(k * (1.0 + y) / (1.0 + yh) - (1.0 - k) * (1.0 - y) / (1.0 - yh)) / n;
  }
}

double distance_residual(double e, double similarity, PairCase kind, double beta) {
  return kind == PairCase::mixed ? e - beta : e - beta * (1.0 - similarity);
}

double case_weight(double similarity, PairCase kind, double rho) {
  switch (kind) {
    case PairCase::both_positive: return 1.0;
    case PairCase::both_negative: return rho;
    case PairCase::mixed: return similarity;
  }
  return 0.0;
}

}  // namespace

double distance_loss(std::span<const double> code1, std::span<const double> code2, double similarity, PairCase kind,
                     double beta, double rho) {
  if (code1.size() != code2.size()) throw Error(Errc::dimension, "codes differ in length");
  const double e = simd::distance(code1, code2);
  const double r = distance_residual(e, similarity, kind, beta);
  return case_weight(similarity, kind, rho) * r * r;
}

double total_loss(const ConceptPair& pair, const SubNetworkParams& params, const CeHyperParams& hyper) {
  const auto f1 = forward(params, pair.input1);
  const auto f2 = forward(params, pair.input2);
  return prediction_loss(pair.target1, f1.prediction(), hyper.kappa_rule) +
         prediction_loss(pair.target2, f2.prediction(), hyper.kappa_rule) +
         hyper.alpha * distance_loss(f1.code(), f2.code(), pair.similarity, pair.kind, hyper.effective_beta(), hyper.rho);
}

namespace {

// Backpropagate one tower. `g_out` is dL/d prediction, `g_code` an extra
// gradient injected at the coding layer.
void backward(const SubNetworkParams& params, std::span<const double> input, const ForwardResult& fwd, Vector g_out,
              const Vector& g_code, SubNetworkParams& grads) {
  const std::size_t L = params.layers.size();
  Vector g = std::move(g_out);
  Vector g_prev;
  for (std::size_t l = L; l-- > 0;) {
    if (l == L - 2)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_code[i];
    const Vector& a = fwd.activations[l];
    const std::span<const double> a_in = l == 0 ? input : std::span<const double>(fwd.activations[l - 1]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
    auto& gl = grads.layers[l];
    for (std::size_t i = 0; i < g.size(); ++i) {
      simd::axpy(g[i], a_in, gl.weights.row(i));
      gl.bias[i] += g[i];
    }
    if (l == 0) break;
    g_prev.assign(a_in.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) simd::axpy(g[i], params.layers[l].weights.row(i), g_prev);
    std::swap(g, g_prev);
  }
}

}  // namespace

SubNetworkParams gradient(const ConceptPair& pair, const SubNetworkParams& params, const CeHyperParams& hyper,
                          double* loss) {
  const auto f1 = forward(params, pair.input1);
  const auto f2 = forward(params, pair.input2);
  const double beta = hyper.effective_beta();

  const auto& c1 = f1.code();
  const auto& c2 = f2.code();
  const double e = simd::distance(c1, c2);
  const double r = distance_residual(e, pair.similarity, pair.kind, beta);
  const double w = case_weight(pair.similarity, pair.kind, hyper.rho);
  if (loss)
    *loss = prediction_loss(pair.target1, f1.prediction(), hyper.kappa_rule) +
            prediction_loss(pair.target2, f2.prediction(), hyper.kappa_rule) + hyper.alpha * w * r * r;

  // d(alpha * L_S)/dc1 = alpha * w * 2r * (c1 - c2) / E; zero at E = 0.
  Vector g_code1(c1.size(), 0.0), g_code2(c1.size(), 0.0);
  if (e > 0.0) {
    const double coeff = hyper.alpha * w * 2.0 * r / e;
    for (std::size_t i = 0; i < c1.size(); ++i) {
      g_code1[i] = coeff * (c1[i] - c2[i]);
      g_code2[i] = -g_code1[i];
    }
  }
  Vector g_out1, g_out2;
  prediction_loss_grad(pair.target1, f1.prediction(), hyper.kappa_rule, g_out1);
  prediction_loss_grad(pair.target2, f2.prediction(), hyper.kappa_rule, g_out2);

  SubNetworkParams grads = params.zeros_like();
  backward(params, pair.input1, f1, std::move(g_out1), g_code1, grads);
  backward(params, pair.input2, f2, std::move(g_out2), g_code2, grads);
  if (!grads.all_finite()) throw Error(Errc::numeric, "non-finite gradient");
  return grads;
}

std::optional<std::string> draw_negative_label(const Document& doc, const std::vector<std::string>& vocabulary, Rng& rng) {
  std::vector<const std::string*> candidates;
  for (const auto& label : vocabulary)
    if (!doc.has(label)) candidates.push_back(&label);
  if (candidates.empty()) {
    spdlog::warn("document '{}' uses the whole vocabulary; no negative example can be synthesized", doc.doc_id);
    return std::nullopt;
  }
  return *candidates[rng.index(candidates.size())];
}

ConceptInput make_positive(const ContextualDocument& doc, const std::string& label, const LabelFeatures& features) {
  return ConceptInput{label, doc.doc.doc_id, features.feature(label), doc.context, Polarity::positive, doc.bow};
}

std::optional<ConceptInput> make_negative(const ContextualDocument& doc, const std::vector<std::string>& vocabulary,
                                          const LabelFeatures& features, Rng& rng) {
  auto label = draw_negative_label(doc.doc, vocabulary, rng);
  if (!label) return std::nullopt;
  return ConceptInput{*label, doc.doc.doc_id, features.feature(*label), doc.context, Polarity::negative, flipped(doc.bow)};
}

namespace {

struct Concept {
  Vector input;
  const Vector* target;
  const ContextHistogram* context;
};

struct ConceptPool {
  std::vector<Concept> positives;
  std::vector<Concept> negatives;
  std::vector<Vector> negative_targets;
};

std::vector<Concept> positive_concepts(const std::vector<ContextualDocument>& docs, const LabelFeatures& features) {
  std::vector<Concept> out;
  for (const auto& doc : docs) {
    for (const auto& label : doc.doc.labels) {
      Vector x = features.feature(label);
      x.insert(x.end(), doc.context.values.begin(), doc.context.values.end());
      out.push_back({std::move(x), &doc.bow.values, &doc.context});
    }
  }
  return out;
}

// Negatives keep a pointer into `flipped_targets`, which holds one flipped BoW per document.
std::vector<Concept> negative_concepts(const std::vector<ContextualDocument>& docs, const SemanticsData& data,
                                       const std::vector<Vector>& flipped_targets, std::size_t ratio, Rng& rng) {
  std::vector<Concept> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    for (std::size_t n = 0; n < doc.doc.labels.size() * ratio; ++n) {
      auto label = draw_negative_label(doc.doc, data.vocabulary, rng);
      if (!label) break;
      Vector x = data.features.feature(*label);
      x.insert(x.end(), doc.context.values.begin(), doc.context.values.end());
      out.push_back({std::move(x), &flipped_targets[d], &doc.context});
    }
  }
  return out;
}

std::vector<ConceptPair> sample_pairs(const std::vector<Concept>& pos, const std::vector<Concept>& neg, std::size_t count,
                                      const CeHyperParams& hyper, Rng& rng) {
  std::vector<ConceptPair> pairs;
  pairs.reserve(count);
  std::array<double, 3> mix = hyper.case_mix;
  if (pos.size() < 2) mix[0] = 0.0;
  if (neg.size() < 2) mix[1] = 0.0;
  if (pos.empty() || neg.empty()) mix[2] = 0.0;
  if (mix[0] + mix[1] + mix[2] <= 0.0) return pairs;
  auto draw_two = [&](const std::vector<Concept>& from) {
    const std::size_t i = rng.index(from.size());
    std::size_t j = rng.index(from.size() - 1);
    if (j >= i) ++j;
    return std::pair{&from[i], &from[j]};
  };
  for (std::size_t p = 0; p < count; ++p) {
    const auto kind = static_cast<PairCase>(rng.discrete(mix));
    const Concept* a;
    const Concept* b;
    if (kind == PairCase::both_positive) {
      std::tie(a, b) = draw_two(pos);
    } else if (kind == PairCase::both_negative) {
      std::tie(a, b) = draw_two(neg);
    } else {
      a = &pos[rng.index(pos.size())];
      b = &neg[rng.index(neg.size())];
      if (rng.uniform() < 0.5) std::swap(a, b);
    }
    pairs.push_back(ConceptPair{a->input, b->input, *a->target, *b->target,
                                context_similarity(*a->context, *b->context, hyper.lambda), kind});
  }
  return pairs;
}

std::vector<Vector> flipped_targets(const std::vector<ContextualDocument>& docs) {
  std::vector<Vector> out;
  for (const auto& doc : docs) out.push_back(flipped(doc.bow).values);
  return out;
}

double mean_loss(const std::vector<ConceptPair>& pairs, const SubNetworkParams& params, const CeHyperParams& hyper) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& pair : pairs) sum += total_loss(pair, params, hyper);
  return sum / static_cast<double>(pairs.size());
}

}  // namespace

SiameseModel train(const SemanticsData& data, const CeHyperParams& hyper) {
  hyper.validate();
  if (data.vocabulary.empty()) throw Error(Errc::config, "semantics vocabulary is empty");
  const std::size_t topic_count = !data.train.empty() ? data.train.front().context.values.size() : 0;
  if (topic_count == 0) throw Error(Errc::config, "no semantics training documents");

  std::vector<std::size_t> sizes{data.vocabulary.size() + topic_count};
  sizes.insert(sizes.end(), hyper.hidden.begin(), hyper.hidden.end());
  sizes.push_back(hyper.code_size);
  sizes.push_back(data.vocabulary.size());

  const auto positives = positive_concepts(data.train, data.features);
  Matrix pretrain_data;
  if (hyper.pretrain) {
    pretrain_data = Matrix(positives.size(), sizes.front());
    for (std::size_t i = 0; i < positives.size(); ++i)
      std::copy(positives[i].input.begin(), positives[i].input.end(), pretrain_data.row(i).begin());
  }

  SiameseModel model;
  model.hyper = hyper;
  model.vocabulary = data.vocabulary;
  model.topic_count = topic_count;
  model.params = init_network(sizes, hyper.seed, hyper.pretrain, hyper.pretrain ? &pretrain_data : nullptr,
                              hyper.pretrain_epochs, hyper.pretrain_learning_rate);
  if (hyper.epochs == 0) return model;

  const auto train_flipped = flipped_targets(data.train);
  const auto val_flipped = flipped_targets(data.validation);
  std::vector<ConceptPair> val_pairs;
  if (!data.validation.empty()) {
    Rng val_rng(derive_seed(hyper.seed, "validation_pairs"));
    const auto val_pos = positive_concepts(data.validation, data.features);
    const auto val_neg = negative_concepts(data.validation, data, val_flipped, hyper.negative_ratio, val_rng);
    val_pairs = sample_pairs(val_pos, val_neg, val_pos.size(), hyper, val_rng);
  }

  Rng rng(derive_seed(hyper.seed, "train"));
  SubNetworkParams params = model.params;
  SubNetworkParams best = params;
  double best_val = val_pairs.empty() ? std::numeric_limits<double>::infinity() : mean_loss(val_pairs, params, hyper);
  std::size_t best_epoch = 0;
  const std::size_t pair_count = hyper.pairs_per_epoch > 0 ? hyper.pairs_per_epoch : positives.size();

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = hyper.learning_rate * std::pow(hyper.decay_factor, static_cast<double>(epoch / hyper.decay_every));
    auto epoch_positives = positives;
    rng.shuffle(epoch_positives);
    const auto negatives = negative_concepts(data.train, data, train_flipped, hyper.negative_ratio, rng);
    const auto pairs = sample_pairs(epoch_positives, negatives, pair_count, hyper, rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + hyper.batch_size);
      SubNetworkParams batch_grad = params.zeros_like();
      for (std::size_t p = start; p < end; ++p) {
        double loss = 0.0;
        batch_grad.add_scaled(gradient(pairs[p], params, hyper, &loss), 1.0);
        epoch_loss += loss;
      }
      params.add_scaled(batch_grad, -lr / static_cast<double>(end - start));
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, pairs.size()));
    model.trace.train_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss) || !params.all_finite()) {
      model.trace.best_epoch = best_epoch;
      throw Error(Errc::numeric, "training diverged at epoch " + std::to_string(epoch + 1) +
                                     " (loss trace length " + std::to_string(model.trace.train_loss.size()) + ")");
    }
    if (!val_pairs.empty()) {
      const double val = mean_loss(val_pairs, params, hyper);
      model.trace.validation_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        best = params;
        best_epoch = epoch + 1;
      }
    }
  }
  if (val_pairs.empty()) {
    best = params;
    best_epoch = hyper.epochs;
  }
  model.params = std::move(best);
  model.trace.best_epoch = best_epoch;
  return model;
}

Vector embed(const SubNetworkParams& params, std::span<const double> input) { return forward(params, input).code(); }

Vector embed(const SiameseModel& model, std::span<const double> label_features, const ContextHistogram& context) {
  if (label_features.size() != model.vocabulary.size() || context.values.size() != model.topic_count)
    throw Error(Errc::dimension, "concept features do not match the model's input layout");
  Vector x(label_features.begin(), label_features.end());
  x.insert(x.end(), context.values.begin(), context.values.end());
  return embed(model.params, x);
}

json to_json(const SubNetworkParams& params) {
  json layers = json::array();
  for (const auto& layer : params.layers)
    layers.push_back(json{{"weights", matrix_to_json(layer.weights)}, {"bias", layer.bias}});
  return json{{"layer_sizes", params.layer_sizes()}, {"layers", layers}};
}

SubNetworkParams params_from_json(const json& j) {
  SubNetworkParams params;
  for (const auto& layer : j.at("layers"))
    params.layers.push_back({matrix_from_json(layer.at("weights")), layer.at("bias").get<Vector>()});
  const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  if (sizes != params.layer_sizes()) throw Error(Errc::parse, "layer_sizes disagree with stored weights");
  return params;
}

json to_json(const CeHyperParams& h) {
  return json{{"hidden", h.hidden},
              {"code_size", h.code_size},
              {"lambda", h.lambda},
              {"beta", h.beta},
              {"rho", h.rho},
              {"alpha", h.alpha},
              {"learning_rate", h.learning_rate},
              {"decay_factor", h.decay_factor},
              {"decay_every", h.decay_every},
              {"batch_size", h.batch_size},
              {"epochs", h.epochs},
              {"negative_ratio", h.negative_ratio},
              {"case_mix", h.case_mix},
              {"pairs_per_epoch", h.pairs_per_epoch},
              {"kappa_rule", h.kappa_rule == KappaRule::negatives_fraction ? "negatives_fraction" : "positives_fraction"},
              {"pretrain", h.pretrain},
              {"pretrain_epochs", h.pretrain_epochs},
              {"pretrain_learning_rate", h.pretrain_learning_rate},
              {"seed", h.seed}};
}

CeHyperParams ce_hyper_from_json(const json& j, CeHyperParams h) {
  h.hidden = j.value("hidden", h.hidden);
  h.code_size = j.value("code_size", h.code_size);
  h.lambda = j.value("lambda", h.lambda);
  h.beta = j.value("beta", h.beta);
  h.rho = j.value("rho", h.rho);
  h.alpha = j.value("alpha", h.alpha);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.decay_factor = j.value("decay_factor", h.decay_factor);
  h.decay_every = j.value("decay_every", h.decay_every);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.negative_ratio = j.value("negative_ratio", h.negative_ratio);
  h.case_mix = j.value("case_mix", h.case_mix);
  h.pairs_per_epoch = j.value("pairs_per_epoch", h.pairs_per_epoch);
  if (j.contains("kappa_rule")) {
    const auto rule = j.at("kappa_rule").get<std::string>();
    if (rule == "negatives_fraction") h.kappa_rule = KappaRule::negatives_fraction;
    else if (rule == "positives_fraction") h.kappa_rule = KappaRule::positives_fraction;
    else throw Error(Errc::config, "unknown kappa_rule '" + rule + "'");
  }
  h.pretrain = j.value("pretrain", h.pretrain);
  h.pretrain_epochs = j.value("pretrain_epochs", h.pretrain_epochs);
  h.pretrain_learning_rate = j.value("pretrain_learning_rate", h.pretrain_learning_rate);
  h.seed = j.value("seed", h.seed);
  return h;
}

json to_json(const SiameseModel& model) {
  return json{{"params", to_json(model.params)},
              {"hyper", to_json(model.hyper)},
              {"vocabulary", model.vocabulary},
              {"topic_count", model.topic_count},
              {"trace",
               {{"train_loss", model.trace.train_loss},
                {"validation_loss", model.trace.validation_loss},
                {"best_epoch", model.trace.best_epoch}}}};
}

SiameseModel siamese_model_from_json(const json& j) {
  SiameseModel model;
  model.params = params_from_json(j.at("params"));
  model.hyper = ce_hyper_from_json(j.at("hyper"));
  model.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  model.topic_count = j.at("topic_count").get<std::size_t>();
  const auto& trace = j.at("trace");
  model.trace.train_loss = trace.at("train_loss").get<std::vector<double>>();
  model.trace.validation_loss = trace.at("validation_loss").get<std::vector<double>>();
  model.trace.best_epoch = trace.at("best_epoch").get<std::size_t>();
  return model;
}

}  // namespace cezsl
