#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "texmax/binary_io.hpp"
#include "texmax/descriptor.hpp"

namespace texmax {

/// Dense affine map y = W x + b with W stored [outputs x inputs] row-major.
struct LinearMap {
    std::size_t outputs = 0;
    std::size_t inputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    LinearMap() = default;
    LinearMap(std::size_t outputs, std::size_t inputs)
        : outputs(outputs), inputs(inputs), weights(outputs * inputs, 0.0), bias(outputs, 0.0) {}

    std::vector<double> apply(std::span<const double> x) const;
    /// W^T g
    std::vector<double> apply_transpose(std::span<const double> g) const;

    bool operator==(const LinearMap&) const = default;
};

/// One K-class softmax classifier per descriptor tap.
struct SoftmaxHead {
    std::vector<std::string> class_names;
    std::vector<LinearMap> taps;

    std::size_t classes() const noexcept { return class_names.size(); }
    bool operator==(const SoftmaxHead&) const = default;
};

/// One-vs-rest logistic scorers over the concatenated per-tap descriptors.
struct PhraseModel {
    std::vector<std::string> lexicon;
    std::vector<std::size_t> tap_channels;  // D_i; the input length is sum of D_i^2
    LinearMap scorer;                       // lexicon.size() outputs

    bool operator==(const PhraseModel&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.5;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

std::vector<double> softmax(std::span<const double> logits);

struct CrossEntropy {
    double loss = 0.0;
    std::vector<double> probabilities;
    std::vector<double> grad_logits;  // probabilities - one_hot(target)
};

/// Softmax loss -ln p_target computed with log-sum-exp, plus its gradient w.r.t. the logits.
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target);

/// Per-tap class probabilities C_i.
std::vector<std::vector<double>> predict_proba(const TextureDescriptor& desc, const SoftmaxHead& head);

/// Mean of the per-tap probability vectors.
std::vector<double> ensemble_proba(const std::vector<std::vector<double>>& per_tap);

struct SoftmaxTraining {
    SoftmaxHead head;
    /// loss_trace[tap][epoch]: full-batch mean cross-entropy + (lambda/2)||W||^2 after each epoch.
    std::vector<std::vector<double>> loss_trace;
};

/// Minibatch SGD per tap. Throws DataError for a class without examples and
/// NumericError if the loss exceeds 1e6.
SoftmaxTraining train_softmax(const std::vector<TextureDescriptor>& descriptors, const std::vector<std::size_t>& labels,
                              const std::vector<std::string>& class_names, const TrainConfig& cfg);

/// Step size below which full-batch gradient descent on a tap's softmax objective
/// cannot increase the loss: 1 / (0.5 * mean ||[x;1]||^2 + lambda).
double softmax_step_bound(const std::vector<TextureDescriptor>& descriptors, std::size_t tap, double weight_decay);

struct Accuracy {
    std::vector<double> per_tap;
    double ensemble = 0.0;
};

Accuracy evaluate(const SoftmaxHead& head, const std::vector<TextureDescriptor>& descriptors,
                  const std::vector<std::size_t>& labels);

struct PhraseTraining {
    PhraseModel model;
    std::vector<std::vector<double>> loss_trace;  // [phrase][epoch]
};

/// Lexicon is the sorted set of phrases appearing in `phrase_sets`.
PhraseTraining train_phrases(const std::vector<TextureDescriptor>& descriptors,
                             const std::vector<std::vector<std::string>>& phrase_sets, const TrainConfig& cfg);
/// Explicit lexicon; throws DataError naming any phrase without a positive example.
PhraseTraining train_phrases(const std::vector<TextureDescriptor>& descriptors,
                             const std::vector<std::vector<std::string>>& phrase_sets,
                             const std::vector<std::string>& lexicon, const TrainConfig& cfg);

struct PhraseScore {
    std::string phrase;
    double probability = 0.0;
};

/// sigmoid(w . d + b) per phrase, sorted non-increasing; ties keep lexicon order.
std::vector<PhraseScore> score_phrases(const TextureDescriptor& desc, const PhraseModel& model);

inline constexpr std::size_t kDefaultTopPhrases = 20;

/// Average precision of `scores` against binary `relevant` (ties ranked by index).
double average_precision(std::span<const double> scores, const std::vector<bool>& relevant);

/// Mean over lexicon phrases (those with at least one positive) of the per-phrase AP.
double mean_average_precision(const PhraseModel& model, const std::vector<TextureDescriptor>& descriptors,
                              const std::vector<std::vector<std::string>>& phrase_sets);

Bytes encode_softmax_head(const SoftmaxHead& head);
Bytes encode_phrase_model(const PhraseModel& model);
SoftmaxHead decode_softmax_head(std::span<const std::uint8_t> bytes);
PhraseModel decode_phrase_model(std::span<const std::uint8_t> bytes);

void save_softmax_head(const SoftmaxHead& head, const std::filesystem::path& path);
void save_phrase_model(const PhraseModel& model, const std::filesystem::path& path);
SoftmaxHead load_softmax_head(const std::filesystem::path& path);
PhraseModel load_phrase_model(const std::filesystem::path& path);

}  // namespace texmax
