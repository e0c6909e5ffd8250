#include "texmax/heads.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "texmax/error.hpp"

namespace texmax {

namespace {

constexpr std::uint32_t kHeadVersion = 1;
constexpr std::uint8_t kSoftmaxType = 0;
constexpr std::uint8_t kPhraseType = 1;
constexpr double kDivergenceLoss = 1e6;
constexpr std::uint32_t kMaxTapChannels = 65535;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct SampleLoss {
    double loss;
    std::vector<double> grad_logits;
};

// Minibatch SGD with weight decay on W (not b) for a linear model whose loss
// depends on the sample only through its logits. The decay is applied as a
// proximal step, W <- (W - step*grad) / (1 + lr*lambda), so any lambda is stable.
template <class LossFn>
LinearMap train_linear(const std::vector<std::span<const double>>& xs, std::size_t outputs, const TrainConfig& cfg,
                       std::seed_seq& seeds, LossFn&& sample_loss, std::vector<double>& trace) {
    const std::size_t n = xs.size();
    const std::size_t dim = xs.front().size();
    LinearMap map(outputs, dim);
    std::mt19937_64 rng(seeds);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<double> grad_w(outputs * dim);
    std::vector<double> grad_b(outputs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            for (std::size_t s = start; s < stop; ++s) {
                const std::span<const double> x = xs[order[s]];
                const SampleLoss l = sample_loss(order[s], map.apply(x));
                for (std::size_t k = 0; k < outputs; ++k) {
                    const double g = l.grad_logits[k];
                    grad_b[k] += g;
                    if (g == 0.0) continue;
                    double* row = grad_w.data() + k * dim;
                    for (std::size_t j = 0; j < dim; ++j) row[j] += g * x[j];
                }
            }
            const double step = cfg.learning_rate / static_cast<double>(stop - start);
            const double shrink = 1.0 / (1.0 + cfg.learning_rate * cfg.weight_decay);
            for (std::size_t j = 0; j < grad_w.size(); ++j)
                map.weights[j] = shrink * (map.weights[j] - step * grad_w[j]);
            for (std::size_t k = 0; k < outputs; ++k) map.bias[k] -= step * grad_b[k];
        }

        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += sample_loss(i, map.apply(xs[i])).loss;
        const double objective = total / static_cast<double>(n) + 0.5 * cfg.weight_decay * dot(map.weights, map.weights);
        if (!std::isfinite(objective) || objective > kDivergenceLoss) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                               std::to_string(objective) + ")");
        }
        trace.push_back(objective);
    }
    return map;
}

void check_descriptors(const std::vector<TextureDescriptor>& descriptors) {
    if (descriptors.empty()) throw DataError("no training descriptors");
    for (const TextureDescriptor& d : descriptors) {
        if (d.channels != descriptors.front().channels) throw ConfigError("descriptors have inconsistent tap sizes");
    }
}

void write_header(ByteWriter& w, std::uint8_t type, const std::vector<std::string>& names,
                  const std::vector<std::size_t>& tap_channels) {
    w.magic("TXHD");
    w.u32(kHeadVersion);
    w.u8(type);
    w.u32(static_cast<std::uint32_t>(names.size()));
    for (const std::string& s : names) w.string(s);
    w.u32(static_cast<std::uint32_t>(tap_channels.size()));
    for (std::size_t d : tap_channels) w.u32(static_cast<std::uint32_t>(d));
}

struct HeadHeader {
    std::vector<std::string> names;
    std::vector<std::size_t> tap_channels;
};

HeadHeader read_header(ByteReader& r, std::uint8_t expected_type) {
    r.expect_magic("TXHD");
    const std::size_t version_at = r.offset();
    if (const std::uint32_t version = r.u32("version"); version != kHeadVersion) {
        throw FormatError("unsupported head version " + std::to_string(version), version_at);
    }
    const std::size_t type_at = r.offset();
    const std::uint8_t type = r.u8("head type");
    if (type != expected_type) {
        throw FormatError(std::string("expected a ") + (expected_type == kSoftmaxType ? "softmax" : "phrase") +
                              " head file, found type " + std::to_string(type),
                          type_at);
    }
    HeadHeader h;
    const std::uint32_t count = r.u32("name count");
    for (std::uint32_t i = 0; i < count; ++i) h.names.push_back(r.string("name table"));
    const std::uint32_t taps = r.u32("tap count");
    for (std::uint32_t i = 0; i < taps; ++i) {
        const std::size_t at = r.offset();
        const std::uint32_t d = r.u32("tap dims");
        if (d == 0 || d > kMaxTapChannels) throw FormatError("implausible tap dimension " + std::to_string(d), at);
        h.tap_channels.push_back(d);
    }
    return h;
}

// Reads an outputs x inputs map; sizes are checked against the remaining bytes before allocating.
LinearMap read_map(ByteReader& r, std::size_t outputs, std::size_t inputs, const std::string& what) {
    std::size_t count = 0;
    if (__builtin_mul_overflow(outputs, inputs, &count)) throw FormatError(what + ": size overflows", r.offset());
    LinearMap m;
    m.outputs = outputs;
    m.inputs = inputs;
    m.weights = r.f32_array(count, what + " weights");
    m.bias = r.f32_array(outputs, what + " bias");
    return m;
}

}  // namespace

std::vector<double> LinearMap::apply(std::span<const double> x) const {
    if (x.size() != inputs) {
        throw ConfigError("linear map expects " + std::to_string(inputs) + " inputs, got " + std::to_string(x.size()));
    }
    std::vector<double> y(bias);
    for (std::size_t k = 0; k < outputs; ++k) y[k] += dot(std::span(weights).subspan(k * inputs, inputs), x);
    return y;
}

std::vector<double> LinearMap::apply_transpose(std::span<const double> g) const {
    std::vector<double> out(inputs, 0.0);
    for (std::size_t k = 0; k < outputs; ++k) {
        if (g[k] == 0.0) continue;
        const double* row = weights.data() + k * inputs;
        for (std::size_t j = 0; j < inputs; ++j) out[j] += g[k] * row[j];
    }
    return out;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0) || cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.weight_decay >= 0.0) ||
        !std::isfinite(cfg.learning_rate) || !std::isfinite(cfg.weight_decay)) {
        throw ConfigError("invalid training configuration");
    }
}

std::vector<double> softmax(std::span<const double> logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - top));
    for (double& v : p) v /= z;
    return p;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) throw ConfigError("cross_entropy: target class out of range");
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    CrossEntropy ce;
    ce.loss = top + std::log(z) - logits[target];
    ce.probabilities = softmax(logits);
    ce.grad_logits = ce.probabilities;
    ce.grad_logits[target] -= 1.0;
    return ce;
}

std::vector<std::vector<double>> predict_proba(const TextureDescriptor& desc, const SoftmaxHead& head) {
    if (desc.tap_count() != head.taps.size()) {
        throw ConfigError("descriptor has " + std::to_string(desc.tap_count()) + " taps, head has " +
                          std::to_string(head.taps.size()));
    }
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < head.taps.size(); ++t) out.push_back(softmax(head.taps[t].apply(desc.taps[t])));
    return out;
}

std::vector<double> ensemble_proba(const std::vector<std::vector<double>>& per_tap) {
    std::vector<double> mean(per_tap.front().size(), 0.0);
    for (const auto& p : per_tap) {
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
    }
    for (double& v : mean) v /= static_cast<double>(per_tap.size());
    return mean;
}

SoftmaxTraining train_softmax(const std::vector<TextureDescriptor>& descriptors, const std::vector<std::size_t>& labels,
                              const std::vector<std::string>& class_names, const TrainConfig& cfg) {
    validate(cfg);
    check_descriptors(descriptors);
    if (labels.size() != descriptors.size()) throw DataError("label count differs from descriptor count");
    const std::size_t k = class_names.size();
    if (k < 2) throw DataError("softmax training needs at least 2 classes");
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t y : labels) {
        if (y >= k) throw DataError("label " + std::to_string(y) + " out of range");
        ++counts[y];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) throw DataError("class \"" + class_names[c] + "\" has no training examples");
    }

    const std::size_t taps = descriptors.front().tap_count();
    SoftmaxTraining result;
    result.head.class_names = class_names;
    result.head.taps.resize(taps);
    result.loss_trace.resize(taps);

    // Heads are independent; each owns its slot in the result.
    std::vector<std::exception_ptr> errors(taps);
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < static_cast<long>(taps); ++t) {
        try {
            std::vector<std::span<const double>> xs;
            for (const TextureDescriptor& d : descriptors) xs.emplace_back(d.taps[t]);
            std::seed_seq seeds{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(t)};
            result.head.taps[t] = train_linear(
                xs, k, cfg, seeds,
                [&](std::size_t i, const std::vector<double>& logits) {
                    CrossEntropy ce = cross_entropy(logits, labels[i]);
                    return SampleLoss{ce.loss, std::move(ce.grad_logits)};
                },
                result.loss_trace[t]);
        } catch (...) {
            errors[t] = std::current_exception();
        }
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return result;
}

double softmax_step_bound(const std::vector<TextureDescriptor>& descriptors, std::size_t tap, double weight_decay) {
    double mean_sq = 0.0;
    for (const TextureDescriptor& d : descriptors) mean_sq += dot(d.taps.at(tap), d.taps.at(tap)) + 1.0;
    mean_sq /= static_cast<double>(descriptors.size());
    return 1.0 / (0.5 * mean_sq + weight_decay);
}

Accuracy evaluate(const SoftmaxHead& head, const std::vector<TextureDescriptor>& descriptors,
                  const std::vector<std::size_t>& labels) {
    Accuracy acc;
    acc.per_tap.assign(head.taps.size(), 0.0);
    if (descriptors.empty()) return acc;
    auto argmax = [](const std::vector<double>& p) {
        return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    };
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
        const auto probs = predict_proba(descriptors[i], head);
        for (std::size_t t = 0; t < probs.size(); ++t) acc.per_tap[t] += argmax(probs[t]) == labels[i] ? 1.0 : 0.0;
        acc.ensemble += argmax(ensemble_proba(probs)) == labels[i] ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(descriptors.size());
    for (double& a : acc.per_tap) a /= n;
    acc.ensemble /= n;
    return acc;
}

PhraseTraining train_phrases(const std::vector<TextureDescriptor>& descriptors,
                             const std::vector<std::vector<std::string>>& phrase_sets, const TrainConfig& cfg) {
    std::set<std::string> all;
    for (const auto& set : phrase_sets) all.insert(set.begin(), set.end());
    return train_phrases(descriptors, phrase_sets, std::vector<std::string>(all.begin(), all.end()), cfg);
}

PhraseTraining train_phrases(const std::vector<TextureDescriptor>& descriptors,
                             const std::vector<std::vector<std::string>>& phrase_sets,
                             const std::vector<std::string>& lexicon, const TrainConfig& cfg) {
    validate(cfg);
    check_descriptors(descriptors);
    if (phrase_sets.size() != descriptors.size()) throw DataError("phrase set count differs from descriptor count");
    if (lexicon.empty()) throw DataError("empty phrase lexicon");

    std::map<std::string, std::size_t> index;
    for (std::size_t p = 0; p < lexicon.size(); ++p) {
        if (lexicon[p].empty()) throw DataError("empty phrase in lexicon");
        if (!index.emplace(lexicon[p], p).second) throw DataError("duplicate phrase \"" + lexicon[p] + "\"");
    }
    const std::size_t n = descriptors.size();
    std::vector<std::vector<char>> positive(lexicon.size(), std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (const std::string& s : phrase_sets[i]) {
            // Annotations outside an explicit lexicon are ignored.
            if (const auto it = index.find(s); it != index.end()) positive[it->second][i] = 1;
        }
    }
    for (std::size_t p = 0; p < lexicon.size(); ++p) {
        if (std::find(positive[p].begin(), positive[p].end(), 1) == positive[p].end()) {
            throw DataError("phrase \"" + lexicon[p] + "\" has no positive example");
        }
    }

    std::vector<std::vector<double>> concat;
    concat.reserve(n);
    for (const TextureDescriptor& d : descriptors) concat.push_back(d.concatenated());
    std::vector<std::span<const double>> xs(concat.begin(), concat.end());
    const std::size_t dim = concat.front().size();

    PhraseTraining result;
    result.model.lexicon = lexicon;
    result.model.tap_channels = descriptors.front().channels;
    result.model.scorer = LinearMap(lexicon.size(), dim);
    result.loss_trace.resize(lexicon.size());

    std::vector<std::exception_ptr> errors(lexicon.size());
#pragma omp parallel for schedule(dynamic)
    for (long p = 0; p < static_cast<long>(lexicon.size()); ++p) {
        try {
            std::seed_seq seeds{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(p)};
            const LinearMap single = train_linear(
                xs, 1, cfg, seeds,
                [&](std::size_t i, const std::vector<double>& logit) {
                    const double z = logit[0];
                    const bool y = positive[p][i] != 0;
                    return SampleLoss{softplus(y ? -z : z), {sigmoid(z) - (y ? 1.0 : 0.0)}};
                },
                result.loss_trace[p]);
            std::copy(single.weights.begin(), single.weights.end(),
                      result.model.scorer.weights.begin() + static_cast<long>(p * dim));
            result.model.scorer.bias[p] = single.bias[0];
        } catch (...) {
            errors[p] = std::current_exception();
        }
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return result;
}

std::vector<PhraseScore> score_phrases(const TextureDescriptor& desc, const PhraseModel& model) {
    if (desc.channels != model.tap_channels) throw ConfigError("descriptor does not match the phrase model's taps");
    const std::vector<double> logits = model.scorer.apply(desc.concatenated());
    std::vector<PhraseScore> out;
    for (std::size_t p = 0; p < model.lexicon.size(); ++p) out.push_back({model.lexicon[p], sigmoid(logits[p])});
    std::stable_sort(out.begin(), out.end(),
                     [](const PhraseScore& a, const PhraseScore& b) { return a.probability > b.probability; });
    return out;
}

double average_precision(std::span<const double> scores, const std::vector<bool>& relevant) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double hits = 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (relevant[order[r]]) {
            hits += 1.0;
            sum += hits / static_cast<double>(r + 1);
        }
    }
    return hits > 0.0 ? sum / hits : 0.0;
}

double mean_average_precision(const PhraseModel& model, const std::vector<TextureDescriptor>& descriptors,
                              const std::vector<std::vector<std::string>>& phrase_sets) {
    if (descriptors.size() != phrase_sets.size()) throw ConfigError("mean_average_precision: size mismatch");
    const std::size_t n = descriptors.size();
    std::vector<std::vector<double>> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto logits = model.scorer.apply(descriptors[i].concatenated());
        probs[i].resize(logits.size());
        for (std::size_t p = 0; p < logits.size(); ++p) probs[i][p] = sigmoid(logits[p]);
    }
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t p = 0; p < model.lexicon.size(); ++p) {
        std::vector<double> scores(n);
        std::vector<bool> relevant(n);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = probs[i][p];
            const auto& set = phrase_sets[i];
            relevant[i] = std::find(set.begin(), set.end(), model.lexicon[p]) != set.end();
            any = any || relevant[i];
        }
        if (!any) continue;  // AP is undefined without positives
        total += average_precision(scores, relevant);
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

Bytes encode_softmax_head(const SoftmaxHead& head) {
    ByteWriter w;
    std::vector<std::size_t> dims;
    for (const LinearMap& m : head.taps) {
        const auto d = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m.inputs))));
        if (d * d != m.inputs) throw ConfigError("softmax head tap input length is not a square");
        dims.push_back(d);
    }
    write_header(w, kSoftmaxType, head.class_names, dims);
    for (const LinearMap& m : head.taps) {
        w.f32_array(m.weights);
        w.f32_array(m.bias);
    }
    return w.take();
}

Bytes encode_phrase_model(const PhraseModel& model) {
    ByteWriter w;
    write_header(w, kPhraseType, model.lexicon, model.tap_channels);
    w.f32_array(model.scorer.weights);
    w.f32_array(model.scorer.bias);
    return w.take();
}

SoftmaxHead decode_softmax_head(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    HeadHeader h = read_header(r, kSoftmaxType);
    if (h.names.size() < 2) throw FormatError("softmax head needs at least 2 classes", r.offset());
    SoftmaxHead head;
    head.class_names = std::move(h.names);
    for (std::size_t t = 0; t < h.tap_channels.size(); ++t) {
        const std::size_t dim = h.tap_channels[t] * h.tap_channels[t];
        head.taps.push_back(read_map(r, head.class_names.size(), dim, "tap " + std::to_string(t)));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after head", r.offset());
    return head;
}

PhraseModel decode_phrase_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    HeadHeader h = read_header(r, kPhraseType);
    PhraseModel model;
    model.lexicon = std::move(h.names);
    model.tap_channels = std::move(h.tap_channels);
    std::size_t dim = 0;
    for (std::size_t d : model.tap_channels) dim += d * d;
    model.scorer = read_map(r, model.lexicon.size(), dim, "phrase");
    if (!r.at_end()) throw FormatError("trailing bytes after phrase model", r.offset());
    return model;
}

void save_softmax_head(const SoftmaxHead& head, const std::filesystem::path& path) {
    write_file_atomic(path, encode_softmax_head(head));
}
void save_phrase_model(const PhraseModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, encode_phrase_model(model));
}
SoftmaxHead load_softmax_head(const std::filesystem::path& path) { return decode_softmax_head(read_file(path)); }
PhraseModel load_phrase_model(const std::filesystem::path& path) { return decode_phrase_model(read_file(path)); }

}  // namespace texmax
