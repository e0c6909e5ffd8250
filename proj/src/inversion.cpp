#include "texmax/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "texmax/error.hpp"

namespace texmax {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 20;
constexpr std::size_t kFtolWindow = 10;

}  // namespace

void validate(const InversionConfig& cfg, std::size_t classes) {
    if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) throw ConfigError("gamma must be finite and nonnegative");
    if (!(cfg.tv_beta >= 1.0) || !std::isfinite(cfg.tv_beta)) throw ConfigError("tv beta must be >= 1");
    if (!(cfg.step_size > 0.0) || !std::isfinite(cfg.step_size)) throw ConfigError("step size must be positive");
    if (cfg.max_iters == 0) throw ConfigError("max_iters must be positive");
    if (!(cfg.ftol >= 0.0) || !std::isfinite(cfg.ftol)) throw ConfigError("ftol must be nonnegative");
    if (cfg.size == 0) throw ConfigError("canvas size must be positive");
    if (cfg.target_class >= classes) {
        throw ConfigError("target class " + std::to_string(cfg.target_class) + " out of range for " +
                          std::to_string(classes) + " classes");
    }
}

TvValue tv_norm(const Tensor3& x, double beta) {
    if (!(beta >= 1.0)) throw ConfigError("tv_norm: beta must be >= 1");
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    const std::size_t ch = x.channels();
    TvValue tv{0.0, Tensor3(h, w, ch)};
    const double half = beta / 2.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t k = 0; k < ch; ++k) {
                const double v = x.at(r, c, k);
                const double dx = c + 1 < w ? x.at(r, c + 1, k) - v : 0.0;
                const double dy = r + 1 < h ? x.at(r + 1, c, k) - v : 0.0;
                const double s = dx * dx + dy * dy + kTvEps;
                tv.value += std::pow(s, half);
                // d/d(diff) of s^(beta/2) is beta * s^(beta/2 - 1) * diff
                const double wgt = beta * std::pow(s, half - 1.0);
                if (c + 1 < w) tv.grad.at(r, c + 1, k) += wgt * dx;
                if (r + 1 < h) tv.grad.at(r + 1, c, k) += wgt * dy;
                tv.grad.at(r, c, k) -= wgt * (dx + dy);
            }
        }
    }
    return tv;
}

ObjectiveValue objective(const Tensor3& x, const SoftmaxHead& head, const BackboneSpec& backbone,
                         const InversionConfig& cfg) {
    if (head.taps.size() != backbone.taps.size()) {
        throw ConfigError("head has " + std::to_string(head.taps.size()) + " taps, backbone has " +
                          std::to_string(backbone.taps.size()));
    }
    if (cfg.target_class >= head.classes()) throw ConfigError("target class out of range");

    const FeatureStack stack = forward_taps(x, backbone);
    const DescriptorPass pass = descriptor_forward_pass(stack, cfg.descriptor);

    ObjectiveValue out;
    std::vector<std::vector<double>> grad_desc;
    for (std::size_t t = 0; t < head.taps.size(); ++t) {
        const CrossEntropy ce = cross_entropy(head.taps[t].apply(pass.descriptor.taps[t]), cfg.target_class);
        out.tap_losses.push_back(ce.loss);
        out.tap_target_probability.push_back(ce.probabilities[cfg.target_class]);
        out.sum_loss += ce.loss;
        grad_desc.push_back(head.taps[t].apply_transpose(ce.grad_logits));
    }
    const std::vector<Tensor3> tap_grads = descriptor_backward(stack, pass, grad_desc, cfg.descriptor);
    out.grad = backward_to_image(stack, backbone, tap_grads);

    if (cfg.gamma > 0.0) {
        const TvValue tv = tv_norm(x, cfg.tv_beta);
        out.tv_term = cfg.gamma * tv.value;
        for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += cfg.gamma * tv.grad[i];
    }
    out.total = out.sum_loss + out.tv_term;
    if (!std::isfinite(out.total)) throw NumericError("objective is not finite");
    require_finite(out.grad, "objective gradient");
    return out;
}

Tensor3 initial_image(const InversionConfig& cfg, std::size_t channels) {
    Tensor3 x(cfg.size, cfg.size, channels, 0.5);
    if (cfg.init == InitKind::uniform_noise) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> noise(0.45, 0.55);
        for (double& v : x.storage()) v = noise(rng);
    }
    return x;
}

InversionResult synthesize_maximal_image(const InversionConfig& cfg, const SoftmaxHead& head,
                                         const BackboneSpec& backbone) {
    validate(cfg, head.classes());

    InversionResult result;
    Tensor3 x = initial_image(cfg, backbone.input_channels);
    ObjectiveValue current;
    auto evaluate = [&](const Tensor3& at, std::size_t iteration) {
        try {
            return objective(at, head, backbone, cfg);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(iteration));
        }
    };
    current = evaluate(x, 0);
    result.trace.records.push_back({0, current.total, current.sum_loss, current.tv_term, 0.0});

    double trial = cfg.step_size;
    Tensor3 candidate(x.height(), x.width(), x.channels());
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        bool accepted = false;
        double step = trial;
        ObjectiveValue next;
        double decrease = 0.0;
        for (int halving = 0; halving <= kMaxHalvings; ++halving, step *= 0.5) {
            decrease = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                candidate[i] = std::clamp(x[i] - step * current.grad[i], 0.0, 1.0);
                decrease += current.grad[i] * (x[i] - candidate[i]);
            }
            if (decrease <= 0.0) break;
            next = evaluate(candidate, it);
            if (next.total <= current.total - kArmijo * decrease) {
                accepted = true;
                break;
            }
        }
        if (decrease <= 0.0) {
            // Projected gradient vanished: a stationary point of the constrained problem.
            result.trace.converged = true;
            break;
        }
        if (!accepted) {
            result.trace.stalled = true;
            break;
        }
        std::swap(x, candidate);
        current = std::move(next);
        result.trace.records.push_back({it, current.total, current.sum_loss, current.tv_term, step});
        trial = 2.0 * step;

        const auto& recs = result.trace.records;
        if (recs.size() > kFtolWindow) {
            const double before = recs[recs.size() - 1 - kFtolWindow].objective;
            const double rel = (before - current.total) / std::max(std::abs(before), 1e-12);
            if (rel < cfg.ftol) {
                result.trace.converged = true;
                break;
            }
        }
    }
    result.image = std::move(x);
    result.tap_target_probability = current.tap_target_probability;
    return result;
}

double oriented_energy_ratio(const Tensor3& x) {
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    const std::size_t ch = x.channels();
    Tensor3 gray(h, w, 1);
    for (std::size_t p = 0; p < h * w; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < ch; ++k) s += x[p * ch + k];
        gray[p] = s / static_cast<double>(ch);
    }
    double across_columns = 0.0;
    double across_rows = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (c + 1 < w) {
                const double d = gray.at(r, c + 1, 0) - gray.at(r, c, 0);
                across_columns += d * d;
            }
            if (r + 1 < h) {
                const double d = gray.at(r + 1, c, 0) - gray.at(r, c, 0);
                across_rows += d * d;
            }
        }
    }
    return across_columns / (across_rows + 1e-12);
}

std::string trace_csv(const InversionTrace& trace) {
    std::string out = "iteration,objective,sum_loss,tv_term,step\n";
    char line[160];
    for (const InversionRecord& r : trace.records) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.objective, r.sum_loss,
                      r.tv_term, r.step);
        out += line;
    }
    return out;
}

}  // namespace texmax
