#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texmax/backbone.hpp"
#include "texmax/descriptor.hpp"
#include "texmax/heads.hpp"
#include "texmax/tensor.hpp"

namespace texmax {

/// Smoothing inside the TV norm: (dx^2 + dy^2 + eps)^(beta/2).
inline constexpr double kTvEps = 1e-8;

enum class InitKind { uniform_noise, mid_gray };

struct InversionConfig {
    double gamma = 0.01;       // TV weight
    double tv_beta = 2.0;      // TV exponent, >= 1
    double step_size = 1.0;    // first trial step of the line search
    std::size_t max_iters = 500;
    InitKind init = InitKind::uniform_noise;
    std::uint64_t seed = 0;
    double ftol = 1e-6;        // stop when the relative decrease over 10 iterations falls below this
    std::size_t target_class = 0;
    std::size_t size = 64;     // square canvas side
    DescriptorOptions descriptor;
};

void validate(const InversionConfig& cfg, std::size_t classes);

struct TvValue {
    double value = 0.0;
    Tensor3 grad;
};

/// Sum over pixels and channels of (dx^2 + dy^2 + eps)^(beta/2) with forward
/// differences; differences past the last row/column are zero.
TvValue tv_norm(const Tensor3& x, double beta);

struct ObjectiveValue {
    double total = 0.0;
    double sum_loss = 0.0;   // sum over taps of the softmax loss at the target class
    double tv_term = 0.0;    // gamma * TV
    std::vector<double> tap_losses;
    std::vector<double> tap_target_probability;
    Tensor3 grad;
};

/// sum_i L(C_i(x), target) + gamma * TV(x) and its gradient with respect to x.
ObjectiveValue objective(const Tensor3& x, const SoftmaxHead& head, const BackboneSpec& backbone,
                         const InversionConfig& cfg);

struct InversionRecord {
    std::size_t iteration = 0;
    double objective = 0.0;
    double sum_loss = 0.0;
    double tv_term = 0.0;
    double step = 0.0;
};

struct InversionTrace {
    std::vector<InversionRecord> records;  // record 0 is the starting point
    bool converged = false;                // ftol criterion met or zero projected step
    bool stalled = false;                  // line search exhausted its halvings
};

struct InversionResult {
    Tensor3 image;
    InversionTrace trace;
    std::vector<double> tap_target_probability;
};

Tensor3 initial_image(const InversionConfig& cfg, std::size_t channels);

/// Projected gradient descent on [0,1]^n with Armijo backtracking (c = 1e-4, at most
/// 20 halvings). The first trial step of each iteration is twice the last accepted one.
InversionResult synthesize_maximal_image(const InversionConfig& cfg, const SoftmaxHead& head,
                                         const BackboneSpec& backbone);

/// Horizontal-neighbour over vertical-neighbour difference energy of the grayscale image:
///   sum (g[r][c+1]-g[r][c])^2 / (sum (g[r+1][c]-g[r][c])^2 + 1e-12).
/// Vertical stripes (intensity varying along x) score high; horizontal stripes score low.
double oriented_energy_ratio(const Tensor3& x);

/// "iteration,objective,sum_loss,tv_term,step" rows.
std::string trace_csv(const InversionTrace& trace);

}  // namespace texmax
