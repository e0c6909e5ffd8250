#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "texmax/backbone.hpp"
#include "texmax/descriptor.hpp"

namespace texmax {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckRow {
    std::string op;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;

    bool passed() const noexcept { return checked > 0 && max_relative_error < kGradcheckTolerance; }
};

using KinkFilter = std::function<bool(const Tensor3& plus, const Tensor3& minus)>;

/// Skip rule for central differences through the backbone and descriptor at `x`: a probe
/// pair is rejected if it flips any ReLU or max-pool decision, or moves some signed-sqrt
/// input by more than 1% of its magnitude (close to the kink at 0 the h = 1e-5 difference
/// stops resolving the square root).
KinkFilter descriptor_kink_filter(const BackboneSpec& backbone, const Tensor3& x, const DescriptorOptions& options = {});

/// Finite-difference checks (h = 1e-5, central) of every hand-written backward pass
/// and of the full synthesis objective at 16x16, each repeated for `seeds`
/// consecutive seeds starting at `first_seed`. Reports the worst error per op.
std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t first_seed, std::size_t seeds);

}  // namespace texmax
