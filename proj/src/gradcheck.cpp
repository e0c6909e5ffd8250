#include "texmax/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "texmax/error.hpp"

namespace texmax {

double relative_error(double analytic, double numeric) noexcept {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradcheckReport gradcheck(const ScalarFunction& f, const Tensor3& analytic, const Tensor3& x,
                          const GradcheckOptions& options) {
    if (!analytic.same_shape(x)) throw ConfigError("gradcheck: analytic gradient shape differs from x");

    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.samples != 0 && options.samples < coords.size()) {
        const std::size_t n = std::max<std::size_t>(options.samples, 64);
        std::mt19937_64 rng(options.seed);
        for (std::size_t i = 0; i < std::min(n, coords.size()); ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
            std::swap(coords[i], coords[pick(rng)]);
        }
        coords.resize(std::min(n, coords.size()));
    }

    GradcheckReport report;
    Tensor3 plus = x;
    Tensor3 minus = x;
    for (std::size_t i : coords) {
        plus[i] = x[i] + options.step;
        minus[i] = x[i] - options.step;
        if (options.skip && options.skip(plus, minus)) {
            ++report.skipped;
        } else {
            const double fp = f(plus);
            const double fm = f(minus);
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("gradcheck: function is non-finite near coordinate " + std::to_string(i));
            }
            const double numeric = (fp - fm) / (2.0 * options.step);
            report.max_relative_error = std::max(report.max_relative_error, relative_error(analytic[i], numeric));
            ++report.checked;
        }
        plus[i] = x[i];
        minus[i] = x[i];
    }
    return report;
}

}  // namespace texmax
