#pragma once

#include <random>
#include <string>
#include <vector>

#include "texmax/backbone.hpp"
#include "texmax/dataset.hpp"
#include "texmax/descriptor.hpp"

namespace testing {

// Small in-memory version of the synthetic texture set, described by the default backbone.
struct SyntheticDescriptors {
    std::vector<std::string> classes;
    std::vector<texmax::TextureDescriptor> descriptors;
    std::vector<std::size_t> labels;
    std::vector<std::vector<std::string>> phrases;
};

inline SyntheticDescriptors make_synthetic_descriptors(std::size_t per_class, std::size_t size, std::uint64_t seed) {
    static const texmax::BackboneSpec net =
        texmax::make_filter_bank(texmax::FilterBankKind::gabor, texmax::BackboneShape{}, 7);
    SyntheticDescriptors out;
    std::mt19937_64 rng(seed);
    const auto kinds = texmax::all_synthetic_kinds();
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        out.classes.push_back(texmax::kind_name(kinds[k]));
        for (std::size_t i = 0; i < per_class; ++i) {
            out.descriptors.push_back(texmax::describe_image(texmax::generate_texture(kinds[k], size, 0.05, rng), net));
            out.labels.push_back(k);
            out.phrases.push_back(texmax::kind_phrases(kinds[k]));
        }
    }
    return out;
}

inline const SyntheticDescriptors& synthetic_train() {
    static const SyntheticDescriptors d = make_synthetic_descriptors(12, 32, 11);
    return d;
}

inline const SyntheticDescriptors& synthetic_test() {
    static const SyntheticDescriptors d = make_synthetic_descriptors(6, 32, 12);
    return d;
}

}  // namespace testing
