#pragma once

#include <random>
#include <string>
#include <vector>

#include "texmax/cloud.hpp"

namespace testing {

inline std::vector<texmax::PhraseScore> random_scores(std::size_t n, std::uint64_t seed) {
    static const char* words[] = {"striped", "dotted",  "wavy",    "grid",  "zigzag", "woven", "bumpy",
                                  "fibrous", "crackled", "marbled", "lined", "spiral", "mesh",  "scaly"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> len(1, 3);
    std::uniform_int_distribution<std::size_t> pick(0, std::size(words) - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<texmax::PhraseScore> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string phrase;
        for (int w = len(rng); w > 0; --w) phrase += std::string(phrase.empty() ? "" : " ") + words[pick(rng)];
        // a few exact ties and endpoint values
        const double p = i % 7 == 3 && !out.empty() ? out.back().probability : (i % 11 == 5 ? 1.0 : u(rng));
        out.push_back({phrase + " " + std::to_string(i), p});
    }
    return out;
}

// Returns an empty string when the layout honours every contract, else the first violation.
inline std::string cloud_violation(const std::vector<texmax::PhraseScore>& scores, std::size_t k,
                                   const texmax::PhraseCloudLayout& L) {
    const auto& it = L.items;
    for (std::size_t a = 0; a < it.size(); ++a) {
        if (it[a].x < 0 || it[a].y < 0 || it[a].x + it[a].width > L.width || it[a].y + it[a].height > L.height)
            return "item outside canvas: " + it[a].phrase;
        const texmax::TextExtent e = texmax::measure_text(it[a].phrase, it[a].font_px);
        if (e.width != it[a].width || e.height != it[a].height) return "box differs from measure_text";
        if (it[a].font_px < texmax::kMinFontPx || it[a].font_px > texmax::kMaxFontPx) return "font out of range";
        for (std::size_t b = a + 1; b < it.size(); ++b) {
            const bool overlap = it[a].x < it[b].x + it[b].width && it[b].x < it[a].x + it[a].width &&
                                 it[a].y < it[b].y + it[b].height && it[b].y < it[a].y + it[a].height;
            if (overlap) return "overlap: " + it[a].phrase + " / " + it[b].phrase;
            if (it[a].probability > it[b].probability && it[a].font_px < it[b].font_px) return "font not monotone";
            if (it[a].probability < it[b].probability && it[a].font_px > it[b].font_px) return "font not monotone";
            if (it[a].probability == it[b].probability && it[a].font_px != it[b].font_px) return "tied fonts differ";
        }
    }
    const std::size_t expected = std::min(k, scores.size());
    if (it.size() + L.dropped.size() != expected) return "placed + dropped != min(k, n)";
    return "";
}

// Every black pixel must lie inside some placed box.
inline bool ink_inside_boxes(const texmax::PhraseCloudLayout& L, const texmax::Tensor3& img) {
    for (int y = 0; y < L.height; ++y)
        for (int x = 0; x < L.width; ++x) {
            if (img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 0) == 1.0) continue;
            bool inside = false;
            for (const auto& p : L.items)
                inside = inside || (x >= p.x && x < p.x + p.width && y >= p.y && y < p.y + p.height);
            if (!inside) return false;
        }
    return true;
}

}  // namespace testing
