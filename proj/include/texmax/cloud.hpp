#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texmax/heads.hpp"
#include "texmax/tensor.hpp"

namespace texmax {

inline constexpr int kMinFontPx = 10;
inline constexpr int kMaxFontPx = 36;
inline constexpr int kTextPaddingPx = 2;

struct TextExtent {
    int width = 0;
    int height = 0;
};

/// Fixed-metric box: glyphs * round(0.6 * font) + 2 wide, font + 2 tall.
/// Glyphs are UTF-8 code points.
TextExtent measure_text(const std::string& phrase, int font_px);

struct PlacedPhrase {
    std::string phrase;
    double probability = 0.0;
    int font_px = 0;
    int x = 0;  // top-left of the bounding box
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const PlacedPhrase&) const = default;
};

struct PhraseCloudLayout {
    int width = 0;
    int height = 0;
    std::vector<PlacedPhrase> items;
    std::vector<std::string> dropped;  // phrases that fit nowhere on the canvas

    bool operator==(const PhraseCloudLayout&) const = default;
};

/// Font size for probability p given the min/max probability among the phrases shown:
/// round(10 + 26 (p - p_min) / (p_max - p_min + 1e-12)), or 36 when all are equal.
int font_size_for(double p, double p_min, double p_max);

/// Top-k phrases placed greedily in descending probability along an Archimedean
/// spiral from the canvas centre; the first non-overlapping in-bounds position wins.
/// `seed` rotates the spiral's starting angle.
PhraseCloudLayout layout_cloud(const std::vector<PhraseScore>& scores, std::size_t k, int canvas_width,
                               int canvas_height, std::uint64_t seed = 0);

/// White canvas with black glyphs from the embedded 8x8 font, scaled nearest-neighbour.
Tensor3 render_cloud(const PhraseCloudLayout& layout);

/// {"width","height","items":[{"phrase","probability","font","x","y","w","h"}],"dropped":[...]}
std::string layout_json(const PhraseCloudLayout& layout);

std::size_t utf8_length(const std::string& s);

}  // namespace texmax
