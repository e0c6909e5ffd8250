#include "texmax/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"

#include "font8x8.hpp"
#include "texmax/error.hpp"

namespace texmax {

namespace {

constexpr double kSpiralPitch = 2.0;   // radius gained per radian
constexpr double kSpiralStep = 0.05;   // radians between candidate positions

std::vector<std::uint32_t> code_points(const std::string& s) {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto b = static_cast<unsigned char>(s[i]);
        int len = 1;
        std::uint32_t cp = b;
        if (b >= 0xF0) {
            len = 4;
            cp = b & 0x07;
        } else if (b >= 0xE0) {
            len = 3;
            cp = b & 0x0F;
        } else if (b >= 0xC0) {
            len = 2;
            cp = b & 0x1F;
        }
        for (int k = 1; k < len && i + k < s.size(); ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

int glyph_advance(int font_px) { return static_cast<int>(std::lround(0.6 * font_px)); }

bool overlaps(const PlacedPhrase& a, int x, int y, int w, int h) {
    return x < a.x + a.width && a.x < x + w && y < a.y + a.height && a.y < y + h;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace

std::size_t utf8_length(const std::string& s) { return code_points(s).size(); }

TextExtent measure_text(const std::string& phrase, int font_px) {
    const int glyphs = static_cast<int>(utf8_length(phrase));
    return {glyphs * glyph_advance(font_px) + kTextPaddingPx, font_px + kTextPaddingPx};
}

int font_size_for(double p, double p_min, double p_max) {
    if (p_max - p_min <= 0.0) return kMaxFontPx;
    return static_cast<int>(std::lround(kMinFontPx + (kMaxFontPx - kMinFontPx) * (p - p_min) / (p_max - p_min + 1e-12)));
}

PhraseCloudLayout layout_cloud(const std::vector<PhraseScore>& scores, std::size_t k, int canvas_width,
                               int canvas_height, std::uint64_t seed) {
    if (canvas_width <= 0 || canvas_height <= 0) throw ConfigError("phrase cloud canvas must be non-empty");
    if (canvas_width < 64 || canvas_height < 64) throw ConfigError("phrase cloud canvas must be at least 64x64");
    for (const PhraseScore& s : scores) {
        if (!(s.probability >= 0.0 && s.probability <= 1.0)) {
            throw ConfigError("phrase \"" + s.phrase + "\" has probability outside [0,1]");
        }
        if (blank(s.phrase)) throw ConfigError("phrase cloud cannot show an empty phrase");
    }

    std::vector<PhraseScore> ranked = scores;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const PhraseScore& a, const PhraseScore& b) { return a.probability > b.probability; });
    ranked.resize(std::min(ranked.size(), k));

    PhraseCloudLayout layout;
    layout.width = canvas_width;
    layout.height = canvas_height;
    if (ranked.empty()) return layout;

    const double p_max = ranked.front().probability;
    const double p_min = ranked.back().probability;
    std::mt19937_64 rng(seed);
    const double start_angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    const double cx = canvas_width / 2.0;
    const double cy = canvas_height / 2.0;
    const double max_radius = std::hypot(cx, cy);

    for (const PhraseScore& s : ranked) {
        const int font = font_size_for(s.probability, p_min, p_max);
        const TextExtent ext = measure_text(s.phrase, font);
        bool placed = false;
        for (double t = 0.0; kSpiralPitch * t <= max_radius; t += kSpiralStep) {
            const double r = kSpiralPitch * t;
            const int x = static_cast<int>(std::lround(cx + r * std::cos(start_angle + t) - ext.width / 2.0));
            const int y = static_cast<int>(std::lround(cy + r * std::sin(start_angle + t) - ext.height / 2.0));
            if (x < 0 || y < 0 || x + ext.width > canvas_width || y + ext.height > canvas_height) continue;
            const bool clear = std::none_of(layout.items.begin(), layout.items.end(), [&](const PlacedPhrase& p) {
                return overlaps(p, x, y, ext.width, ext.height);
            });
            if (clear) {
                layout.items.push_back({s.phrase, s.probability, font, x, y, ext.width, ext.height});
                placed = true;
                break;
            }
        }
        if (!placed) layout.dropped.push_back(s.phrase);
    }
    return layout;
}

Tensor3 render_cloud(const PhraseCloudLayout& layout) {
    Tensor3 img(static_cast<std::size_t>(layout.height), static_cast<std::size_t>(layout.width), 3, 1.0);
    for (const PlacedPhrase& item : layout.items) {
        const int advance = glyph_advance(item.font_px);
        const std::vector<std::uint32_t> cps = code_points(item.phrase);
        for (std::size_t g = 0; g < cps.size(); ++g) {
            const std::uint32_t cp = cps[g];
            const auto& rows = (cp >= 0x20 && cp <= 0x7E) ? detail::kFont8x8[cp - 0x20] : detail::kFallbackGlyph;
            const int x0 = item.x + 1 + static_cast<int>(g) * advance;
            const int y0 = item.y + 1;
            for (int py = 0; py < item.font_px; ++py) {
                const int sy = py * 8 / item.font_px;
                for (int px = 0; px < advance; ++px) {
                    const int sx = px * 8 / advance;
                    if (((rows[sy] >> sx) & 1) == 0) continue;
                    const int X = x0 + px;
                    const int Y = y0 + py;
                    if (X < 0 || Y < 0 || X >= layout.width || Y >= layout.height) continue;
                    for (std::size_t c = 0; c < 3; ++c) {
                        img.at(static_cast<std::size_t>(Y), static_cast<std::size_t>(X), c) = 0.0;
                    }
                }
            }
        }
    }
    return img;
}

std::string layout_json(const PhraseCloudLayout& layout) {
    nlohmann::ordered_json j;
    j["width"] = layout.width;
    j["height"] = layout.height;
    j["items"] = nlohmann::ordered_json::array();
    for (const PlacedPhrase& p : layout.items) {
        j["items"].push_back({{"phrase", p.phrase},
                              {"probability", p.probability},
                              {"font", p.font_px},
                              {"x", p.x},
                              {"y", p.y},
                              {"w", p.width},
                              {"h", p.height}});
    }
    j["dropped"] = layout.dropped;
    return j.dump(2) + "\n";
}

}  // namespace texmax
