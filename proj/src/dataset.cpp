#include "texmax/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "texmax/binary_io.hpp"
#include "texmax/error.hpp"
#include "texmax/ppm.hpp"

namespace texmax {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                fields.back() += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.emplace_back();
        } else {
            fields.back() += ch;
        }
    }
    return fields;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Rows of a two-column CSV with the given header, as (line number, col0, col1).
std::vector<std::tuple<std::size_t, std::string, std::string>> read_two_column_csv(const std::filesystem::path& path,
                                                                                   const std::string& second) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::tuple<std::size_t, std::string, std::string>> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> f = split_csv_line(line);
        for (std::string& s : f) s = trim(s);
        if (!header_seen) {
            if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
                f = split_csv_line(line.substr(3));
                for (std::string& s : f) s = trim(s);
            }
            if (f.size() != 2 || f[0] != "path" || f[1] != second) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected header \"path," + second +
                                "\"");
            }
            header_seen = true;
            continue;
        }
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected two non-empty fields");
        }
        rows.emplace_back(line_no, f[0], f[1]);
    }
    if (!header_seen) throw DataError(path.string() + ": missing header \"path," + second + "\"");
    return rows;
}

void check_image(const std::filesystem::path& root, const std::string& rel, const std::filesystem::path& csv,
                 std::size_t line) {
    const std::filesystem::path full = root / rel;
    const std::string where = csv.string() + ":" + std::to_string(line) + ": ";
    if (!std::filesystem::is_regular_file(full)) throw DataError(where + "missing image file " + full.string());
    try {
        (void)read_ppm(full);
    } catch (const FormatError& e) {
        throw DataError(where + "cannot decode image: " + e.what());
    }
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    std::uniform_int_distribution<std::size_t> d(lo, hi);
    return d(rng);
}

}  // namespace

std::size_t DatasetManifest::class_index(const std::string& label) const {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) throw DataError("unknown class \"" + label + "\"");
    return static_cast<std::size_t>(it - classes.begin());
}

std::vector<std::string> DatasetManifest::phrases_for(const std::string& path) const {
    std::set<std::string> out;
    for (const PhraseRecord& p : phrases) {
        if (p.path == path) out.insert(p.phrase);
    }
    return {out.begin(), out.end()};
}

void refresh_classes(DatasetManifest& manifest) {
    std::map<std::string, std::size_t> counts;
    for (const LabelRecord& r : manifest.records) ++counts[r.label];
    manifest.classes.clear();
    manifest.class_counts.clear();
    for (const auto& [label, n] : counts) {
        manifest.classes.push_back(label);
        manifest.class_counts.push_back(n);
    }
}

DatasetManifest load_manifest(const std::filesystem::path& labels_csv,
                              const std::optional<std::filesystem::path>& phrases_csv,
                              const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    for (auto& [line, path, label] : read_two_column_csv(labels_csv, "label")) {
        const auto [it, inserted] = seen.emplace(std::make_pair(path, label), line);
        if (!inserted) {
            throw DataError(labels_csv.string() + ":" + std::to_string(line) + ": duplicate row (" + path + "," +
                            label + ") first seen on line " + std::to_string(it->second));
        }
        check_image(root, path, labels_csv, line);
        m.records.push_back({path, label, line});
    }
    if (phrases_csv) {
        std::map<std::pair<std::string, std::string>, std::size_t> seen_phrases;
        for (auto& [line, path, phrase] : read_two_column_csv(*phrases_csv, "phrase")) {
            const auto [it, inserted] = seen_phrases.emplace(std::make_pair(path, phrase), line);
            if (!inserted) {
                throw DataError(phrases_csv->string() + ":" + std::to_string(line) + ": duplicate row (" + path + "," +
                                phrase + ") first seen on line " + std::to_string(it->second));
            }
            if (!std::filesystem::is_regular_file(root / path)) {
                throw DataError(phrases_csv->string() + ":" + std::to_string(line) + ": missing image file " +
                                (root / path).string());
            }
            m.phrases.push_back({path, phrase, line});
        }
    }
    refresh_classes(m);
    return m;
}

DatasetManifest subsample(const DatasetManifest& manifest, std::size_t per_class, std::size_t top_classes,
                          std::uint64_t seed) {
    if (per_class == 0) throw ConfigError("subsample: per_class must be at least 1");
    std::vector<std::size_t> order(manifest.classes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // classes is sorted, so a stable sort by count leaves ties in lexicographic order
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return manifest.class_counts[a] > manifest.class_counts[b];
    });
    order.resize(std::min(order.size(), top_classes));
    std::sort(order.begin(), order.end());

    std::mt19937_64 rng(seed);
    DatasetManifest out;
    out.root = manifest.root;
    std::set<std::string> kept_paths;
    for (std::size_t c : order) {
        std::vector<const LabelRecord*> members;
        for (const LabelRecord& r : manifest.records) {
            if (r.label == manifest.classes[c]) members.push_back(&r);
        }
        const std::size_t take = std::min(per_class, members.size());
        for (std::size_t i = 0; i < take; ++i) std::swap(members[i], members[uniform_index(rng, i, members.size() - 1)]);
        members.resize(take);
        std::sort(members.begin(), members.end(), [](const LabelRecord* a, const LabelRecord* b) { return a->line < b->line; });
        for (const LabelRecord* r : members) {
            out.records.push_back(*r);
            kept_paths.insert(r->path);
        }
    }
    for (const PhraseRecord& p : manifest.phrases) {
        if (kept_paths.count(p.path) != 0) out.phrases.push_back(p);
    }
    refresh_classes(out);
    return out;
}

std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest, double test_fraction,
                                                             std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
    std::mt19937_64 rng(seed);
    DatasetManifest train;
    DatasetManifest test;
    train.root = test.root = manifest.root;
    std::set<std::string> test_paths;
    for (const std::string& label : manifest.classes) {
        std::vector<const LabelRecord*> members;
        for (const LabelRecord& r : manifest.records) {
            if (r.label == label) members.push_back(&r);
        }
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[uniform_index(rng, 0, i - 1)]);
        const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i < n_test) test_paths.insert(members[i]->path);
        }
    }
    for (const LabelRecord& r : manifest.records) (test_paths.count(r.path) ? test : train).records.push_back(r);
    for (const PhraseRecord& p : manifest.phrases) (test_paths.count(p.path) ? test : train).phrases.push_back(p);
    refresh_classes(train);
    refresh_classes(test);
    return {train, test};
}

std::string kind_name(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::stripes_h: return "stripes_h";
        case SyntheticKind::stripes_v: return "stripes_v";
        case SyntheticKind::checker: return "checker";
        case SyntheticKind::dots: return "dots";
    }
    return "unknown";
}

SyntheticKind parse_kind(const std::string& name) {
    for (SyntheticKind k : all_synthetic_kinds()) {
        if (kind_name(k) == name) return k;
    }
    throw ConfigError("unknown synthetic kind \"" + name + "\"");
}

std::vector<SyntheticKind> all_synthetic_kinds() {
    return {SyntheticKind::stripes_h, SyntheticKind::stripes_v, SyntheticKind::checker, SyntheticKind::dots};
}

std::vector<std::string> kind_phrases(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::stripes_h: return {"horizontal lines", "striped", "parallel lines"};
        case SyntheticKind::stripes_v: return {"vertical lines", "striped", "parallel lines"};
        case SyntheticKind::checker: return {"checkered", "grid", "squares"};
        case SyntheticKind::dots: return {"dotted", "polka dots", "spots"};
    }
    return {};
}

Tensor3 generate_texture(SyntheticKind kind, std::size_t size, double noise, std::mt19937_64& rng) {
    if (size < 16) throw ConfigError("synthetic textures need size >= 16");
    constexpr double kLow = 0.1;
    constexpr double kHigh = 0.9;
    std::uniform_real_distribution<double> period_dist(4.0, 12.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double period = period_dist(rng);
    const double phase_x = unit(rng) * period;
    const double phase_y = unit(rng) * period;
    auto cycle = [period](double t) { return t / period - std::floor(t / period); };

    Tensor3 img(size, size, 3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double x = static_cast<double>(c) + phase_x;
            const double y = static_cast<double>(r) + phase_y;
            bool high = false;
            switch (kind) {
                case SyntheticKind::stripes_v: high = cycle(x) < 0.5; break;
                case SyntheticKind::stripes_h: high = cycle(y) < 0.5; break;
                case SyntheticKind::checker: high = (cycle(x) < 0.5) != (cycle(y) < 0.5); break;
                case SyntheticKind::dots: {
                    const double dx = (cycle(x) - 0.5) * period;
                    const double dy = (cycle(y) - 0.5) * period;
                    high = std::sqrt(dx * dx + dy * dy) > period / 4.0;  // light background, dark dots
                    break;
                }
            }
            double v = high ? kHigh : kLow;
            if (noise > 0.0) v += noise * gauss(rng);
            v = std::clamp(v, 0.0, 1.0);
            for (std::size_t k = 0; k < 3; ++k) img.at(r, c, k) = v;
        }
    }
    return img;
}

DatasetManifest make_synthetic(const SyntheticOptions& options, const std::filesystem::path& out) {
    if (options.kinds.empty() || options.count == 0) throw ConfigError("make_synthetic: nothing to generate");
    std::filesystem::create_directories(out);
    std::mt19937_64 rng(options.seed);
    std::ostringstream labels;
    std::ostringstream phrases;
    labels << "path,label\n";
    phrases << "path,phrase\n";
    for (SyntheticKind kind : options.kinds) {
        const std::string name = kind_name(kind);
        std::filesystem::create_directories(out / name);
        for (std::size_t i = 0; i < options.count; ++i) {
            char file[64];
            std::snprintf(file, sizeof file, "%s_%04zu.ppm", name.c_str(), i);
            const std::string rel = name + "/" + file;
            write_ppm(generate_texture(kind, options.size, options.noise, rng), out / rel);
            labels << rel << ',' << name << '\n';
            for (const std::string& p : kind_phrases(kind)) phrases << rel << ',' << p << '\n';
        }
    }
    write_file_atomic(out / "labels.csv", labels.str());
    write_file_atomic(out / "phrases.csv", phrases.str());
    return load_manifest(out / "labels.csv", out / "phrases.csv", out);
}

}  // namespace texmax
