#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "texmax/tensor.hpp"

namespace texmax {

struct LabelRecord {
    std::string path;  // relative to the manifest root
    std::string label;
    std::size_t line = 0;
};

struct PhraseRecord {
    std::string path;
    std::string phrase;
    std::size_t line = 0;
};

/// Validated dataset listing. `classes` is sorted lexicographically.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<LabelRecord> records;
    std::vector<PhraseRecord> phrases;
    std::vector<std::string> classes;
    std::vector<std::size_t> class_counts;

    std::size_t class_index(const std::string& label) const;
    /// Phrases attached to `path`, sorted and unique.
    std::vector<std::string> phrases_for(const std::string& path) const;
};

/// Reads `path,label` (and optionally `path,phrase`) CSVs. Every referenced image
/// must exist and decode as PPM. Errors name the file and line.
DatasetManifest load_manifest(const std::filesystem::path& labels_csv,
                              const std::optional<std::filesystem::path>& phrases_csv,
                              const std::filesystem::path& root);

/// Recomputes the class table and counts from `records`.
void refresh_classes(DatasetManifest& manifest);

inline constexpr std::size_t kDefaultPerClass = 100;
inline constexpr std::size_t kDefaultTopClasses = 200;

/// Keeps the `top_classes` largest classes (ties by name), then samples
/// min(per_class, available) images per class without replacement.
DatasetManifest subsample(const DatasetManifest& manifest, std::size_t per_class = kDefaultPerClass,
                          std::size_t top_classes = kDefaultTopClasses, std::uint64_t seed = 0);

/// Stratified split: per class, round(n * test_fraction) images go to the test side.
std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest, double test_fraction,
                                                             std::uint64_t seed);

enum class SyntheticKind { stripes_h, stripes_v, checker, dots };

std::string kind_name(SyntheticKind kind);
SyntheticKind parse_kind(const std::string& name);
std::vector<SyntheticKind> all_synthetic_kinds();
/// Attribute phrases auto-annotated on every image of a synthetic class.
std::vector<std::string> kind_phrases(SyntheticKind kind);

/// One procedural texture: random period in [4,12] px and random phase, grayscale
/// replicated to 3 channels, Gaussian noise of std `noise`, clamped to [0,1].
Tensor3 generate_texture(SyntheticKind kind, std::size_t size, double noise, std::mt19937_64& rng);

struct SyntheticOptions {
    std::vector<SyntheticKind> kinds = all_synthetic_kinds();
    std::size_t count = 125;  // images per class
    std::size_t size = 64;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

/// Writes <out>/<kind>/<kind>_NNNN.ppm, labels.csv and phrases.csv; returns the loaded manifest.
DatasetManifest make_synthetic(const SyntheticOptions& options, const std::filesystem::path& out);

}  // namespace texmax
