#pragma once

// Synthetic degraded-word dataset: rendering from the embedded glyph atlas,
// deterministic degradation, PNG + manifest persistence.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ocrprep/glyphs.hpp"
#include "ocrprep/image.hpp"
#include "ocrprep/vocab.hpp"

namespace ocrprep::data {

struct DegradationConfig {
    float contrast = 1.0f;        // (0,1]; scales ink darkness toward white
    float blur_radius = 0.0f;     // Gaussian radius in px, 0 = off
    float dot_dropout = 0.0f;     // [0,1) probability an ink pixel is dropped
    float clutter_density = 0.0f; // [0,0.05] expected blobs per pixel
    float noise_sigma = 0.0f;     // additive Gaussian std-dev

    bool is_identity() const {
        return contrast == 1.0f && blur_radius == 0.0f && dot_dropout == 0.0f &&
               clutter_density == 0.0f && noise_sigma == 0.0f;
    }
    void validate() const;  // throws std::invalid_argument outside documented ranges

    std::string to_string() const;
    static DegradationConfig parse(const std::string& s);

    // Degradation tuned so the engine-a baseline lands in the 20-40% band.
    static DegradationConfig calibrated();
};

struct Sample {
    Image image;        // 128x32 after padding
    std::string gt_text;
    std::string degradation_descriptor;
};

struct ManifestEntry {
    std::string image_path;  // relative to the manifest's directory
    std::string gt_text;
};

struct DatasetManifest {
    int version = 1;
    std::string split;
    std::uint64_t seed = 0;
    DegradationConfig degradation;
    std::string root_dir;  // directory holding the manifest
    std::vector<ManifestEntry> entries;
};

inline constexpr int kSampleWidth = 128;
inline constexpr int kSampleHeight = 32;

// Deterministic function of (text, atlas, deg, seed). Dark glyphs on a light
// background, degradations applied in fixed order:
// contrast -> blur -> dot dropout -> clutter -> noise -> clamp.
Sample render_word(const std::string& text, const blackbox::GlyphAtlas& atlas,
                   const DegradationConfig& deg, std::uint64_t seed);

// Uniform random word of length 1-8 over the vocabulary.
std::string random_word(const losses::CharVocab& vocab, std::mt19937_64& rng);

struct SplitCounts {
    int train = 5000;
    int val = 500;
    int test = 500;
};

// Writes <out_dir>/{train,val,test}/NNNNNN.png and one manifest per split
// (<out_dir>/<split>.tsv). Returns the manifests in train/val/test order.
std::vector<DatasetManifest> generate_dataset(const losses::CharVocab& vocab,
                                              const SplitCounts& counts,
                                              const DegradationConfig& deg, std::uint64_t seed,
                                              const std::string& out_dir,
                                              const std::vector<std::string>* word_list = nullptr);

DatasetManifest read_manifest(const std::string& manifest_path);
void write_manifest(const DatasetManifest& m, const std::string& manifest_path);

// Eager load; throws naming the offending entry on missing/corrupt files.
// Verifies alphabet closure of every gt_text against `vocab` when given.
std::vector<Sample> load_dataset(const std::string& manifest_path,
                                 const losses::CharVocab* vocab = nullptr);

// Seeded permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace ocrprep::data
