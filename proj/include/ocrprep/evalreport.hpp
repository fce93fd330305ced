#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocrprep/blackbox.hpp"
#include "ocrprep/datagen.hpp"
#include "ocrprep/networks.hpp"

namespace ocrprep::evalcli {

struct MetricsReport {
    std::string dataset_id;
    std::string recognizer_id;
    std::string preprocessor_id;  // "none" for raw-image baselines
    int samples = 0;
    int recognition_errors = 0;  // engine failures, excluded from the metrics below
    double word_accuracy = 0.0;  // percent
    double cer = 0.0;            // percent, mean of per-sample character error rates
};

// preprocessor may be null (baseline). Recognition errors are counted, not fatal.
MetricsReport evaluate(const blackbox::Recognizer& ocr, networks::PreprocessorNet* pre,
                       const std::vector<data::Sample>& samples, const std::string& dataset_id,
                       const std::string& preprocessor_id);

struct Comparison {
    MetricsReport baseline;
    MetricsReport treated;
    double accuracy_gain = 0.0;  // treated - baseline, percentage points
    double cer_reduction = 0.0;  // baseline - treated, percentage points
};

// Throws if the two reports disagree on dataset or recognizer.
Comparison compare(const MetricsReport& baseline, const MetricsReport& treated);

// Rounds to two decimals, ties to even.
double round2(double v);

std::string format_report(const MetricsReport& r);        // aligned human table
std::string format_comparison(const Comparison& c);
std::string report_tsv(const MetricsReport& r);           // machine-readable, one record
void write_report_tsv(const std::string& path, const MetricsReport& r);
MetricsReport read_report_tsv(const std::string& path);

// Side-by-side original/processed pairs as PNGs under out_dir.
void export_images(networks::PreprocessorNet& pre, const std::vector<data::Sample>& samples,
                   const std::string& out_dir, int count);

// Short git revision the library was built from.
std::string code_revision();

// Ordered key-value run provenance (seeds, config, checkpoint hashes, code rev).
struct RunManifest {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    const std::string* find(const std::string& key) const;
    void write(const std::string& path) const;
    static RunManifest read(const std::string& path);
};

}  // namespace ocrprep::evalcli
