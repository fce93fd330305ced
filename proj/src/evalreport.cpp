#include "ocrprep/evalreport.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "ocrprep/png_io.hpp"
#include "ocrprep/textmetrics.hpp"

namespace ocrprep::evalcli {

namespace fs = std::filesystem;

namespace {

struct SampleOutcome {
    bool error = false;
    bool correct = false;
    double cer = 0.0;
};

SampleOutcome run_one(const blackbox::Recognizer& ocr, networks::PreprocessorNet* pre,
                      const data::Sample& s) {
    SampleOutcome out;
    try {
        Image img = pre ? pre->preprocess(s.image) : s.image;
        std::string text = ocr.recognize(img);
        out.correct = (text == s.gt_text);
        out.cer = losses::cer_utf8(text, s.gt_text);
    } catch (const blackbox::RecognitionError&) {
        out.error = true;
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const blackbox::Recognizer& ocr, networks::PreprocessorNet* pre,
                       const std::vector<data::Sample>& samples, const std::string& dataset_id,
                       const std::string& preprocessor_id) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
    MetricsReport rep;
    rep.dataset_id = dataset_id;
    rep.recognizer_id = ocr.id();
    rep.preprocessor_id = preprocessor_id;
    rep.samples = static_cast<int>(samples.size());

    std::vector<SampleOutcome> outcomes(samples.size());
    unsigned hw = std::thread::hardware_concurrency();
    unsigned workers = 1;
    if (ocr.capabilities().concurrent_calls_safe && hw > 1)
        workers = std::min<unsigned>(hw, static_cast<unsigned>(samples.size()));
    if (workers > 1) {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1))
                    outcomes[i] = run_one(ocr, pre, samples[i]);
            });
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t i = 0; i < samples.size(); ++i) outcomes[i] = run_one(ocr, pre, samples[i]);
    }

    int ok = 0, correct = 0;
    double cer_sum = 0.0;
    for (const auto& o : outcomes) {
        if (o.error) {
            ++rep.recognition_errors;
            continue;
        }
        ++ok;
        if (o.correct) ++correct;
        cer_sum += o.cer;
    }
    rep.word_accuracy = ok ? 100.0 * correct / static_cast<double>(ok) : 0.0;
    rep.cer = ok ? cer_sum / static_cast<double>(ok) : 0.0;
    return rep;
}

Comparison compare(const MetricsReport& baseline, const MetricsReport& treated) {
    if (baseline.dataset_id != treated.dataset_id)
        throw std::invalid_argument("compare: dataset mismatch (" + baseline.dataset_id + " vs " +
                                    treated.dataset_id + ")");
    if (baseline.recognizer_id != treated.recognizer_id)
        throw std::invalid_argument("compare: recognizer mismatch (" + baseline.recognizer_id +
                                    " vs " + treated.recognizer_id + ")");
    Comparison c;
    c.baseline = baseline;
    c.treated = treated;
    c.accuracy_gain = treated.word_accuracy - baseline.word_accuracy;
    c.cer_reduction = baseline.cer - treated.cer;
    return c;
}

double round2(double v) {
    // nearbyint honors the default to-nearest-even rounding mode
    return std::nearbyint(v * 100.0) / 100.0;
}

namespace {
std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", round2(v));
    return buf;
}
}  // namespace

std::string format_report(const MetricsReport& r) {
    std::string out;
    out += "dataset        " + r.dataset_id + "\n";
    out += "recognizer     " + r.recognizer_id + "\n";
    out += "preprocessor   " + r.preprocessor_id + "\n";
    out += "samples        " + std::to_string(r.samples) + "\n";
    out += "rec. errors    " + std::to_string(r.recognition_errors) + "\n";
    out += "word accuracy  " + fmt2(r.word_accuracy) + "\n";
    out += "CER            " + fmt2(r.cer) + "\n";
    return out;
}

std::string format_comparison(const Comparison& c) {
    std::string out;
    out += "                 baseline   treated\n";
    out += "word accuracy    " + fmt2(c.baseline.word_accuracy) + "      " +
           fmt2(c.treated.word_accuracy) + "\n";
    out += "CER              " + fmt2(c.baseline.cer) + "      " + fmt2(c.treated.cer) + "\n";
    out += "accuracy gain    " + fmt2(c.accuracy_gain) + "\n";
    out += "CER reduction    " + fmt2(c.cer_reduction) + "\n";
    return out;
}

std::string report_tsv(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%d\t%d\t%.9g\t%.9g\n", r.dataset_id.c_str(),
                  r.recognizer_id.c_str(), r.preprocessor_id.c_str(), r.samples,
                  r.recognition_errors, r.word_accuracy, r.cer);
    return std::string("dataset\trecognizer\tpreprocessor\tsamples\terrors\taccuracy\tcer\n") + buf;
}

void write_report_tsv(const std::string& path, const MetricsReport& r) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("report: cannot open " + path);
    f << report_tsv(r);
}

MetricsReport read_report_tsv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("report: cannot open " + path);
    std::string header, line;
    if (!std::getline(f, header) || !std::getline(f, line))
        throw std::runtime_error("report: truncated file " + path);
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (cols.size() != 7) throw std::runtime_error("report: malformed record in " + path);
    MetricsReport r;
    r.dataset_id = cols[0];
    r.recognizer_id = cols[1];
    r.preprocessor_id = cols[2];
    r.samples = std::stoi(cols[3]);
    r.recognition_errors = std::stoi(cols[4]);
    r.word_accuracy = std::stod(cols[5]);
    r.cer = std::stod(cols[6]);
    return r;
}

void export_images(networks::PreprocessorNet& pre, const std::vector<data::Sample>& samples,
                   const std::string& out_dir, int count) {
    if (count < 1) throw std::invalid_argument("export-images: count must be >= 1");
    fs::create_directories(out_dir);
    const int n = std::min<int>(count, static_cast<int>(samples.size()));
    for (int i = 0; i < n; ++i) {
        const Image& in = samples[i].image;
        Image out = pre.preprocess(in);
        const int sep = 4;
        Image pair(in.width + sep + out.width, in.height, 0.5f);
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) pair.at(x, y) = in.at(x, y);
            for (int x = 0; x < out.width; ++x) pair.at(in.width + sep + x, y) = out.at(x, y);
        }
        char name[64];
        std::snprintf(name, sizeof(name), "pair_%04d.png", i);
        write_png_gray((fs::path(out_dir) / name).string(), pair);
    }
}

std::string code_revision() {
#ifdef OCRPREP_GIT_REV
    return OCRPREP_GIT_REV;
#else
    return "unknown";
#endif
}

void RunManifest::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
        if (k == key) {
            v = value;
            return;
        }
    entries.emplace_back(key, value);
}

const std::string* RunManifest::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("run manifest: cannot open " + path);
    for (const auto& [k, v] : entries) f << k << '\t' << v << '\n';
}

RunManifest RunManifest::read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("run manifest: cannot open " + path);
    RunManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("run manifest: malformed line " + std::to_string(lineno) +
                                     " in " + path);
        m.entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return m;
}

}  // namespace ocrprep::evalcli
