#include "ocrprep/datagen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ocrprep/png_io.hpp"
#include "ocrprep/rng.hpp"

namespace fs = std::filesystem;

namespace ocrprep::data {

void DegradationConfig::validate() const {
    auto bad = [](const std::string& k, float v, float lo, float hi) {
        throw std::invalid_argument("DegradationConfig: " + k + " = " + std::to_string(v) +
                                    " outside [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
    };
    if (contrast <= 0.0f || contrast > 1.0f) bad("contrast", contrast, 0.0f, 1.0f);
    if (blur_radius < 0.0f || blur_radius > 4.0f) bad("blur_radius", blur_radius, 0.0f, 4.0f);
    if (dot_dropout < 0.0f || dot_dropout >= 1.0f) bad("dot_dropout", dot_dropout, 0.0f, 1.0f);
    if (clutter_density < 0.0f || clutter_density > 0.05f)
        bad("clutter_density", clutter_density, 0.0f, 0.05f);
    if (noise_sigma < 0.0f || noise_sigma > 1.0f) bad("noise_sigma", noise_sigma, 0.0f, 1.0f);
}

std::string DegradationConfig::to_string() const {
    std::ostringstream os;
    os << "contrast=" << contrast << ";blur=" << blur_radius << ";dot=" << dot_dropout
       << ";clutter=" << clutter_density << ";noise=" << noise_sigma;
    return os.str();
}

DegradationConfig DegradationConfig::parse(const std::string& s) {
    DegradationConfig cfg;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("DegradationConfig: bad field '" + item + "'");
        const std::string key = item.substr(0, eq);
        const float v = std::stof(item.substr(eq + 1));
        if (key == "contrast") cfg.contrast = v;
        else if (key == "blur") cfg.blur_radius = v;
        else if (key == "dot") cfg.dot_dropout = v;
        else if (key == "clutter") cfg.clutter_density = v;
        else if (key == "noise") cfg.noise_sigma = v;
        else throw std::invalid_argument("DegradationConfig: unknown field '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

DegradationConfig DegradationConfig::calibrated() {
    DegradationConfig cfg;
    // Contrast plus blur pushes stroke cores close to the recognizer's
    // binarization threshold, giving a smooth failure mode a preprocessor can
    // undo; heavy additive noise is avoided because it breaks blank-column
    // segmentation and yields uninformative empty readings.
    cfg.contrast = 0.7f;
    cfg.blur_radius = 0.6f;
    cfg.dot_dropout = 0.05f;
    cfg.clutter_density = 0.0005f;
    cfg.noise_sigma = 0.04f;
    return cfg;
}

namespace {

void gaussian_blur(Image& img, float radius) {
    const int r = static_cast<int>(std::ceil(2.0f * radius));
    if (r < 1) return;
    std::vector<float> kernel(2 * r + 1);
    const float sigma = radius;
    float sum = 0.0f;
    for (int i = -r; i <= r; ++i) {
        kernel[i + r] = std::exp(-0.5f * (i * i) / (sigma * sigma));
        sum += kernel[i + r];
    }
    for (auto& k : kernel) k /= sum;
    Image tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.0f;
            for (int i = -r; i <= r; ++i) {
                const int xx = std::clamp(x + i, 0, img.width - 1);
                acc += kernel[i + r] * img.at(xx, y);
            }
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.0f;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::clamp(y + i, 0, img.height - 1);
                acc += kernel[i + r] * tmp.at(x, yy);
            }
            img.at(x, y) = acc;
        }
}

}  // namespace

Sample render_word(const std::string& text, const blackbox::GlyphAtlas& atlas,
                   const DegradationConfig& deg, std::uint64_t seed) {
    deg.validate();
    const std::u32string word = losses::utf8_decode(text);
    // layout pass
    int width = 0, height = 0;
    for (char32_t c : word) {
        if (!atlas.has(c))
            throw std::invalid_argument("render_word: no glyph for character in '" + text + "'");
        const auto& g = atlas.glyph(c);
        width += (width > 0 ? 1 : 0) + g.width;
        height = std::max(height, g.height);
    }
    if (width > kSampleWidth)
        throw std::invalid_argument("render_word: '" + text + "' renders " +
                                    std::to_string(width) + " px, exceeds " +
                                    std::to_string(kSampleWidth));

    Image img;
    if (word.empty()) {
        img = Image(kSampleWidth, kSampleHeight, 1.0f);
    } else {
        Image tight(width, height, 1.0f);
        int x = 0;
        for (char32_t c : word) {
            const auto& g = atlas.glyph(c);
            const int y0 = (height - g.height) / 2;
            for (int gy = 0; gy < g.height; ++gy)
                for (int gx = 0; gx < g.width; ++gx)
                    if (g.at(gx, gy)) tight.at(x + gx, y0 + gy) = 0.0f;
            x += g.width + 1;
        }
        img = pad_to(tight, kSampleWidth, kSampleHeight, 1.0f);
    }

    auto rng = make_stream(seed, 0x72656e64);
    // contrast: pull ink toward the background
    if (deg.contrast != 1.0f)
        for (auto& v : img.px) v = 1.0f - deg.contrast * (1.0f - v);
    if (deg.blur_radius > 0.0f) gaussian_blur(img, deg.blur_radius);
    if (deg.dot_dropout > 0.0f) {
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& v : img.px)
            if (v < 0.5f && u(rng) < deg.dot_dropout) v = 1.0f;
    }
    if (deg.clutter_density > 0.0f) {
        const int blobs = static_cast<int>(std::lround(
            deg.clutter_density * static_cast<float>(img.size())));
        std::uniform_int_distribution<int> px(0, img.width - 1), py(0, img.height - 1),
            sz(1, 2);
        std::uniform_real_distribution<float> shade(0.0f, 0.5f);
        for (int i = 0; i < blobs; ++i) {
            const int bx = px(rng), by = py(rng), bs = sz(rng);
            const float v = shade(rng);
            for (int dy = 0; dy < bs; ++dy)
                for (int dx = 0; dx < bs; ++dx)
                    if (bx + dx < img.width && by + dy < img.height)
                        img.at(bx + dx, by + dy) = v;
        }
    }
    if (deg.noise_sigma > 0.0f) {
        std::normal_distribution<float> n(0.0f, deg.noise_sigma);
        for (auto& v : img.px) v += n(rng);
    }
    clamp01(img);
    return {std::move(img), text, deg.to_string()};
}

std::string random_word(const losses::CharVocab& vocab, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_int_distribution<int> pick(0, vocab.size() - 1);
    std::u32string w;
    const int L = len(rng);
    for (int i = 0; i < L; ++i) w.push_back(vocab.char_at(pick(rng)));
    return losses::utf8_encode(w);
}

std::vector<DatasetManifest> generate_dataset(const losses::CharVocab& vocab,
                                              const SplitCounts& counts,
                                              const DegradationConfig& deg, std::uint64_t seed,
                                              const std::string& out_dir,
                                              const std::vector<std::string>* word_list) {
    deg.validate();
    if (counts.train < 1 || counts.val < 1 || counts.test < 1)
        throw std::invalid_argument("generate_dataset: all split counts must be >= 1");
    const auto atlas = blackbox::GlyphAtlas::engine_a();
    fs::create_directories(out_dir);

    std::vector<DatasetManifest> manifests;
    std::uint64_t global_index = 0;
    const std::vector<std::pair<std::string, int>> splits = {
        {"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
    for (const auto& [split, count] : splits) {
        fs::create_directories(fs::path(out_dir) / split);
        DatasetManifest m;
        m.split = split;
        m.seed = seed;
        m.degradation = deg;
        m.root_dir = out_dir;
        for (int i = 0; i < count; ++i, ++global_index) {
            auto rng = make_stream(seed, global_index);
            std::string word;
            if (word_list && !word_list->empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, word_list->size() - 1);
                word = (*word_list)[pick(rng)];
            } else {
                word = random_word(vocab, rng);
            }
            const Sample s = render_word(word, atlas, deg, splitmix64(seed ^ global_index));
            char name[32];
            std::snprintf(name, sizeof(name), "%s/%06d.png", split.c_str(), i);
            write_png_gray((fs::path(out_dir) / name).string(), s.image);
            m.entries.push_back({name, word});
        }
        write_manifest(m, (fs::path(out_dir) / (split + ".tsv")).string());
        manifests.push_back(std::move(m));
    }
    return manifests;
}

void write_manifest(const DatasetManifest& m, const std::string& manifest_path) {
    std::ofstream os(manifest_path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_manifest: cannot write " + manifest_path);
    os << "# version=" << m.version << "\n";
    os << "# split=" << m.split << "\n";
    os << "# seed=" << m.seed << "\n";
    os << "# degradation=" << m.degradation.to_string() << "\n";
    for (const auto& e : m.entries) os << e.image_path << "\t" << e.gt_text << "\n";
}

DatasetManifest read_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("read_manifest: cannot open " + manifest_path);
    DatasetManifest m;
    m.root_dir = fs::path(manifest_path).parent_path().string();
    if (m.root_dir.empty()) m.root_dir = ".";
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            key.erase(key.find_last_not_of(' ') + 1);
            const std::string val = line.substr(eq + 1);
            if (key == "version") m.version = std::stoi(val);
            else if (key == "split") m.split = val;
            else if (key == "seed") m.seed = std::stoull(val);
            else if (key == "degradation") m.degradation = DegradationConfig::parse(val);
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("read_manifest: malformed line '" + line + "'");
        m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return m;
}

std::vector<Sample> load_dataset(const std::string& manifest_path,
                                 const losses::CharVocab* vocab) {
    const DatasetManifest m = read_manifest(manifest_path);
    std::vector<Sample> samples;
    samples.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        const std::string path = (fs::path(m.root_dir) / e.image_path).string();
        Image img;
        try {
            img = read_png_gray(path);
        } catch (const std::exception& ex) {
            throw std::runtime_error("load_dataset: entry '" + e.image_path +
                                     "' failed: " + ex.what());
        }
        if (vocab)
            for (char32_t c : losses::utf8_decode(e.gt_text))
                if (!vocab->contains(c))
                    throw std::runtime_error("load_dataset: entry '" + e.image_path +
                                             "' has out-of-vocabulary ground truth");
        samples.push_back({std::move(img), e.gt_text, m.degradation.to_string()});
    }
    return samples;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto rng = make_rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> d(0, i - 1);
        std::swap(idx[i - 1], idx[d(rng)]);
    }
    return idx;
}

}  // namespace ocrprep::data
