#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "ocrprep/configfile.hpp"
#include "ocrprep/datagen.hpp"
#include "ocrprep/evalreport.hpp"
#include "ocrprep/rng.hpp"

using namespace ocrprep;
namespace fs = std::filesystem;

namespace {

std::vector<data::Sample> clean_samples(int n, std::uint64_t seed) {
    auto atlas = blackbox::GlyphAtlas::engine_a();
    auto vocab = losses::CharVocab::default_vocab();
    auto rng = make_rng(seed);
    std::vector<data::Sample> out;
    for (int i = 0; i < n; ++i)
        out.push_back(
            data::render_word(data::random_word(vocab, rng), atlas, data::DegradationConfig{}, i));
    return out;
}

struct EmptyRecognizer : blackbox::Recognizer {
    std::string recognize(const Image&) const override { return ""; }
    blackbox::RecognizerCapabilities capabilities() const override {
        return {.concurrent_calls_safe = true, .max_width = 0, .max_height = 0,
                .deterministic = true};
    }
    std::string id() const override { return "empty"; }
};

}  // namespace

TEST_CASE("perfect recognition scores 100 accuracy and 0 CER") {
    auto ocr = blackbox::TemplateRecognizer::engine_a();
    auto rep = evalcli::evaluate(*ocr, nullptr, clean_samples(20, 1), "clean", "none");
    CHECK(rep.word_accuracy == doctest::Approx(100.0));
    CHECK(rep.cer == doctest::Approx(0.0));
    CHECK(rep.samples == 20);
    CHECK(rep.recognition_errors == 0);
}

TEST_CASE("all-empty predictions score 0 accuracy and 100 CER") {
    EmptyRecognizer ocr;
    auto rep = evalcli::evaluate(ocr, nullptr, clean_samples(10, 2), "clean", "none");
    CHECK(rep.word_accuracy == doctest::Approx(0.0));
    CHECK(rep.cer == doctest::Approx(100.0));
}

TEST_CASE("evaluate is order-independent") {
    auto ocr = blackbox::TemplateRecognizer::engine_a();
    auto samples = clean_samples(15, 3);
    // degrade a few so accuracy is not trivially 100
    auto rng = make_rng(4);
    std::normal_distribution<float> dist(0.0f, 0.4f);
    for (int i = 0; i < 5; ++i)
        for (float& p : samples[i].image.px) p = std::clamp(p + dist(rng), 0.0f, 1.0f);
    auto rep1 = evalcli::evaluate(*ocr, nullptr, samples, "d", "none");
    std::reverse(samples.begin(), samples.end());
    auto rep2 = evalcli::evaluate(*ocr, nullptr, samples, "d", "none");
    CHECK(rep1.word_accuracy == rep2.word_accuracy);
    CHECK(rep1.cer == rep2.cer);
}

TEST_CASE("comparison arithmetic on a published-scale example") {
    evalcli::MetricsReport base, treat;
    base.dataset_id = treat.dataset_id = "pos";
    base.recognizer_id = treat.recognizer_id = "engine";
    base.word_accuracy = 54.51;
    base.cer = 26.33;
    treat.word_accuracy = 83.36;
    treat.cer = 8.68;
    auto c = evalcli::compare(base, treat);
    CHECK(c.accuracy_gain == doctest::Approx(28.85).epsilon(1e-9));
    CHECK(c.cer_reduction == doctest::Approx(17.65).epsilon(1e-9));
}

TEST_CASE("comparison refuses mismatched reports") {
    evalcli::MetricsReport a, b;
    a.dataset_id = "x";
    b.dataset_id = "y";
    a.recognizer_id = b.recognizer_id = "e";
    CHECK_THROWS_AS(evalcli::compare(a, b), std::invalid_argument);
    b.dataset_id = "x";
    b.recognizer_id = "other";
    CHECK_THROWS_AS(evalcli::compare(a, b), std::invalid_argument);
}

TEST_CASE("rounding is half-to-even at two decimals") {
    CHECK(evalcli::round2(0.125) == doctest::Approx(0.12));
    CHECK(evalcli::round2(0.135) == doctest::Approx(0.14));
    CHECK(evalcli::round2(0.115) == doctest::Approx(0.12));
    CHECK(evalcli::round2(1.005) == doctest::Approx(1.0));  // 1.005 is 1.00499.. in binary
    CHECK(evalcli::round2(-0.125) == doctest::Approx(-0.12));
}

TEST_CASE("report TSV round-trips") {
    auto dir = fs::temp_directory_path() / ("ocrprep_eval_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    evalcli::MetricsReport r;
    r.dataset_id = "data:test";
    r.recognizer_id = "template-a";
    r.preprocessor_id = "pre.ckpt";
    r.samples = 500;
    r.recognition_errors = 2;
    r.word_accuracy = 34.5678;
    r.cer = 41.2345;
    auto path = (dir / "rep.tsv").string();
    evalcli::write_report_tsv(path, r);
    auto back = evalcli::read_report_tsv(path);
    CHECK(back.dataset_id == r.dataset_id);
    CHECK(back.recognizer_id == r.recognizer_id);
    CHECK(back.preprocessor_id == r.preprocessor_id);
    CHECK(back.samples == r.samples);
    CHECK(back.recognition_errors == r.recognition_errors);
    CHECK(back.word_accuracy == doctest::Approx(r.word_accuracy).epsilon(1e-7));
    CHECK(back.cer == doctest::Approx(r.cer).epsilon(1e-7));
    fs::remove_all(dir);
}

TEST_CASE("run manifest round-trips and preserves order") {
    auto dir = fs::temp_directory_path() / ("ocrprep_rm_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    evalcli::RunManifest m;
    m.set("subcommand", "evaluate");
    m.set("seed", "7");
    m.set("seed", "8");  // overwrite keeps position
    m.set("engine", "template-a");
    auto path = (dir / "run.tsv").string();
    m.write(path);
    auto back = evalcli::RunManifest::read(path);
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[0] == std::pair<std::string, std::string>("subcommand", "evaluate"));
    CHECK(back.entries[1] == std::pair<std::string, std::string>("seed", "8"));
    CHECK(*back.find("engine") == "template-a");
    CHECK(back.find("absent") == nullptr);
    fs::remove_all(dir);
}

TEST_CASE("export writes the requested number of side-by-side pairs") {
    auto dir = fs::temp_directory_path() / ("ocrprep_exp_" + std::to_string(::getpid()));
    networks::PreprocessorNet pre(1);
    auto samples = clean_samples(5, 5);
    evalcli::export_images(pre, samples, dir.string(), 3);
    int count = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") ++count;
    CHECK(count == 3);
    fs::remove_all(dir);
}

TEST_CASE("config files parse sections, comments, and types") {
    auto cfg = evalcli::ConfigFile::parse_string(
        "top = 1\n"
        "[train]\n"
        "epochs = 50  # paper default\n"
        "lr_pre = 5e-5\n"
        "sigma_set = 0, 0.01, 0.02\n"
        "resume = true\n");
    CHECK(cfg.get_int("top", 0) == 1);
    CHECK(cfg.get_int("train.epochs", 0) == 50);
    CHECK(cfg.get_double("train.lr_pre", 0) == doctest::Approx(5e-5));
    CHECK(cfg.get_bool("train.resume", false));
    auto floats = cfg.get_floats("train.sigma_set", {});
    REQUIRE(floats.size() == 3);
    CHECK(floats[1] == doctest::Approx(0.01f));
    CHECK(cfg.get_int("train.absent", 42) == 42);
    CHECK(!cfg.has("absent"));
}

TEST_CASE("config files reject malformed input naming the offender") {
    CHECK_THROWS_AS(evalcli::ConfigFile::parse_string("novalue\n"), std::runtime_error);
    CHECK_THROWS_AS(evalcli::ConfigFile::parse_string("[unterminated\n"), std::runtime_error);
    CHECK_THROWS_AS(evalcli::ConfigFile::parse_string("a = 1\na = 2\n"), std::runtime_error);
    auto cfg = evalcli::ConfigFile::parse_string("epochs = fifty\n");
    CHECK_THROWS_AS(cfg.get_int("epochs", 0), std::runtime_error);
    try {
        cfg.get_int("epochs", 0);
        FAIL("expected error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("epochs") != std::string::npos);
    }
}
