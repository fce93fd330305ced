#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ocrprep/datagen.hpp"
#include "ocrprep/rng.hpp"
#include "ocrprep/trainers.hpp"

using namespace ocrprep;
using diffkernel::Var;

namespace {

std::vector<data::Sample> tiny_dataset(int n, std::uint64_t seed) {
    auto atlas = blackbox::GlyphAtlas::engine_a();
    auto vocab = losses::CharVocab::default_vocab();
    auto rng = make_rng(seed);
    std::vector<data::Sample> out;
    for (int i = 0; i < n; ++i)
        out.push_back(data::render_word(data::random_word(vocab, rng), atlas,
                                        data::DegradationConfig::calibrated(),
                                        splitmix64(seed + i)));
    return out;
}

std::vector<std::vector<float>> snapshot(const std::vector<Var<float>>& ps) {
    std::vector<std::vector<float>> out;
    for (const auto& p : ps) out.push_back(p->value);
    return out;
}

struct ConstantRecognizer : blackbox::Recognizer {
    std::string text;
    explicit ConstantRecognizer(std::string t) : text(std::move(t)) {}
    std::string recognize(const Image&) const override { return text; }
    blackbox::RecognizerCapabilities capabilities() const override {
        return {.concurrent_calls_safe = true, .max_width = 0, .max_height = 0,
                .deterministic = true};
    }
    std::string id() const override { return "constant"; }
};

// Emits "A" unless the first pixel is pushed above one half.
struct ThresholdRecognizer : blackbox::Recognizer {
    std::string recognize(const Image& img) const override {
        return img.px[0] > 0.5f ? "" : "A";
    }
    blackbox::RecognizerCapabilities capabilities() const override {
        return {.concurrent_calls_safe = true, .max_width = 0, .max_height = 0,
                .deterministic = true};
    }
    std::string id() const override { return "threshold"; }
};

struct FlakyRecognizer : blackbox::Recognizer {
    mutable int calls = 0;
    std::string recognize(const Image&) const override {
        if (++calls % 3 == 0) throw blackbox::RecognitionError("flaky");
        return "A";
    }
    blackbox::RecognizerCapabilities capabilities() const override {
        return {.concurrent_calls_safe = false, .max_width = 0, .max_height = 0,
                .deterministic = false};
    }
    std::string id() const override { return "flaky"; }
};

}  // namespace

TEST_CASE("zero epochs is a no-op for every trainer") {
    auto ds = tiny_dataset(2, 1);
    auto vocab = losses::CharVocab::default_vocab();
    auto ocr = blackbox::TemplateRecognizer::engine_a();

    networks::PreprocessorNet pre(1);
    networks::ApproximatorNet apx(vocab, 2);
    auto pre_before = snapshot(pre.params());
    auto apx_before = snapshot(apx.params());

    auto l1 = trainers::pretrain_approximator(ds, nullptr, apx, 0, 1e-4f, 0);
    auto l2 = trainers::pretrain_preprocessor_identity(ds, pre, 0, 1e-4f, 0);
    trainers::NNTrainConfig nn;
    nn.epochs = 0;
    auto l3 = trainers::train_nn_approx(ds, nullptr, nn, *ocr, pre, apx);
    trainers::SFETrainConfig sfe;
    sfe.epochs = 0;
    auto l4 = trainers::train_sfe(ds, nullptr, sfe, *ocr, pre);

    CHECK(snapshot(pre.params()) == pre_before);
    CHECK(snapshot(apx.params()) == apx_before);
    CHECK(l1.records.empty());
    CHECK(l2.records.empty());
    CHECK(l3.records.empty());
    CHECK(l4.records.empty());
}

TEST_CASE("training is deterministic in the seed") {
    auto ds = tiny_dataset(3, 2);
    auto vocab = losses::CharVocab::default_vocab();
    auto ocr = blackbox::TemplateRecognizer::engine_a();
    trainers::NNTrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 7;

    auto run = [&](std::uint64_t seed) {
        trainers::NNTrainConfig c = cfg;
        c.seed = seed;
        networks::PreprocessorNet pre(10);
        networks::ApproximatorNet apx(vocab, 11);
        trainers::train_nn_approx(ds, nullptr, c, *ocr, pre, apx);
        return snapshot(pre.params());
    };
    CHECK(run(7) == run(7));
    CHECK(run(7) != run(8));
}

TEST_CASE("sfe gradient is exactly zero under a constant recognizer") {
    ConstantRecognizer ocr("FIXED");
    Image g(8, 4, 0.5f);
    auto rng = make_rng(3);
    auto est = trainers::sfe_gradient(g, "TARGET", 0.05f, 5, ocr, rng);
    CHECK(est.pairs_used == 5);
    for (float v : est.grad.px) CHECK(v == 0.0f);
}

TEST_CASE("constant recognizer with beta 0 leaves the preprocessor untouched") {
    auto ds = tiny_dataset(2, 4);
    ConstantRecognizer ocr("X");
    networks::PreprocessorNet pre(20);
    auto before = snapshot(pre.params());
    trainers::SFETrainConfig cfg;
    cfg.epochs = 2;
    cfg.beta = 0.0f;
    trainers::train_sfe(ds, nullptr, cfg, ocr, pre);
    CHECK(snapshot(pre.params()) == before);
}

TEST_CASE("mirrored estimator matches the analytic smoothed gradient") {
    // L(x) = 1{x0 > 1/2}. With x = g + eps, eps ~ N(0, sigma^2), the smoothed
    // objective is Phi((g0 - 1/2)/sigma), whose derivative at g0 = 1/2 is
    // phi(0)/sigma. Pixels other than x0 have zero expected gradient.
    ThresholdRecognizer ocr;
    const float sigma = 0.05f;
    const int trials = 400;
    auto rng = make_rng(5);
    Image g(4, 2, 0.5f);
    std::vector<double> first(trials);
    double other_sum = 0.0;
    for (int i = 0; i < trials; ++i) {
        auto est = trainers::sfe_gradient(g, "A", sigma, 5, ocr, rng);
        first[i] = est.grad.px[0];
        other_sum += est.grad.px[3];
    }
    const double mean = std::accumulate(first.begin(), first.end(), 0.0) / trials;
    double var = 0.0;
    for (double v : first) var += (v - mean) * (v - mean);
    var /= (trials - 1);
    const double se = std::sqrt(var / trials);
    const double expected = (1.0 / std::sqrt(2.0 * M_PI)) / sigma;  // phi(0)/sigma
    CHECK(std::abs(mean - expected) <= 3.0 * se);
    CHECK(std::abs(other_sum / trials) <= 0.5);  // off-pixel gradient hovers near zero
}

TEST_CASE("failed recognitions drop their mirrored pair and renormalize") {
    FlakyRecognizer ocr;
    Image g(4, 2, 0.5f);
    auto rng = make_rng(6);
    int dropped = 0;
    auto est = trainers::sfe_gradient(g, "A", 0.05f, 5, ocr, rng, &dropped);
    CHECK(est.pairs_used + dropped == 5);
    CHECK(dropped > 0);
}

TEST_CASE("approximator pretraining reduces CTC loss") {
    // Single-character words keep CTC feasible and learnable at toy scale.
    auto atlas = blackbox::GlyphAtlas::engine_a();
    std::vector<data::Sample> ds;
    for (char c : std::string("ABCDE"))
        ds.push_back(data::render_word(std::string(1, c), atlas, data::DegradationConfig{}, c));
    networks::ApproximatorNet apx(losses::CharVocab::default_vocab(), 30);
    auto log = trainers::pretrain_approximator(ds, nullptr, apx, 20, 1e-3f, 1);
    REQUIRE(log.records.size() >= 2);
    CHECK(log.records.back().loss_ctc < log.records.front().loss_ctc);
    CHECK(log.skipped_samples == 0);
}

TEST_CASE("identity pretraining reduces reconstruction error") {
    auto ds = tiny_dataset(4, 7);
    networks::PreprocessorNet pre(31);
    auto log = trainers::pretrain_preprocessor_identity(ds, pre, 10, 1e-3f, 1);
    REQUIRE(log.records.size() == 10);
    CHECK(log.records.back().loss_mse < log.records.front().loss_mse);
}

TEST_CASE("alternating training runs and logs under the real engine") {
    auto ds = tiny_dataset(3, 8);
    auto vocab = losses::CharVocab::default_vocab();
    auto ocr = blackbox::TemplateRecognizer::engine_a();
    networks::PreprocessorNet pre(40);
    networks::ApproximatorNet apx(vocab, 41);
    trainers::NNTrainConfig cfg;
    cfg.epochs = 2;
    cfg.val_every = 1;
    auto val = tiny_dataset(2, 9);
    auto log = trainers::train_nn_approx(ds, &val, cfg, *ocr, pre, apx);
    int train_recs = 0, val_recs = 0;
    for (const auto& r : log.records) (r.split == "train" ? train_recs : val_recs)++;
    CHECK(train_recs == 2);
    CHECK(val_recs == 2);
}

TEST_CASE("config validation rejects bad values before any work") {
    trainers::NNTrainConfig nn;
    nn.sigma_set = {-0.01f};
    CHECK_THROWS_AS(nn.validate(), std::invalid_argument);
    nn = {};
    nn.jitter_samples = 0;
    CHECK_THROWS_AS(nn.validate(), std::invalid_argument);
    nn = {};
    nn.lr_pre = 0.0f;
    CHECK_THROWS_AS(nn.validate(), std::invalid_argument);

    trainers::SFETrainConfig sfe;
    sfe.sigma = 0.0f;
    CHECK_THROWS_AS(sfe.validate(), std::invalid_argument);
    sfe = {};
    sfe.n = 0;
    CHECK_THROWS_AS(sfe.validate(), std::invalid_argument);
    sfe = {};
    sfe.beta = -1.0f;
    CHECK_THROWS_AS(sfe.validate(), std::invalid_argument);
}

TEST_CASE("metric log serializes with a stable header") {
    trainers::MetricLog log;
    trainers::MetricRecord r;
    r.epoch = 1;
    r.split = "train";
    r.loss_ctc = 1.5;
    r.loss_total = 2.0;
    log.records.push_back(r);
    auto text = log.to_text();
    CHECK(text.find("epoch\tsplit\tloss_ctc") == 0);
    CHECK(text.find("1\ttrain\t1.5") != std::string::npos);
}
