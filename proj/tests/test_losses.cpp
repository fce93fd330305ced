#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "ocrprep/ctc.hpp"
#include "ocrprep/ops.hpp"
#include "ocrprep/rng.hpp"
#include "ocrprep/textmetrics.hpp"

using namespace ocrprep;
using diffkernel::Shape;
using diffkernel::Tape;
using diffkernel::Var;
using diffkernel::make_leaf;

namespace {

// Total probability of all length-T label paths that collapse (merge repeats,
// then drop blanks) to `target`. Exponential; only usable for tiny cases.
double brute_force_ctc_prob(const std::vector<double>& log_probs, int T, int K,
                            const std::vector<int>& target, int blank) {
    double total = 0.0;
    std::vector<int> path(T, 0);
    const long n_paths = static_cast<long>(std::pow(K, T));
    for (long code = 0; code < n_paths; ++code) {
        long c = code;
        for (int t = 0; t < T; ++t) {
            path[t] = static_cast<int>(c % K);
            c /= K;
        }
        std::vector<int> collapsed;
        int prev = -1;
        for (int t = 0; t < T; ++t) {
            if (path[t] != prev && path[t] != blank) collapsed.push_back(path[t]);
            prev = path[t];
        }
        if (collapsed != target) continue;
        double lp = 0.0;
        for (int t = 0; t < T; ++t) lp += log_probs[static_cast<std::size_t>(t) * K + path[t]];
        total += std::exp(lp);
    }
    return total;
}

Var<double> random_log_probs(Tape<double>& tape, int T, int K, std::mt19937_64& rng,
                             bool requires_grad = false) {
    auto logits = make_leaf<double>({T, K}, requires_grad);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : logits->value) v = dist(rng);
    return diffkernel::log_softmax_rows(tape, logits);
}

}  // namespace

TEST_CASE("CTC matches exhaustive path enumeration") {
    auto rng = make_rng(11);
    std::uniform_int_distribution<int> pick_T(1, 4), pick_vocab(1, 2);
    for (int trial = 0; trial < 200; ++trial) {
        const int vocab = pick_vocab(rng);
        const int K = vocab + 1;  // + blank
        const int T = pick_T(rng);
        std::uniform_int_distribution<int> pick_len(0, 2), pick_c(0, vocab - 1);
        std::vector<int> target;
        for (int i = pick_len(rng); i > 0; --i) target.push_back(pick_c(rng));
        if (losses::ctc_min_timesteps(target) > T) continue;

        Tape<double> tape;
        auto lp = random_log_probs(tape, T, K, rng);
        std::vector<double> lpv(lp->value.begin(), lp->value.end());
        double expected = -std::log(brute_force_ctc_prob(lpv, T, K, target, vocab));
        auto loss = losses::ctc_loss(tape, lp, target, vocab);
        CHECK(loss->value[0] == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("CTC gradient agrees with finite differences") {
    auto rng = make_rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const int vocab = 2, K = 3, T = 4;
        std::vector<int> target = {0, 1};
        auto logits_val = std::vector<double>(static_cast<std::size_t>(T) * K);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : logits_val) v = dist(rng);

        auto eval = [&](const std::vector<double>& lv, std::vector<double>* grad_out) {
            Tape<double> tape;
            auto logits = make_leaf<double>({T, K}, lv, true);
            auto lp = diffkernel::log_softmax_rows(tape, logits);
            auto loss = losses::ctc_loss(tape, lp, target, vocab);
            if (grad_out) {
                tape.backward(loss);
                *grad_out = logits->grad;
            }
            return loss->value[0];
        };

        std::vector<double> analytic;
        eval(logits_val, &analytic);
        const double h = 1e-6;
        for (std::size_t i = 0; i < logits_val.size(); ++i) {
            auto lo = logits_val, hi = logits_val;
            lo[i] -= h;
            hi[i] += h;
            double fd = (eval(hi, nullptr) - eval(lo, nullptr)) / (2 * h);
            CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("two-timestep uniform case gives -ln(3/4)") {
    // K=2 (one label + blank), both classes at probability 1/2 per step; the
    // paths AA, A-, -A collapse to "A" for a total mass of 3/4.
    Tape<double> tape;
    auto lp = make_leaf<double>({2, 2}, std::vector<double>(4, std::log(0.5)));
    auto loss = losses::ctc_loss(tape, lp, {0}, 1);
    CHECK(loss->value[0] == doctest::Approx(-std::log(0.75)).epsilon(1e-9));
}

TEST_CASE("empty target scores all-blank mass") {
    Tape<double> tape;
    auto rng = make_rng(13);
    auto lp = random_log_probs(tape, 3, 4, rng);
    double blank_mass = 0.0;
    {
        double s = 0.0;
        s = lp->value[3] + lp->value[7] + lp->value[11];  // blank column, K=4
        blank_mass = s;
    }
    auto loss = losses::ctc_loss(tape, lp, {}, 3);
    CHECK(loss->value[0] == doctest::Approx(-blank_mass).epsilon(1e-9));
}

TEST_CASE("infeasible target raises CtcInfeasible") {
    Tape<double> tape;
    auto lp = make_leaf<double>({2, 3}, std::vector<double>(6, std::log(1.0 / 3)));
    CHECK_THROWS_AS(losses::ctc_loss(tape, lp, {0, 0}, 2), losses::CtcInfeasible);
    CHECK(losses::ctc_min_timesteps({0, 0}) == 3);
    CHECK(losses::ctc_min_timesteps({0, 1}) == 2);
    CHECK(losses::ctc_min_timesteps({}) == 0);
}

TEST_CASE("ctc rejects bad class indices") {
    Tape<double> tape;
    auto lp = make_leaf<double>({4, 3}, std::vector<double>(12, std::log(1.0 / 3)));
    CHECK_THROWS_AS(losses::ctc_loss(tape, lp, {5}, 2), std::invalid_argument);
    CHECK_THROWS_AS(losses::ctc_loss(tape, lp, {2}, 2), std::invalid_argument);  // blank in target
}

// ---- edit distance ----------------------------------------------------------

namespace {

// Straightforward full-table DP, kept dumb on purpose.
int lev_table(const std::u32string& a, const std::u32string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[n][m];
}

std::u32string random_str(std::mt19937_64& rng, int maxlen) {
    std::uniform_int_distribution<int> len(0, maxlen), ch(0, 3);
    std::u32string s;
    for (int i = len(rng); i > 0; --i) s.push_back(U'A' + ch(rng));
    return s;
}

}  // namespace

TEST_CASE("levenshtein matches the reference table") {
    CHECK(losses::levenshtein_utf8("kitten", "sitting") == 3);
    CHECK(losses::levenshtein_utf8("", "") == 0);
    CHECK(losses::levenshtein_utf8("ABC", "") == 3);
    CHECK(losses::levenshtein_utf8("", "ABC") == 3);
    CHECK(losses::levenshtein_utf8("ABC", "ABC") == 0);
    auto rng = make_rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        auto a = random_str(rng, 20), b = random_str(rng, 20);
        CHECK(losses::levenshtein(a, b) == lev_table(a, b));
    }
}

TEST_CASE("levenshtein properties") {
    auto rng = make_rng(22);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_str(rng, 12), b = random_str(rng, 12), c = random_str(rng, 12);
        const int ab = losses::levenshtein(a, b);
        CHECK(ab == losses::levenshtein(b, a));                                   // symmetry
        CHECK(ab <= losses::levenshtein(a, c) + losses::levenshtein(c, b));       // triangle
        CHECK(losses::levenshtein(a, a) == 0);                                    // identity
        if (!a.empty()) {
            auto mutated = a;
            mutated[0] = (mutated[0] == U'A') ? U'B' : U'A';
            CHECK(losses::levenshtein(a, mutated) == 1);  // unit edit
        }
    }
}

TEST_CASE("character error rate") {
    CHECK(losses::cer_utf8("ABC", "ABC") == doctest::Approx(0.0));
    CHECK(losses::cer_utf8("", "ABCD") == doctest::Approx(100.0));
    CHECK(losses::cer_utf8("AXC", "ABC") == doctest::Approx(100.0 / 3));
    // predictions longer than ground truth push CER above 100
    CHECK(losses::cer_utf8("AAAAA", "B") == doctest::Approx(500.0));
    CHECK_THROWS_AS(losses::cer_utf8("X", ""), std::invalid_argument);
    // CER * |gt| / 100 recovers the integer edit distance
    auto rng = make_rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = random_str(rng, 10);
        auto b = random_str(rng, 10);
        if (b.empty()) b = U"A";
        double edits = losses::cer(a, b) * static_cast<double>(b.size()) / 100.0;
        CHECK(std::round(edits) == doctest::Approx(edits).epsilon(1e-9));
        CHECK(static_cast<int>(std::round(edits)) == losses::levenshtein(a, b));
    }
}

TEST_CASE("word accuracy") {
    CHECK(losses::word_accuracy({"A", "B", "C", "D"}, {"A", "X", "C", "D"}) ==
          doctest::Approx(75.0));
    CHECK(losses::word_accuracy({"A"}, {"A"}) == doctest::Approx(100.0));
    CHECK(losses::word_accuracy({"A"}, {"B"}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(losses::word_accuracy({"A"}, {"A", "B"}), std::invalid_argument);
    CHECK_THROWS_AS(losses::word_accuracy({}, {}), std::invalid_argument);
}

// ---- composite objective ----------------------------------------------------

TEST_CASE("white-image MSE term") {
    Tape<double> tape;
    auto ones = make_leaf<double>({2, 2}, std::vector<double>(4, 1.0));
    CHECK(losses::mse_to_white(tape, ones)->value[0] == doctest::Approx(0.0));
    auto zeros = make_leaf<double>({2, 2}, std::vector<double>(4, 0.0));
    CHECK(losses::mse_to_white(tape, zeros)->value[0] == doctest::Approx(1.0));
    auto halves = make_leaf<double>({2, 2}, std::vector<double>(4, 0.5));
    CHECK(losses::mse_to_white(tape, halves)->value[0] == doctest::Approx(0.25));
}

TEST_CASE("composite loss is ctc plus beta times white-MSE") {
    auto rng = make_rng(31);
    Tape<double> tape;
    auto lp = random_log_probs(tape, 4, 3, rng);
    auto g = make_leaf<double>({2, 3}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    std::vector<int> target = {0, 1};

    auto ctc_alone = losses::ctc_loss(tape, lp, target, 2);
    auto white = losses::mse_to_white(tape, g);
    for (double beta : {0.0, 1.0, 2.5}) {
        auto total = losses::composite_loss(tape, lp, g, target, 2, beta);
        CHECK(total->value[0] ==
              doctest::Approx(ctc_alone->value[0] + beta * white->value[0]).epsilon(1e-9));
    }
}
