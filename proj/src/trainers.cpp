#include "ocrprep/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ocrprep/adam.hpp"
#include "ocrprep/checkpoint.hpp"
#include "ocrprep/ctc.hpp"
#include "ocrprep/evalreport.hpp"
#include "ocrprep/rng.hpp"
#include "ocrprep/textmetrics.hpp"

namespace ocrprep::trainers {

using diffkernel::Tape;
using diffkernel::Var;

void NNTrainConfig::validate() const {
    if (jitter_samples < 1) throw std::invalid_argument("nn-train: jitter_samples must be >= 1");
    if (replay_samples < 0) throw std::invalid_argument("nn-train: replay_samples must be >= 0");
    if (replay_samples > 0 && replay_capacity < 1)
        throw std::invalid_argument("nn-train: replay_capacity must be >= 1 when replay is on");
    if (batch_size < 1) throw std::invalid_argument("nn-train: batch_size must be >= 1");
    if (sigma_set.empty()) throw std::invalid_argument("nn-train: sigma_set must be non-empty");
    for (float s : sigma_set)
        if (s < 0.0f) throw std::invalid_argument("nn-train: negative sigma in sigma_set");
    if (lr_pre <= 0.0f || lr_approx <= 0.0f)
        throw std::invalid_argument("nn-train: learning rates must be positive");
    if (beta < 0.0f) throw std::invalid_argument("nn-train: beta must be >= 0");
    if (epochs < 0) throw std::invalid_argument("nn-train: epochs must be >= 0");
    if (val_every < 0) throw std::invalid_argument("nn-train: val_every must be >= 0");
}

void SFETrainConfig::validate() const {
    if (n < 1) throw std::invalid_argument("sfe-train: n must be >= 1");
    if (sigma <= 0.0f) throw std::invalid_argument("sfe-train: sigma must be positive");
    if (lr <= 0.0f) throw std::invalid_argument("sfe-train: lr must be positive");
    if (beta < 0.0f) throw std::invalid_argument("sfe-train: beta must be >= 0");
    if (epochs < 0) throw std::invalid_argument("sfe-train: epochs must be >= 0");
    if (val_every < 0) throw std::invalid_argument("sfe-train: val_every must be >= 0");
}

std::string MetricLog::to_text() const {
    std::string out = "epoch\tsplit\tloss_ctc\tloss_mse\tloss_total\taccuracy\tcer\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%d\t%s\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", r.epoch,
                      r.split.c_str(), r.loss_ctc, r.loss_mse, r.loss_total, r.accuracy, r.cer);
        out += buf;
    }
    out += "# skipped_samples\t" + std::to_string(skipped_samples) + "\n";
    return out;
}

void MetricLog::write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("metric log: cannot open " + path);
    f << to_text();
}

namespace {

// Validation pass shared by every trainer: recognizer accuracy through the
// (optional) preprocessor.
MetricRecord val_record(int epoch, const blackbox::Recognizer& ocr,
                        networks::PreprocessorNet* pre, const std::vector<data::Sample>& val) {
    auto rep = evalcli::evaluate(ocr, pre, val, "val", pre ? "current" : "none");
    MetricRecord r;
    r.epoch = epoch;
    r.split = "val";
    r.accuracy = rep.word_accuracy;
    r.cer = rep.cer;
    return r;
}

bool want_val(int epoch, int epochs, int val_every) {
    if (epoch == epochs) return true;
    return val_every > 0 && epoch % val_every == 0;
}

void emit_progress(bool enabled, const MetricRecord& r) {
    if (!enabled) return;
    std::fprintf(stderr, "%d\t%s\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", r.epoch, r.split.c_str(),
                 r.loss_ctc, r.loss_mse, r.loss_total, r.accuracy, r.cer);
    std::fflush(stderr);
}

// Tracks the best validation accuracy seen and can restore that snapshot,
// including batchnorm running statistics.
struct BestTracker {
    double best_acc = -1.0;
    diffkernel::Checkpoint snap;

    void consider(const networks::PreprocessorNet& pre, const MetricRecord& val) {
        if (val.accuracy <= best_acc) return;
        best_acc = val.accuracy;
        snap = diffkernel::snapshot_params(pre.state(), "");
    }
    void restore(networks::PreprocessorNet& pre) const {
        if (best_acc >= 0.0) diffkernel::restore_params(pre.state(), snap);
    }
};

Image add_noise_clamped(const Image& g, float sigma, std::mt19937_64& rng) {
    Image out = g;
    if (sigma > 0.0f) {
        std::normal_distribution<float> dist(0.0f, sigma);
        for (float& p : out.px) p += dist(rng);
    }
    clamp01(out);
    return out;
}

}  // namespace

MetricLog pretrain_approximator(const std::vector<data::Sample>& train,
                                const std::vector<data::Sample>* val,
                                networks::ApproximatorNet& net, int epochs, float lr,
                                std::uint64_t seed) {
    if (epochs < 0) throw std::invalid_argument("pretrain-approx: epochs must be >= 0");
    if (lr <= 0.0f) throw std::invalid_argument("pretrain-approx: lr must be positive");
    MetricLog log;
    diffkernel::Adam<float> opt(net.params(), lr);
    const auto& vocab = net.vocab();
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        auto order = data::shuffled_indices(train.size(), splitmix64(seed + epoch));
        double loss_sum = 0.0;
        int counted = 0;
        for (std::size_t idx : order) {
            const auto& s = train[idx];
            auto target = vocab.encode_utf8(s.gt_text);
            Tape<float> tape;
            auto lp = net.forward(tape, networks::image_to_var(s.image), true);
            Var<float> loss;
            try {
                loss = losses::ctc_loss(tape, lp, target, vocab.blank_index());
            } catch (const losses::CtcInfeasible&) {
                ++log.skipped_samples;
                continue;
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            loss_sum += loss->value[0];
            ++counted;
        }
        MetricRecord r;
        r.epoch = epoch;
        r.split = "train";
        r.loss_ctc = counted ? loss_sum / counted : 0.0;
        r.loss_total = r.loss_ctc;
        log.records.push_back(r);
        if (val && want_val(epoch, epochs, 5)) {
            int correct = 0;
            double cer_sum = 0.0;
            for (const auto& s : *val) {
                auto pred = networks::decode_greedy(net.log_probs(s.image),
                                                    networks::ApproximatorNet::kInputWidth /
                                                        networks::ApproximatorNet::kWidthDownsample,
                                                    vocab);
                if (pred == s.gt_text) ++correct;
                cer_sum += losses::cer_utf8(pred, s.gt_text);
            }
            MetricRecord v;
            v.epoch = epoch;
            v.split = "val";
            v.accuracy = val->empty() ? 0.0 : 100.0 * correct / static_cast<double>(val->size());
            v.cer = val->empty() ? 0.0 : cer_sum / static_cast<double>(val->size());
            log.records.push_back(v);
        }
    }
    return log;
}

MetricLog pretrain_preprocessor_identity(const std::vector<data::Sample>& train,
                                         networks::PreprocessorNet& net, int epochs, float lr,
                                         std::uint64_t seed) {
    if (epochs < 0) throw std::invalid_argument("pretrain-identity: epochs must be >= 0");
    if (lr <= 0.0f) throw std::invalid_argument("pretrain-identity: lr must be positive");
    MetricLog log;
    diffkernel::Adam<float> opt(net.params(), lr);
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        auto order = data::shuffled_indices(train.size(), splitmix64(seed + epoch));
        double loss_sum = 0.0;
        for (std::size_t idx : order) {
            const auto& s = train[idx];
            Tape<float> tape;
            auto x = networks::image_to_var(s.image);
            auto g = net.forward(tape, x, true);
            auto loss = diffkernel::mean_sq_diff(tape, g, x);
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            loss_sum += loss->value[0];
        }
        MetricRecord r;
        r.epoch = epoch;
        r.split = "train";
        r.loss_mse = train.empty() ? 0.0 : loss_sum / static_cast<double>(train.size());
        r.loss_total = r.loss_mse;
        log.records.push_back(r);
    }
    return log;
}

std::vector<data::Sample> relabel_with_recognizer(std::vector<data::Sample> samples,
                                                  const blackbox::Recognizer& ocr) {
    for (auto& s : samples) {
        try {
            s.gt_text = ocr.recognize(s.image);
        } catch (const blackbox::RecognitionError&) {
            s.gt_text.clear();
        }
    }
    return samples;
}

MetricLog train_nn_approx(const std::vector<data::Sample>& train,
                          const std::vector<data::Sample>* val, const NNTrainConfig& cfg,
                          const blackbox::Recognizer& ocr, networks::PreprocessorNet& pre,
                          networks::ApproximatorNet& approx) {
    cfg.validate();
    MetricLog log;
    diffkernel::Adam<float> opt_pre(pre.params(), cfg.lr_pre);
    diffkernel::Adam<float> opt_apx(approx.params(), cfg.lr_approx);
    const auto& vocab = approx.vocab();
    auto rng = make_rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_sigma(0, cfg.sigma_set.size() - 1);
    BestTracker best;

    // Replay buffer of past (preprocessed image, recognizer label) pairs. Mixing
    // replayed terms into every surrogate step keeps the surrogate accurate on a
    // wider neighbourhood than the current preprocessor outputs, which stops the
    // preprocessor from drifting into regions the surrogate has forgotten about
    // (the same failure DDPG-style systems counter with experience replay). The
    // labels are cached, so replay adds no recognizer calls.
    struct ReplayItem {
        Image img;
        std::vector<int> target;
    };
    std::vector<ReplayItem> replay;
    std::size_t replay_next = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto order = data::shuffled_indices(train.size(), splitmix64(cfg.seed + epoch));
        double apx_loss_sum = 0.0, pre_ctc_sum = 0.0, pre_mse_sum = 0.0;
        int apx_steps = 0, pre_steps = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const float inv_batch = 1.0f / static_cast<float>(end - begin);

            // Surrogate phase: match the recognizer on jittered copies of the
            // current preprocessor outputs, one accumulated step per batch.
            opt_apx.zero_grad();
            int apx_terms = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& s = train[order[i]];
                Tape<float> tape_g;
                Image g = networks::var_to_image(
                    pre.forward(tape_g, networks::image_to_var(s.image), true));
                Tape<float> tape_apx;
                std::vector<Var<float>> terms;
                for (int sidx = 0; sidx < cfg.jitter_samples; ++sidx) {
                    float sigma = cfg.sigma_set[pick_sigma(rng)];
                    Image xs = add_noise_clamped(g, sigma, rng);
                    std::string text;
                    try {
                        text = ocr.recognize(xs);
                    } catch (const blackbox::RecognitionError&) {
                        ++log.skipped_samples;
                        continue;
                    }
                    auto target = vocab.encode_utf8(text);
                    auto lp = approx.forward(tape_apx, networks::image_to_var(xs), true);
                    try {
                        terms.push_back(losses::ctc_loss(tape_apx, lp, target, vocab.blank_index()));
                    } catch (const losses::CtcInfeasible&) {
                        ++log.skipped_samples;
                    }
                    if (cfg.replay_samples > 0) {
                        if (replay.size() < static_cast<std::size_t>(cfg.replay_capacity)) {
                            replay.push_back({xs, target});
                        } else {
                            replay[replay_next] = {xs, std::move(target)};
                            replay_next = (replay_next + 1) % replay.size();
                        }
                    }
                }
                if (cfg.replay_samples > 0 && !replay.empty()) {
                    std::uniform_int_distribution<std::size_t> pick_replay(0, replay.size() - 1);
                    for (int ridx = 0; ridx < cfg.replay_samples; ++ridx) {
                        const ReplayItem& item = replay[pick_replay(rng)];
                        auto lp = approx.forward(tape_apx, networks::image_to_var(item.img), true);
                        try {
                            terms.push_back(
                                losses::ctc_loss(tape_apx, lp, item.target, vocab.blank_index()));
                        } catch (const losses::CtcInfeasible&) {
                        }
                    }
                }
                if (!terms.empty()) {
                    auto loss = diffkernel::scale(tape_apx, diffkernel::sum_scalars(tape_apx, terms),
                                                  inv_batch);
                    tape_apx.backward(loss);
                    apx_loss_sum += loss->value[0] * (end - begin) / terms.size();
                    ++apx_terms;
                }
            }
            if (apx_terms > 0) {
                opt_apx.step();
                apx_steps += apx_terms;
            }

            // Preprocessor phase through the frozen, freshly updated surrogate:
            // one accumulated step per batch.
            opt_pre.zero_grad();
            int pre_terms = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& s = train[order[i]];
                Tape<float> tape_pre;
                auto g_var = pre.forward(tape_pre, networks::image_to_var(s.image), true);
                auto gt_target = vocab.encode_utf8(s.gt_text);
                try {
                    auto lp = approx.forward(tape_pre, g_var, true);
                    auto ctc = losses::ctc_loss(tape_pre, lp, gt_target, vocab.blank_index());
                    auto loss = ctc;
                    Var<float> white;
                    if (cfg.beta > 0.0f) {
                        white = losses::mse_to_white(tape_pre, g_var);
                        loss = diffkernel::add(tape_pre, ctc,
                                               diffkernel::scale(tape_pre, white, cfg.beta));
                    }
                    opt_apx.zero_grad();  // drop surrogate grads; it stays frozen here
                    tape_pre.backward(diffkernel::scale(tape_pre, loss, inv_batch));
                    pre_ctc_sum += ctc->value[0];
                    if (white) pre_mse_sum += white->value[0];
                    ++pre_terms;
                } catch (const losses::CtcInfeasible&) {
                    ++log.skipped_samples;
                }
            }
            if (pre_terms > 0) {
                opt_pre.step();
                pre_steps += pre_terms;
            }
        }
        MetricRecord r;
        r.epoch = epoch;
        r.split = "train";
        r.loss_ctc = pre_steps ? pre_ctc_sum / pre_steps : 0.0;
        r.loss_mse = pre_steps ? pre_mse_sum / pre_steps : 0.0;
        r.loss_total = apx_steps ? apx_loss_sum / apx_steps : 0.0;  // surrogate CTC vs recognizer
        log.records.push_back(r);
        emit_progress(cfg.progress, r);
        if (val && want_val(epoch, cfg.epochs, cfg.val_every)) {
            log.records.push_back(val_record(epoch, ocr, &pre, *val));
            emit_progress(cfg.progress, log.records.back());
            if (cfg.keep_best) best.consider(pre, log.records.back());
        }
    }
    if (cfg.keep_best) best.restore(pre);
    return log;
}

GradientEstimate sfe_gradient(const Image& g, const std::string& gt_text, float sigma, int n,
                              const blackbox::Recognizer& ocr, std::mt19937_64& rng,
                              int* dropped_pairs) {
    if (n < 1) throw std::invalid_argument("sfe_gradient: n must be >= 1");
    if (sigma <= 0.0f) throw std::invalid_argument("sfe_gradient: sigma must be positive");
    GradientEstimate est;
    est.grad = Image(g.width, g.height, 0.0f);
    if (dropped_pairs) *dropped_pairs = 0;
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> eps(g.px.size());  // unit noise; the perturbation is sigma * eps
    Image plus = g, minus = g;
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < eps.size(); ++k) {
            eps[k] = dist(rng);
            plus.px[k] = g.px[k] + sigma * eps[k];
            minus.px[k] = g.px[k] - sigma * eps[k];
        }
        clamp01(plus);
        clamp01(minus);
        float lp, lm;
        try {
            lp = static_cast<float>(losses::levenshtein_utf8(ocr.recognize(plus), gt_text));
            lm = static_cast<float>(losses::levenshtein_utf8(ocr.recognize(minus), gt_text));
        } catch (const blackbox::RecognitionError&) {
            if (dropped_pairs) ++*dropped_pairs;
            continue;
        }
        const float d = lp - lm;
        if (d != 0.0f)
            for (std::size_t k = 0; k < eps.size(); ++k) est.grad.px[k] += d * eps[k];
        ++est.pairs_used;
    }
    if (est.pairs_used > 0) {
        const float norm = 1.0f / (2.0f * static_cast<float>(est.pairs_used) * sigma);
        for (float& v : est.grad.px) v *= norm;
    }
    return est;
}

std::vector<double> sfe_gradient_mirrored(
    const std::vector<double>& x, const std::function<double(const std::vector<double>&)>& f,
    double sigma, int n, std::mt19937_64& rng) {
    if (n < 1 || sigma <= 0.0) throw std::invalid_argument("sfe mirrored: bad n or sigma");
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> grad(x.size(), 0.0), eps(x.size()), plus(x.size()), minus(x.size());
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            eps[k] = dist(rng);
            plus[k] = x[k] + sigma * eps[k];
            minus[k] = x[k] - sigma * eps[k];
        }
        const double d = f(plus) - f(minus);
        for (std::size_t k = 0; k < x.size(); ++k) grad[k] += d * eps[k];
    }
    const double norm = 1.0 / (2.0 * n * sigma);
    for (double& v : grad) v *= norm;
    return grad;
}

std::vector<double> sfe_gradient_unmirrored(
    const std::vector<double>& x, const std::function<double(const std::vector<double>&)>& f,
    double sigma, int n, std::mt19937_64& rng) {
    if (n < 1 || sigma <= 0.0) throw std::invalid_argument("sfe unmirrored: bad n or sigma");
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> grad(x.size(), 0.0), eps(x.size()), pert(x.size());
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            eps[k] = dist(rng);
            pert[k] = x[k] + sigma * eps[k];
        }
        const double v = f(pert);
        for (std::size_t k = 0; k < x.size(); ++k) grad[k] += v * eps[k];
    }
    const double norm = 1.0 / (n * sigma);
    for (double& v : grad) v *= norm;
    return grad;
}

MetricLog train_sfe(const std::vector<data::Sample>& train, const std::vector<data::Sample>* val,
                    const SFETrainConfig& cfg, const blackbox::Recognizer& ocr,
                    networks::PreprocessorNet& pre) {
    cfg.validate();
    MetricLog log;
    diffkernel::Adam<float> opt(pre.params(), cfg.lr);
    auto rng = make_rng(cfg.seed);
    BestTracker best;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto order = data::shuffled_indices(train.size(), splitmix64(cfg.seed + epoch));
        double dist_sum = 0.0;
        int counted = 0, dead = 0;
        for (std::size_t idx : order) {
            const auto& s = train[idx];
            Tape<float> tape;
            auto g_var = pre.forward(tape, networks::image_to_var(s.image), true);
            Image g = networks::var_to_image(g_var);
            int dropped = 0;
            auto est = sfe_gradient(g, s.gt_text, cfg.sigma, cfg.n, ocr, rng, &dropped);
            log.skipped_samples += dropped;
            if (est.pairs_used == 0) {
                ++dead;
                continue;
            }
            std::vector<float> seed_grad(est.grad.px);
            if (cfg.beta > 0.0f) {
                // d/dg of beta * mean((g - 1)^2)
                const float c = 2.0f * cfg.beta / static_cast<float>(g.px.size());
                for (std::size_t k = 0; k < seed_grad.size(); ++k)
                    seed_grad[k] += c * (g.px[k] - 1.0f);
            }
            opt.zero_grad();
            tape.backward_seeded(g_var, seed_grad);
            opt.step();
            try {
                dist_sum += losses::levenshtein_utf8(ocr.recognize(g), s.gt_text);
                ++counted;
            } catch (const blackbox::RecognitionError&) {
                ++log.skipped_samples;
            }
        }
        MetricRecord r;
        r.epoch = epoch;
        r.split = "train";
        r.loss_total = counted ? dist_sum / counted : 0.0;  // mean edit distance at g
        log.records.push_back(r);
        emit_progress(cfg.progress, r);
        (void)dead;
        if (val && want_val(epoch, cfg.epochs, cfg.val_every)) {
            log.records.push_back(val_record(epoch, ocr, &pre, *val));
            emit_progress(cfg.progress, log.records.back());
            if (cfg.keep_best) best.consider(pre, log.records.back());
        }
    }
    if (cfg.keep_best) best.restore(pre);
    return log;
}

}  // namespace ocrprep::trainers
