#pragma once

// Training regimes: surrogate-based alternating optimization, mirrored-sampling
// score-function estimation, and the pretraining protocols feeding them.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ocrprep/blackbox.hpp"
#include "ocrprep/datagen.hpp"
#include "ocrprep/networks.hpp"

namespace ocrprep::trainers {

struct NNTrainConfig {
    int jitter_samples = 2;                                     // S
    int batch_size = 16;   // samples per alternating update (gradient accumulation)
    int replay_samples = 2;  // per-sample extra surrogate terms drawn from the replay buffer
    int replay_capacity = 4096;  // (image, recognizer-label) pairs kept for surrogate replay
    std::vector<float> sigma_set = {0.0f, 0.01f, 0.02f, 0.03f, 0.04f, 0.05f};
    float lr_pre = 5e-5f;
    float lr_approx = 1e-4f;
    float beta = 1.0f;
    int epochs = 50;
    std::uint64_t seed = 0;
    int val_every = 5;  // epochs between validation passes (0 = only at the end)
    bool keep_best = true;  // restore the best-validation-accuracy preprocessor at the end
    bool progress = false;  // stream metric records to stderr as they are produced

    void validate() const;
};

struct SFETrainConfig {
    int n = 5;            // perturbations before mirroring
    float sigma = 0.05f;
    float lr = 5e-5f;
    float beta = 1.0f;
    int epochs = 10;
    std::uint64_t seed = 0;
    int val_every = 2;
    bool keep_best = true;  // restore the best-validation-accuracy preprocessor at the end
    bool progress = false;  // stream metric records to stderr as they are produced

    void validate() const;
};

struct MetricRecord {
    int epoch = 0;
    std::string split;
    double loss_ctc = 0.0;
    double loss_mse = 0.0;
    double loss_total = 0.0;
    double accuracy = 0.0;
    double cer = 0.0;
};

struct MetricLog {
    std::vector<MetricRecord> records;
    int skipped_samples = 0;  // recognition errors / infeasible CTC targets

    std::string to_text() const;  // newline-delimited tab-separated records
    void write(const std::string& path) const;
};

struct GradientEstimate {
    Image grad;          // shaped like g
    int pairs_used = 0;  // surviving mirrored pairs (normalizer)
};

// CTC pretraining on raw dataset images against ground truth.
MetricLog pretrain_approximator(const std::vector<data::Sample>& train,
                                const std::vector<data::Sample>* val,
                                networks::ApproximatorNet& net, int epochs, float lr,
                                std::uint64_t seed);

// Preprocessor trained to reproduce its input (mirrored gradients would cancel
// at the start otherwise).
MetricLog pretrain_preprocessor_identity(const std::vector<data::Sample>& train,
                                         networks::PreprocessorNet& net, int epochs, float lr,
                                         std::uint64_t seed);

// Alternating optimization: surrogate chases the recognizer on jittered
// preprocessor outputs, preprocessor chases ground truth through the frozen
// surrogate plus the white-image MSE term.
// Replaces each sample's ground truth with the recognizer's output on its
// image (empty text when recognition fails). Pretraining the approximator on
// relabeled data aligns it with the engine instead of the true labels, which
// gives the alternating scheme an engine-shaped gradient from the first step.
std::vector<data::Sample> relabel_with_recognizer(std::vector<data::Sample> samples,
                                                  const blackbox::Recognizer& ocr);

MetricLog train_nn_approx(const std::vector<data::Sample>& train,
                          const std::vector<data::Sample>* val, const NNTrainConfig& cfg,
                          const blackbox::Recognizer& ocr, networks::PreprocessorNet& pre,
                          networks::ApproximatorNet& approx);

// (1/(2n sigma)) sum L_i eps_i with mirrored noise; a failed recognition drops
// its pair and shrinks the normalizer.
GradientEstimate sfe_gradient(const Image& g, const std::string& gt_text, float sigma, int n,
                              const blackbox::Recognizer& ocr, std::mt19937_64& rng,
                              int* dropped_pairs = nullptr);

// Generic estimators over a scalar function, used to validate the math on
// analytic testbeds. `n` counts function evaluations for the unmirrored form
// and pairs (two evaluations each) for the mirrored form.
std::vector<double> sfe_gradient_mirrored(const std::vector<double>& x,
                                          const std::function<double(const std::vector<double>&)>& f,
                                          double sigma, int n, std::mt19937_64& rng);
std::vector<double> sfe_gradient_unmirrored(const std::vector<double>& x,
                                            const std::function<double(const std::vector<double>&)>& f,
                                            double sigma, int n, std::mt19937_64& rng);

MetricLog train_sfe(const std::vector<data::Sample>& train, const std::vector<data::Sample>* val,
                    const SFETrainConfig& cfg, const blackbox::Recognizer& ocr,
                    networks::PreprocessorNet& pre);

}  // namespace ocrprep::trainers
