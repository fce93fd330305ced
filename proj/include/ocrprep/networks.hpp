#pragma once

// The two trainable models at desk scale: an encoder-decoder image-to-image
// preprocessor (sigmoid output in [0,1]) and a conv-recurrent sequence
// approximator emitting per-timestep log-probabilities over the vocabulary.

#include <cstdint>
#include <string>
#include <vector>

#include "ocrprep/adam.hpp"
#include "ocrprep/autodiff.hpp"
#include "ocrprep/checkpoint.hpp"
#include "ocrprep/image.hpp"
#include "ocrprep/vocab.hpp"

namespace ocrprep::networks {

using diffkernel::Tape;
using diffkernel::Var;

// conv + batchnorm + ReLU block parameters
struct ConvBlock {
    Var<float> w, b, gamma, beta;
    Var<float> running_mean, running_var;  // non-trainable state

    Var<float> forward(Tape<float>& tape, Var<float> x, int sh, int sw, int pad, bool training,
                       bool activate = true) const;
};

class PreprocessorNet {
public:
    // Encoder channels 16/32/64 over three 2x downsampling stages (factor 8),
    // skip concatenations on the way up, 1-channel sigmoid head.
    explicit PreprocessorNet(std::uint64_t init_seed);

    // Forward on the tape; input [1,H,W] with H,W multiples of 8.
    Var<float> forward(Tape<float>& tape, Var<float> image, bool training) const;

    // Convenience inference path: Image in, Image out (running-stat batchnorm).
    Image preprocess(const Image& image) const;

    std::vector<Var<float>> params() const;
    std::vector<Var<float>> state() const;  // params + running statistics
    std::string config_block() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    static constexpr int kDownsampleFactor = 8;

private:
    ConvBlock d1_, e1_, d2_, e2_, d3_, b_, u3_, u2_, u1_;
    Var<float> out_w_, out_b_;
};

class ApproximatorNet {
public:
    // Four conv layers: two 2x width reductions, full height collapse, then a
    // single GRU layer and a per-timestep linear head. T = width / 4.
    ApproximatorNet(losses::CharVocab vocab, std::uint64_t init_seed, int hidden = 64);

    // image [1,32,128] -> [T=32, num_classes] log-probabilities
    Var<float> forward(Tape<float>& tape, Var<float> image, bool training) const;

    // Inference helper returning the raw log-probability matrix values.
    std::vector<float> log_probs(const Image& image) const;

    const losses::CharVocab& vocab() const { return vocab_; }
    int hidden() const { return hidden_; }
    static constexpr int kInputWidth = 128;
    static constexpr int kInputHeight = 32;
    static constexpr int kWidthDownsample = 4;

    std::vector<Var<float>> params() const;
    std::vector<Var<float>> state() const;
    std::string config_block() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    losses::CharVocab vocab_;
    int hidden_;
    ConvBlock c1_, c2_, c3_, c4_;
    Var<float> wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;  // GRU cell
    Var<float> head_w_, head_b_;
};

// Best-path CTC collapse: argmax per timestep, merge repeats, drop blanks.
std::string decode_greedy(const std::vector<float>& log_probs, int T,
                          const losses::CharVocab& vocab);

// Image <-> autodiff leaf plumbing.
Var<float> image_to_var(const Image& img, bool requires_grad = false);
Image var_to_image(const Var<float>& v);

}  // namespace ocrprep::networks
