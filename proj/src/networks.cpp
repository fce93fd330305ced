#include "ocrprep/networks.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ocrprep/ops.hpp"
#include "ocrprep/rng.hpp"

namespace ocrprep::networks {

using namespace ocrprep::diffkernel;

namespace {

void he_uniform(Var<float>& w, int fan_in, std::mt19937_64& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-limit, limit);
    for (auto& v : w->value) v = dist(rng);
}

// Orthogonal init via Gram-Schmidt on a random Gaussian matrix.
void orthogonal(Var<float>& w, int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<std::vector<double>> q(rows, std::vector<double>(cols));
    for (auto& r : q)
        for (auto& v : r) v = dist(rng);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0;
            for (int k = 0; k < cols; ++k) dot += q[i][k] * q[j][k];
            for (int k = 0; k < cols; ++k) q[i][k] -= dot * q[j][k];
        }
        double norm = 0;
        for (int k = 0; k < cols; ++k) norm += q[i][k] * q[i][k];
        norm = std::sqrt(norm);
        if (norm < 1e-12) norm = 1.0;  // rows > cols would need a different scheme
        for (int k = 0; k < cols; ++k) q[i][k] /= norm;
    }
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) w->value[static_cast<std::size_t>(i) * cols + k] =
            static_cast<float>(q[i][k]);
}

ConvBlock make_conv_block(const std::string& name, int in_ch, int out_ch, int k,
                          std::mt19937_64& rng) {
    ConvBlock blk;
    blk.w = make_leaf<float>({out_ch, in_ch, k, k}, true, name + ".w");
    he_uniform(blk.w, in_ch * k * k, rng);
    blk.b = make_leaf<float>({out_ch}, true, name + ".b");
    blk.gamma = make_leaf<float>({out_ch}, true, name + ".gamma");
    for (auto& v : blk.gamma->value) v = 1.0f;
    blk.beta = make_leaf<float>({out_ch}, true, name + ".beta");
    blk.running_mean = make_leaf<float>({out_ch}, false, name + ".running_mean");
    blk.running_var = make_leaf<float>({out_ch}, false, name + ".running_var");
    for (auto& v : blk.running_var->value) v = 1.0f;
    return blk;
}

Var<float> make_dense_param(const std::string& name, int rows, int cols, std::mt19937_64& rng) {
    auto w = make_leaf<float>({rows, cols}, true, name);
    he_uniform(w, cols, rng);
    return w;
}

}  // namespace

Var<float> ConvBlock::forward(Tape<float>& tape, Var<float> x, int sh, int sw, int pad,
                              bool training, bool activate) const {
    auto y = conv2d(tape, std::move(x), w, b, sh, sw, pad, pad);
    y = training ? batchnorm_train(tape, y, gamma, beta, running_mean->value, running_var->value)
                 : batchnorm_infer(tape, y, gamma, beta, running_mean->value, running_var->value);
    return activate ? relu(tape, y) : y;
}

// ------------------------------------------------------------- preprocessor

PreprocessorNet::PreprocessorNet(std::uint64_t init_seed) {
    auto rng = make_stream(init_seed, 0x70726570);
    d1_ = make_conv_block("pre.d1", 1, 16, 3, rng);
    e1_ = make_conv_block("pre.e1", 16, 16, 3, rng);
    d2_ = make_conv_block("pre.d2", 16, 32, 3, rng);
    e2_ = make_conv_block("pre.e2", 32, 32, 3, rng);
    d3_ = make_conv_block("pre.d3", 32, 64, 3, rng);
    b_ = make_conv_block("pre.b", 64, 64, 3, rng);
    u3_ = make_conv_block("pre.u3", 96, 32, 3, rng);
    u2_ = make_conv_block("pre.u2", 48, 16, 3, rng);
    u1_ = make_conv_block("pre.u1", 17, 16, 3, rng);
    out_w_ = make_leaf<float>({1, 16, 1, 1}, true, "pre.out.w");
    he_uniform(out_w_, 16, rng);
    out_b_ = make_leaf<float>({1}, true, "pre.out.b");
}

Var<float> PreprocessorNet::forward(Tape<float>& tape, Var<float> image, bool training) const {
    if (image->shape.size() != 3 || image->shape[0] != 1 ||
        image->shape[1] % kDownsampleFactor != 0 || image->shape[2] % kDownsampleFactor != 0)
        throw std::invalid_argument("PreprocessorNet: input must be [1,H,W] with H,W multiples of " +
                                    std::to_string(kDownsampleFactor) + ", got " +
                                    shape_str(image->shape));
    auto x1 = d1_.forward(tape, image, 2, 2, 1, training);   // 16 @ H/2
    x1 = e1_.forward(tape, x1, 1, 1, 1, training);
    auto x2 = d2_.forward(tape, x1, 2, 2, 1, training);      // 32 @ H/4
    x2 = e2_.forward(tape, x2, 1, 1, 1, training);
    auto x3 = d3_.forward(tape, x2, 2, 2, 1, training);      // 64 @ H/8
    x3 = b_.forward(tape, x3, 1, 1, 1, training);
    auto y3 = u3_.forward(tape, concat_channels(tape, upsample_nearest2(tape, x3), x2), 1, 1, 1,
                          training);                          // 32 @ H/4
    auto y2 = u2_.forward(tape, concat_channels(tape, upsample_nearest2(tape, y3), x1), 1, 1, 1,
                          training);                          // 16 @ H/2
    auto y1 = u1_.forward(tape, concat_channels(tape, upsample_nearest2(tape, y2), image), 1, 1, 1,
                          training);                          // 16 @ H
    auto out = conv2d(tape, y1, out_w_, out_b_, 1, 1, 0, 0);
    return sigmoid(tape, out);
}

Image PreprocessorNet::preprocess(const Image& image) const {
    Tape<float> tape;
    auto in = image_to_var(image);
    auto out = forward(tape, in, /*training=*/false);
    return var_to_image(out);
}

std::vector<Var<float>> PreprocessorNet::params() const {
    std::vector<Var<float>> ps;
    for (const ConvBlock* blk : {&d1_, &e1_, &d2_, &e2_, &d3_, &b_, &u3_, &u2_, &u1_})
        for (const auto& p : {blk->w, blk->b, blk->gamma, blk->beta}) ps.push_back(p);
    ps.push_back(out_w_);
    ps.push_back(out_b_);
    return ps;
}

std::vector<Var<float>> PreprocessorNet::state() const {
    auto ps = params();
    for (const ConvBlock* blk : {&d1_, &e1_, &d2_, &e2_, &d3_, &b_, &u3_, &u2_, &u1_}) {
        ps.push_back(blk->running_mean);
        ps.push_back(blk->running_var);
    }
    return ps;
}

std::string PreprocessorNet::config_block() const {
    return "model = preprocessor\nencoder_channels = 16,32,64\ndownsample_factor = 8\n";
}

void PreprocessorNet::save(const std::string& path) const {
    save_checkpoint(path, snapshot_params(state(), config_block()));
}

void PreprocessorNet::load(const std::string& path) {
    restore_params(state(), load_checkpoint(path));
}

// ------------------------------------------------------------- approximator

ApproximatorNet::ApproximatorNet(losses::CharVocab vocab, std::uint64_t init_seed, int hidden)
    : vocab_(std::move(vocab)), hidden_(hidden) {
    auto rng = make_stream(init_seed, 0x61707072);
    c1_ = make_conv_block("apx.c1", 1, 16, 3, rng);
    c2_ = make_conv_block("apx.c2", 16, 32, 3, rng);
    c3_ = make_conv_block("apx.c3", 32, 48, 3, rng);
    c4_ = make_conv_block("apx.c4", 48, 64, 3, rng);
    const int feat = 64;
    wz_ = make_dense_param("apx.gru.wz", hidden_, feat, rng);
    wr_ = make_dense_param("apx.gru.wr", hidden_, feat, rng);
    wh_ = make_dense_param("apx.gru.wh", hidden_, feat, rng);
    uz_ = make_leaf<float>({hidden_, hidden_}, true, "apx.gru.uz");
    ur_ = make_leaf<float>({hidden_, hidden_}, true, "apx.gru.ur");
    uh_ = make_leaf<float>({hidden_, hidden_}, true, "apx.gru.uh");
    orthogonal(uz_, hidden_, hidden_, rng);
    orthogonal(ur_, hidden_, hidden_, rng);
    orthogonal(uh_, hidden_, hidden_, rng);
    bz_ = make_leaf<float>({hidden_}, true, "apx.gru.bz");
    br_ = make_leaf<float>({hidden_}, true, "apx.gru.br");
    bh_ = make_leaf<float>({hidden_}, true, "apx.gru.bh");
    head_w_ = make_dense_param("apx.head.w", hidden_, vocab_.num_classes(), rng);
    head_b_ = make_leaf<float>({vocab_.num_classes()}, true, "apx.head.b");
}

Var<float> ApproximatorNet::forward(Tape<float>& tape, Var<float> image, bool training) const {
    if (image->shape != Shape{1, kInputHeight, kInputWidth})
        throw std::invalid_argument("ApproximatorNet: input must be [1," +
                                    std::to_string(kInputHeight) + "," +
                                    std::to_string(kInputWidth) + "], got " +
                                    shape_str(image->shape));
    auto x = c1_.forward(tape, image, 2, 2, 1, training);   // [16,16,64]
    x = c2_.forward(tape, x, 2, 2, 1, training);            // [32, 8,32]
    x = c3_.forward(tape, x, 2, 1, 1, training);            // [48, 4,32]
    x = c4_.forward(tape, x, 2, 1, 1, training);            // [64, 2,32]
    auto cols = transpose2(tape, collapse_height_mean(tape, x));  // [T=32, 64]
    const int T = cols->shape[0];

    auto h = make_leaf<float>({hidden_});
    std::vector<Var<float>> states;
    states.reserve(T);
    for (int t = 0; t < T; ++t) {
        auto xt = row(tape, cols, t);
        auto z = sigmoid(tape, add(tape, dense(tape, wz_, xt, bz_), dense(tape, uz_, h, Var<float>{})));
        auto r = sigmoid(tape, add(tape, dense(tape, wr_, xt, br_), dense(tape, ur_, h, Var<float>{})));
        auto hr = mul(tape, r, h);
        auto cand = tanh_op(tape, add(tape, dense(tape, wh_, xt, bh_), dense(tape, uh_, hr, Var<float>{})));
        h = add(tape, mul(tape, one_minus(tape, z), h), mul(tape, z, cand));
        states.push_back(h);
    }
    auto logits = add_rowvec(tape, matmul(tape, stack_rows(tape, states), head_w_), head_b_);
    return log_softmax_rows(tape, logits);
}

std::vector<float> ApproximatorNet::log_probs(const Image& image) const {
    Tape<float> tape;
    auto in = image_to_var(image);
    return forward(tape, in, /*training=*/false)->value;
}

std::vector<Var<float>> ApproximatorNet::params() const {
    std::vector<Var<float>> ps;
    for (const ConvBlock* blk : {&c1_, &c2_, &c3_, &c4_})
        for (const auto& p : {blk->w, blk->b, blk->gamma, blk->beta}) ps.push_back(p);
    for (const auto& p : {wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_, head_w_, head_b_})
        ps.push_back(p);
    return ps;
}

std::vector<Var<float>> ApproximatorNet::state() const {
    auto ps = params();
    for (const ConvBlock* blk : {&c1_, &c2_, &c3_, &c4_}) {
        ps.push_back(blk->running_mean);
        ps.push_back(blk->running_var);
    }
    return ps;
}

std::string ApproximatorNet::config_block() const {
    std::ostringstream os;
    os << "model = approximator\nconv_channels = 16,32,48,64\nhidden = " << hidden_
       << "\nwidth_downsample = " << kWidthDownsample << "\nvocab = " << vocab_.chars_utf8()
       << "\n";
    return os.str();
}

void ApproximatorNet::save(const std::string& path) const {
    save_checkpoint(path, snapshot_params(state(), config_block()));
}

void ApproximatorNet::load(const std::string& path) {
    restore_params(state(), load_checkpoint(path));
}

// ------------------------------------------------------------------ helpers

std::string decode_greedy(const std::vector<float>& log_probs, int T,
                          const losses::CharVocab& vocab) {
    const int K = vocab.num_classes();
    if (static_cast<int>(log_probs.size()) != T * K)
        throw std::invalid_argument("decode_greedy: size mismatch");
    std::u32string out;
    int prev = vocab.blank_index();
    for (int t = 0; t < T; ++t) {
        const float* row = &log_probs[static_cast<std::size_t>(t) * K];
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (row[k] > row[best]) best = k;
        if (best != vocab.blank_index() && best != prev) out.push_back(vocab.char_at(best));
        prev = best;
    }
    return losses::utf8_encode(out);
}

Var<float> image_to_var(const Image& img, bool requires_grad) {
    auto v = make_leaf<float>({1, img.height, img.width}, requires_grad);
    v->value = img.px;
    return v;
}

Image var_to_image(const Var<float>& v) {
    if (v->shape.size() != 3 || v->shape[0] != 1)
        throw std::invalid_argument("var_to_image: expected [1,H,W], got " + shape_str(v->shape));
    Image img(v->shape[2], v->shape[1]);
    img.px = v->value;
    return img;
}

}  // namespace ocrprep::networks
