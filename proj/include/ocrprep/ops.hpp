#pragma once

// Primitive forward ops with hand-written backwards. Every op validates input
// shapes and throws std::invalid_argument naming the primitive and both shapes.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ocrprep/autodiff.hpp"

namespace ocrprep::diffkernel {

namespace detail {
inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}
template <class S>
std::string two_shapes(const char* op, const Var<S>& a, const Var<S>& b) {
    return std::string(op) + ": incompatible shapes " + shape_str(a->shape) + " and " +
           shape_str(b->shape);
}
}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class S>
Var<S> add(Tape<S>& tape, Var<S> a, Var<S> b) {
    detail::check(a->shape == b->shape, detail::two_shapes("add", a, b));
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] + b->value[i];
    out->backward_fn = [out, a, b] {
        a->ensure_grad();
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
            a->grad[i] += out->grad[i];
            b->grad[i] += out->grad[i];
        }
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> sub(Tape<S>& tape, Var<S> a, Var<S> b) {
    detail::check(a->shape == b->shape, detail::two_shapes("sub", a, b));
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] - b->value[i];
    out->backward_fn = [out, a, b] {
        a->ensure_grad();
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
            a->grad[i] += out->grad[i];
            b->grad[i] -= out->grad[i];
        }
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> mul(Tape<S>& tape, Var<S> a, Var<S> b) {
    detail::check(a->shape == b->shape, detail::two_shapes("mul", a, b));
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * b->value[i];
    out->backward_fn = [out, a, b] {
        a->ensure_grad();
        b->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
            a->grad[i] += out->grad[i] * b->value[i];
            b->grad[i] += out->grad[i] * a->value[i];
        }
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> scale(Tape<S>& tape, Var<S> a, S c) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * c;
    out->backward_fn = [out, a, c] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * c;
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> add_scalar(Tape<S>& tape, Var<S> a, S c) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] + c;
    out->backward_fn = [out, a] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
    };
    return tape.record(std::move(out));
}

// 1 - x, used by the GRU update gate.
template <class S>
Var<S> one_minus(Tape<S>& tape, Var<S> a) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = S(1) - a->value[i];
    out->backward_fn = [out, a] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] -= out->grad[i];
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> relu(Tape<S>& tape, Var<S> a) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i)
        out->value[i] = a->value[i] > S(0) ? a->value[i] : S(0);
    out->backward_fn = [out, a] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i)
            if (a->value[i] > S(0)) a->grad[i] += out->grad[i];
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> sigmoid(Tape<S>& tape, Var<S> a) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i)
        out->value[i] = S(1) / (S(1) + std::exp(-a->value[i]));
    out->backward_fn = [out, a] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
            S y = out->value[i];
            a->grad[i] += out->grad[i] * y * (S(1) - y);
        }
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> tanh_op(Tape<S>& tape, Var<S> a) {
    auto out = make_leaf<S>(a->shape);
    for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = std::tanh(a->value[i]);
    out->backward_fn = [out, a] {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
            S y = out->value[i];
            a->grad[i] += out->grad[i] * (S(1) - y * y);
        }
    };
    return tape.record(std::move(out));
}

// ------------------------------------------------------------------- linear

// W [m,k] @ x [k] + b [m] -> [m]; b may be null.
template <class S>
Var<S> dense(Tape<S>& tape, Var<S> W, Var<S> x, Var<S> b = nullptr) {
    detail::check(W->shape.size() == 2 && x->shape.size() == 1 && W->shape[1] == x->shape[0],
                  detail::two_shapes("dense", W, x));
    const int m = W->shape[0], k = W->shape[1];
    if (b) detail::check(b->shape == Shape{m}, detail::two_shapes("dense(bias)", W, b));
    auto out = make_leaf<S>({m});
    for (int i = 0; i < m; ++i) {
        S acc = b ? b->value[i] : S(0);
        const S* wrow = &W->value[static_cast<std::size_t>(i) * k];
        for (int j = 0; j < k; ++j) acc += wrow[j] * x->value[j];
        out->value[i] = acc;
    }
    out->backward_fn = [out, W, x, b, m, k] {
        W->ensure_grad();
        x->ensure_grad();
        if (b) b->ensure_grad();
        for (int i = 0; i < m; ++i) {
            const S g = out->grad[i];
            if (g == S(0)) continue;
            const S* wrow = &W->value[static_cast<std::size_t>(i) * k];
            S* wg = &W->grad[static_cast<std::size_t>(i) * k];
            for (int j = 0; j < k; ++j) {
                wg[j] += g * x->value[j];
                x->grad[j] += g * wrow[j];
            }
            if (b) b->grad[i] += g;
        }
    };
    return tape.record(std::move(out));
}

// A [m,k] @ B [k,n] -> [m,n]
template <class S>
Var<S> matmul(Tape<S>& tape, Var<S> A, Var<S> B) {
    detail::check(A->shape.size() == 2 && B->shape.size() == 2 && A->shape[1] == B->shape[0],
                  detail::two_shapes("matmul", A, B));
    const int m = A->shape[0], k = A->shape[1], n = B->shape[1];
    auto out = make_leaf<S>({m, n});
    for (int i = 0; i < m; ++i) {
        S* orow = &out->value[static_cast<std::size_t>(i) * n];
        const S* arow = &A->value[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
            const S av = arow[p];
            const S* brow = &B->value[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    out->backward_fn = [out, A, B, m, k, n] {
        A->ensure_grad();
        B->ensure_grad();
        for (int i = 0; i < m; ++i) {
            const S* grow = &out->grad[static_cast<std::size_t>(i) * n];
            const S* arow = &A->value[static_cast<std::size_t>(i) * k];
            S* agrow = &A->grad[static_cast<std::size_t>(i) * k];
            for (int p = 0; p < k; ++p) {
                const S* brow = &B->value[static_cast<std::size_t>(p) * n];
                S* bgrow = &B->grad[static_cast<std::size_t>(p) * n];
                S acc = S(0);
                const S av = arow[p];
                for (int j = 0; j < n; ++j) {
                    acc += grow[j] * brow[j];
                    bgrow[j] += grow[j] * av;
                }
                agrow[p] += acc;
            }
        }
    };
    return tape.record(std::move(out));
}

// X [T,K] + b [K] broadcast over rows.
template <class S>
Var<S> add_rowvec(Tape<S>& tape, Var<S> X, Var<S> b) {
    detail::check(X->shape.size() == 2 && b->shape.size() == 1 && X->shape[1] == b->shape[0],
                  detail::two_shapes("add_rowvec", X, b));
    const int T = X->shape[0], K = X->shape[1];
    auto out = make_leaf<S>(X->shape);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < K; ++j)
            out->value[static_cast<std::size_t>(t) * K + j] =
                X->value[static_cast<std::size_t>(t) * K + j] + b->value[j];
    out->backward_fn = [out, X, b, T, K] {
        X->ensure_grad();
        b->ensure_grad();
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < K; ++j) {
                const S g = out->grad[static_cast<std::size_t>(t) * K + j];
                X->grad[static_cast<std::size_t>(t) * K + j] += g;
                b->grad[j] += g;
            }
    };
    return tape.record(std::move(out));
}

// -------------------------------------------------------------- convolution

// x [C,H,W], w [F,C,KH,KW], b [F] (optional), symmetric zero padding.
template <class S>
Var<S> conv2d(Tape<S>& tape, Var<S> x, Var<S> w, Var<S> b, int sh, int sw, int ph, int pw) {
    detail::check(x->shape.size() == 3 && w->shape.size() == 4 && x->shape[0] == w->shape[1],
                  detail::two_shapes("conv2d", x, w));
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    const int F = w->shape[0], KH = w->shape[2], KW = w->shape[3];
    const int OH = (H + 2 * ph - KH) / sh + 1;
    const int OW = (W + 2 * pw - KW) / sw + 1;
    detail::check(OH > 0 && OW > 0, "conv2d: " + shape_str(x->shape) + " too small for kernel " +
                                        shape_str(w->shape));
    if (b) detail::check(b->shape == Shape{F}, detail::two_shapes("conv2d(bias)", w, b));
    auto out = make_leaf<S>({F, OH, OW});

    auto ow_range = [=](int kw, int& lo, int& hi) {
        // valid ow: 0 <= ow*sw - pw + kw < W
        lo = std::max(0, (pw - kw + sw - 1) / sw);
        hi = std::min(OW, (W - 1 + pw - kw) / sw + 1);
    };

    for (int f = 0; f < F; ++f) {
        S* oplane = &out->value[static_cast<std::size_t>(f) * OH * OW];
        if (b) std::fill(oplane, oplane + OH * OW, b->value[f]);
        for (int c = 0; c < C; ++c) {
            const S* xplane = &x->value[static_cast<std::size_t>(c) * H * W];
            const S* wk = &w->value[(static_cast<std::size_t>(f) * C + c) * KH * KW];
            for (int kh = 0; kh < KH; ++kh)
                for (int kw = 0; kw < KW; ++kw) {
                    const S wv = wk[kh * KW + kw];
                    if (wv == S(0)) continue;
                    int lo, hi;
                    ow_range(kw, lo, hi);
                    for (int oh = 0; oh < OH; ++oh) {
                        const int iy = oh * sh - ph + kh;
                        if (iy < 0 || iy >= H) continue;
                        S* orow = oplane + oh * OW;
                        const S* xrow = xplane + iy * W - pw + kw;
                        if (sw == 1)
                            for (int ow = lo; ow < hi; ++ow) orow[ow] += wv * xrow[ow];
                        else
                            for (int ow = lo; ow < hi; ++ow) orow[ow] += wv * xrow[ow * sw];
                    }
                }
        }
    }

    out->backward_fn = [out, x, w, b, C, H, W, F, KH, KW, OH, OW, sh, sw, ph, pw, ow_range] {
        x->ensure_grad();
        w->ensure_grad();
        if (b) b->ensure_grad();
        for (int f = 0; f < F; ++f) {
            const S* gplane = &out->grad[static_cast<std::size_t>(f) * OH * OW];
            if (b) {
                S acc = S(0);
                for (int i = 0; i < OH * OW; ++i) acc += gplane[i];
                b->grad[f] += acc;
            }
            for (int c = 0; c < C; ++c) {
                const S* xplane = &x->value[static_cast<std::size_t>(c) * H * W];
                S* xgplane = &x->grad[static_cast<std::size_t>(c) * H * W];
                const S* wk = &w->value[(static_cast<std::size_t>(f) * C + c) * KH * KW];
                S* wgk = &w->grad[(static_cast<std::size_t>(f) * C + c) * KH * KW];
                for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw) {
                        const S wv = wk[kh * KW + kw];
                        S wgacc = S(0);
                        int lo, hi;
                        ow_range(kw, lo, hi);
                        for (int oh = 0; oh < OH; ++oh) {
                            const int iy = oh * sh - ph + kh;
                            if (iy < 0 || iy >= H) continue;
                            const S* grow = gplane + oh * OW;
                            const S* xrow = xplane + iy * W - pw + kw;
                            S* xgrow = xgplane + iy * W - pw + kw;
                            if (sw == 1)
                                for (int ow = lo; ow < hi; ++ow) {
                                    wgacc += grow[ow] * xrow[ow];
                                    xgrow[ow] += grow[ow] * wv;
                                }
                            else
                                for (int ow = lo; ow < hi; ++ow) {
                                    wgacc += grow[ow] * xrow[ow * sw];
                                    xgrow[ow * sw] += grow[ow] * wv;
                                }
                        }
                        wgk[kh * KW + kw] += wgacc;
                    }
            }
        }
    };
    return tape.record(std::move(out));
}

// Nearest-neighbour 2x upsample, [C,H,W] -> [C,2H,2W].
template <class S>
Var<S> upsample_nearest2(Tape<S>& tape, Var<S> x) {
    detail::check(x->shape.size() == 3, "upsample_nearest2: need rank-3 input, got " +
                                            shape_str(x->shape));
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    auto out = make_leaf<S>({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y) {
            const S* xrow = &x->value[(static_cast<std::size_t>(c) * H + y / 2) * W];
            S* orow = &out->value[(static_cast<std::size_t>(c) * 2 * H + y) * 2 * W];
            for (int xw = 0; xw < 2 * W; ++xw) orow[xw] = xrow[xw / 2];
        }
    out->backward_fn = [out, x, C, H, W] {
        x->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y) {
                S* xgrow = &x->grad[(static_cast<std::size_t>(c) * H + y / 2) * W];
                const S* grow = &out->grad[(static_cast<std::size_t>(c) * 2 * H + y) * 2 * W];
                for (int xw = 0; xw < 2 * W; ++xw) xgrow[xw / 2] += grow[xw];
            }
    };
    return tape.record(std::move(out));
}

// Concatenate along the channel axis: [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W].
template <class S>
Var<S> concat_channels(Tape<S>& tape, Var<S> a, Var<S> b) {
    detail::check(a->shape.size() == 3 && b->shape.size() == 3 && a->shape[1] == b->shape[1] &&
                      a->shape[2] == b->shape[2],
                  detail::two_shapes("concat_channels", a, b));
    auto out = make_leaf<S>({a->shape[0] + b->shape[0], a->shape[1], a->shape[2]});
    std::copy(a->value.begin(), a->value.end(), out->value.begin());
    std::copy(b->value.begin(), b->value.end(), out->value.begin() + a->numel());
    out->backward_fn = [out, a, b] {
        a->ensure_grad();
        b->ensure_grad();
        for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
        for (std::size_t i = 0; i < b->numel(); ++i) b->grad[i] += out->grad[a->numel() + i];
    };
    return tape.record(std::move(out));
}

// ------------------------------------------------------------ normalization

// Per-channel batch normalization over the spatial extent of a [C,H,W] tensor.
// Training mode normalizes with batch statistics and updates the running
// buffers in place (momentum convention: run = (1-m)*run + m*batch).
template <class S>
Var<S> batchnorm_train(Tape<S>& tape, Var<S> x, Var<S> gamma, Var<S> beta,
                       std::vector<S>& running_mean, std::vector<S>& running_var,
                       S momentum = S(0.1), S eps = S(1e-5)) {
    detail::check(x->shape.size() == 3 && gamma->shape == Shape{x->shape[0]} &&
                      beta->shape == Shape{x->shape[0]},
                  detail::two_shapes("batchnorm", x, gamma));
    const int C = x->shape[0];
    const int N = x->shape[1] * x->shape[2];
    auto out = make_leaf<S>(x->shape);
    auto mean = std::make_shared<std::vector<S>>(C);
    auto var = std::make_shared<std::vector<S>>(C);
    for (int c = 0; c < C; ++c) {
        const S* xp = &x->value[static_cast<std::size_t>(c) * N];
        S mu = S(0);
        for (int i = 0; i < N; ++i) mu += xp[i];
        mu /= S(N);
        S v = S(0);
        for (int i = 0; i < N; ++i) v += (xp[i] - mu) * (xp[i] - mu);
        v /= S(N);
        (*mean)[c] = mu;
        (*var)[c] = v;
        running_mean[c] = (S(1) - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (S(1) - momentum) * running_var[c] + momentum * v;
        const S inv = S(1) / std::sqrt(v + eps);
        S* op = &out->value[static_cast<std::size_t>(c) * N];
        for (int i = 0; i < N; ++i) op[i] = gamma->value[c] * (xp[i] - mu) * inv + beta->value[c];
    }
    out->backward_fn = [out, x, gamma, beta, mean, var, C, N, eps] {
        x->ensure_grad();
        gamma->ensure_grad();
        beta->ensure_grad();
        for (int c = 0; c < C; ++c) {
            const S* xp = &x->value[static_cast<std::size_t>(c) * N];
            const S* gp = &out->grad[static_cast<std::size_t>(c) * N];
            S* xg = &x->grad[static_cast<std::size_t>(c) * N];
            const S mu = (*mean)[c], inv = S(1) / std::sqrt((*var)[c] + eps);
            S sum_g = S(0), sum_gx = S(0);
            for (int i = 0; i < N; ++i) {
                sum_g += gp[i];
                sum_gx += gp[i] * (xp[i] - mu) * inv;
            }
            gamma->grad[c] += sum_gx;
            beta->grad[c] += sum_g;
            const S gmm = gamma->value[c];
            for (int i = 0; i < N; ++i) {
                const S xhat = (xp[i] - mu) * inv;
                xg[i] += gmm * inv * (gp[i] - sum_g / S(N) - xhat * sum_gx / S(N));
            }
        }
    };
    return tape.record(std::move(out));
}

// Inference mode: normalize with stored running statistics.
template <class S>
Var<S> batchnorm_infer(Tape<S>& tape, Var<S> x, Var<S> gamma, Var<S> beta,
                       const std::vector<S>& running_mean, const std::vector<S>& running_var,
                       S eps = S(1e-5)) {
    detail::check(x->shape.size() == 3 && gamma->shape == Shape{x->shape[0]} &&
                      beta->shape == Shape{x->shape[0]},
                  detail::two_shapes("batchnorm", x, gamma));
    const int C = x->shape[0];
    const int N = x->shape[1] * x->shape[2];
    auto out = make_leaf<S>(x->shape);
    auto inv = std::make_shared<std::vector<S>>(C);
    for (int c = 0; c < C; ++c) {
        (*inv)[c] = S(1) / std::sqrt(running_var[c] + eps);
        const S* xp = &x->value[static_cast<std::size_t>(c) * N];
        S* op = &out->value[static_cast<std::size_t>(c) * N];
        for (int i = 0; i < N; ++i)
            op[i] = gamma->value[c] * (xp[i] - running_mean[c]) * (*inv)[c] + beta->value[c];
    }
    const std::vector<S> rm = running_mean;  // copy: running buffers may move on
    out->backward_fn = [out, x, gamma, beta, inv, rm, C, N] {
        x->ensure_grad();
        gamma->ensure_grad();
        beta->ensure_grad();
        for (int c = 0; c < C; ++c) {
            const S* xp = &x->value[static_cast<std::size_t>(c) * N];
            const S* gp = &out->grad[static_cast<std::size_t>(c) * N];
            S* xg = &x->grad[static_cast<std::size_t>(c) * N];
            for (int i = 0; i < N; ++i) {
                xg[i] += gp[i] * gamma->value[c] * (*inv)[c];
                gamma->grad[c] += gp[i] * (xp[i] - rm[c]) * (*inv)[c];
                beta->grad[c] += gp[i];
            }
        }
    };
    return tape.record(std::move(out));
}

// -------------------------------------------------------- sequence plumbing

// Mean over the height axis: [C,H,W] -> [C,W].
template <class S>
Var<S> collapse_height_mean(Tape<S>& tape, Var<S> x) {
    detail::check(x->shape.size() == 3, "collapse_height_mean: need rank-3 input, got " +
                                            shape_str(x->shape));
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    auto out = make_leaf<S>({C, W});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h) {
            const S* xrow = &x->value[(static_cast<std::size_t>(c) * H + h) * W];
            S* orow = &out->value[static_cast<std::size_t>(c) * W];
            for (int wv = 0; wv < W; ++wv) orow[wv] += xrow[wv] / S(H);
        }
    out->backward_fn = [out, x, C, H, W] {
        x->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h) {
                S* xgrow = &x->grad[(static_cast<std::size_t>(c) * H + h) * W];
                const S* grow = &out->grad[static_cast<std::size_t>(c) * W];
                for (int wv = 0; wv < W; ++wv) xgrow[wv] += grow[wv] / S(H);
            }
    };
    return tape.record(std::move(out));
}

// [C,W] -> [W,C], so each feature column becomes a row (one per timestep).
template <class S>
Var<S> transpose2(Tape<S>& tape, Var<S> x) {
    detail::check(x->shape.size() == 2, "transpose2: need rank-2 input, got " +
                                            shape_str(x->shape));
    const int R = x->shape[0], Cn = x->shape[1];
    auto out = make_leaf<S>({Cn, R});
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < Cn; ++c)
            out->value[static_cast<std::size_t>(c) * R + r] =
                x->value[static_cast<std::size_t>(r) * Cn + c];
    out->backward_fn = [out, x, R, Cn] {
        x->ensure_grad();
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < Cn; ++c)
                x->grad[static_cast<std::size_t>(r) * Cn + c] +=
                    out->grad[static_cast<std::size_t>(c) * R + r];
    };
    return tape.record(std::move(out));
}

// Extract row t of a [T,K] matrix as a [K] vector.
template <class S>
Var<S> row(Tape<S>& tape, Var<S> X, int t) {
    detail::check(X->shape.size() == 2 && t >= 0 && t < X->shape[0],
                  "row: index " + std::to_string(t) + " out of " + shape_str(X->shape));
    const int K = X->shape[1];
    auto out = make_leaf<S>({K});
    std::copy_n(&X->value[static_cast<std::size_t>(t) * K], K, out->value.begin());
    out->backward_fn = [out, X, t, K] {
        X->ensure_grad();
        for (int j = 0; j < K; ++j) X->grad[static_cast<std::size_t>(t) * K + j] += out->grad[j];
    };
    return tape.record(std::move(out));
}

// Stack equal-length vectors into a [T,K] matrix.
template <class S>
Var<S> stack_rows(Tape<S>& tape, const std::vector<Var<S>>& rows) {
    detail::check(!rows.empty(), "stack_rows: empty row list");
    const int K = rows[0]->shape.empty() ? 0 : rows[0]->shape[0];
    for (const auto& r : rows)
        detail::check(r->shape == Shape{K}, detail::two_shapes("stack_rows", rows[0], r));
    const int T = static_cast<int>(rows.size());
    auto out = make_leaf<S>({T, K});
    for (int t = 0; t < T; ++t)
        std::copy(rows[t]->value.begin(), rows[t]->value.end(),
                  out->value.begin() + static_cast<std::size_t>(t) * K);
    out->backward_fn = [out, rows, K] {
        for (std::size_t t = 0; t < rows.size(); ++t) {
            rows[t]->ensure_grad();
            for (int j = 0; j < K; ++j)
                rows[t]->grad[j] += out->grad[t * static_cast<std::size_t>(K) + j];
        }
    };
    return tape.record(std::move(out));
}

// Log-softmax over the last axis of a [T,K] matrix (the character axis).
template <class S>
Var<S> log_softmax_rows(Tape<S>& tape, Var<S> X) {
    detail::check(X->shape.size() == 2, "log_softmax_rows: need rank-2 input, got " +
                                            shape_str(X->shape));
    const int T = X->shape[0], K = X->shape[1];
    auto out = make_leaf<S>(X->shape);
    for (int t = 0; t < T; ++t) {
        const S* xr = &X->value[static_cast<std::size_t>(t) * K];
        S* orow = &out->value[static_cast<std::size_t>(t) * K];
        S mx = xr[0];
        for (int j = 1; j < K; ++j) mx = std::max(mx, xr[j]);
        S lse = S(0);
        for (int j = 0; j < K; ++j) lse += std::exp(xr[j] - mx);
        lse = mx + std::log(lse);
        for (int j = 0; j < K; ++j) orow[j] = xr[j] - lse;
    }
    out->backward_fn = [out, X, T, K] {
        X->ensure_grad();
        for (int t = 0; t < T; ++t) {
            const S* orow = &out->value[static_cast<std::size_t>(t) * K];
            const S* grow = &out->grad[static_cast<std::size_t>(t) * K];
            S* xg = &X->grad[static_cast<std::size_t>(t) * K];
            S gsum = S(0);
            for (int j = 0; j < K; ++j) gsum += grow[j];
            for (int j = 0; j < K; ++j) xg[j] += grow[j] - std::exp(orow[j]) * gsum;
        }
    };
    return tape.record(std::move(out));
}

// ---------------------------------------------------------------- reductions

// mean((a - b)^2) -> scalar
template <class S>
Var<S> mean_sq_diff(Tape<S>& tape, Var<S> a, Var<S> b) {
    detail::check(a->shape == b->shape, detail::two_shapes("mean_sq_diff", a, b));
    auto out = make_leaf<S>(Shape{});
    const std::size_t n = a->numel();
    S acc = S(0);
    for (std::size_t i = 0; i < n; ++i) {
        const S d = a->value[i] - b->value[i];
        acc += d * d;
    }
    out->value[0] = acc / S(n);
    out->backward_fn = [out, a, b, n] {
        a->ensure_grad();
        b->ensure_grad();
        const S g = out->grad[0] * S(2) / S(n);
        for (std::size_t i = 0; i < n; ++i) {
            const S d = a->value[i] - b->value[i];
            a->grad[i] += g * d;
            b->grad[i] -= g * d;
        }
    };
    return tape.record(std::move(out));
}

// mean((a - c)^2) against a constant fill value.
template <class S>
Var<S> mean_sq_to_const(Tape<S>& tape, Var<S> a, S c) {
    auto out = make_leaf<S>(Shape{});
    const std::size_t n = a->numel();
    S acc = S(0);
    for (std::size_t i = 0; i < n; ++i) {
        const S d = a->value[i] - c;
        acc += d * d;
    }
    out->value[0] = acc / S(n);
    out->backward_fn = [out, a, c, n] {
        a->ensure_grad();
        const S g = out->grad[0] * S(2) / S(n);
        for (std::size_t i = 0; i < n; ++i) a->grad[i] += g * (a->value[i] - c);
    };
    return tape.record(std::move(out));
}

template <class S>
Var<S> sum_scalars(Tape<S>& tape, const std::vector<Var<S>>& xs) {
    detail::check(!xs.empty(), "sum_scalars: empty list");
    for (const auto& x : xs)
        detail::check(x->is_scalar(), "sum_scalars: non-scalar term " + shape_str(x->shape));
    auto out = make_leaf<S>(Shape{});
    for (const auto& x : xs) out->value[0] += x->value[0];
    out->backward_fn = [out, xs] {
        for (const auto& x : xs) {
            x->ensure_grad();
            x->grad[0] += out->grad[0];
        }
    };
    return tape.record(std::move(out));
}

}  // namespace ocrprep::diffkernel
