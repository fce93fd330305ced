#pragma once

// CTC loss: negative log probability over all monotone alignments, computed
// with the forward/backward recursion entirely in log space, differentiable
// w.r.t. the log-probability matrix through the tape.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ocrprep/autodiff.hpp"
#include "ocrprep/ops.hpp"

namespace ocrprep::losses {

// Target length exceeds what T timesteps can align; signals a data/crop bug.
struct CtcInfeasible : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Minimum number of timesteps CTC needs: |target| plus one separating blank
// per repeated adjacent pair.
inline int ctc_min_timesteps(const std::vector<int>& target) {
    int need = static_cast<int>(target.size());
    for (std::size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++need;
    return need;
}

namespace detail {
template <class S>
S lse2(S a, S b) {
    if (a == -std::numeric_limits<S>::infinity()) return b;
    if (b == -std::numeric_limits<S>::infinity()) return a;
    const S m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}
template <class S>
S lse3(S a, S b, S c) {
    return lse2(lse2(a, b), c);
}
}  // namespace detail

// log_probs: [T, K] already log-softmaxed over K; target: class indices in
// [0, K-1] excluding blank.
template <class S>
diffkernel::Var<S> ctc_loss(diffkernel::Tape<S>& tape, diffkernel::Var<S> log_probs,
                            const std::vector<int>& target, int blank) {
    using diffkernel::Var;
    if (log_probs->shape.size() != 2)
        throw std::invalid_argument("ctc_loss: log_probs must be rank-2, got " +
                                    diffkernel::shape_str(log_probs->shape));
    const int T = log_probs->shape[0], K = log_probs->shape[1];
    if (blank < 0 || blank >= K) throw std::invalid_argument("ctc_loss: blank index out of range");
    for (int c : target)
        if (c < 0 || c >= K || c == blank)
            throw std::invalid_argument("ctc_loss: target class " + std::to_string(c) +
                                        " invalid for K=" + std::to_string(K));
    const int need = ctc_min_timesteps(target);
    if (need > T)
        throw CtcInfeasible("ctc_loss: target needs " + std::to_string(need) +
                            " timesteps but only " + std::to_string(T) + " available");

    const S NEG_INF = -std::numeric_limits<S>::infinity();
    const int L = static_cast<int>(target.size());
    const int R = 2 * L + 1;  // extended label with interleaved blanks
    auto ext = std::make_shared<std::vector<int>>(R);
    for (int s = 0; s < R; ++s) (*ext)[s] = (s % 2 == 0) ? blank : target[s / 2];

    auto y = [&](int t, int k) { return log_probs->value[static_cast<std::size_t>(t) * K + k]; };

    // alpha[t][s]: log prob of prefixes ending in state s at time t (emission
    // at t included).
    auto alpha = std::make_shared<std::vector<S>>(static_cast<std::size_t>(T) * R, NEG_INF);
    auto A = [&](int t, int s) -> S& { return (*alpha)[static_cast<std::size_t>(t) * R + s]; };
    A(0, 0) = y(0, (*ext)[0]);
    if (R > 1) A(0, 1) = y(0, (*ext)[1]);
    for (int t = 1; t < T; ++t)
        for (int s = 0; s < R; ++s) {
            S p = A(t - 1, s);
            if (s >= 1) p = detail::lse2(p, A(t - 1, s - 1));
            if (s >= 2 && (*ext)[s] != blank && (*ext)[s] != (*ext)[s - 2])
                p = detail::lse2(p, A(t - 1, s - 2));
            if (p != NEG_INF) A(t, s) = p + y(t, (*ext)[s]);
        }
    S log_p = A(T - 1, R - 1);
    if (R > 1) log_p = detail::lse2(log_p, A(T - 1, R - 2));
    if (!(log_p > NEG_INF))
        throw CtcInfeasible("ctc_loss: no feasible alignment path");

    auto out = diffkernel::make_leaf<S>(diffkernel::Shape{});
    out->value[0] = -log_p;

    const S log_p_total = log_p;
    out->backward_fn = [out, log_probs, ext, alpha, T, K, R, blank, NEG_INF, log_p_total] {
        log_probs->ensure_grad();
        // beta'[s]: log prob of suffixes after time t given state s, own
        // emission excluded; combined with alpha this yields d(-logP)/dy.
        std::vector<S> beta(R, NEG_INF), beta_next(R);
        beta[R - 1] = S(0);
        if (R > 1) beta[R - 2] = S(0);
        const S gscale = out->grad[0];
        auto Yv = [&](int t, int k) {
            return log_probs->value[static_cast<std::size_t>(t) * K + k];
        };
        auto Av = [&](int t, int s) { return (*alpha)[static_cast<std::size_t>(t) * R + s]; };
        for (int t = T - 1; t >= 0; --t) {
            // accumulate gradient at time t
            std::vector<S> per_class(K, NEG_INF);
            for (int s = 0; s < R; ++s) {
                const S ab = Av(t, s) + beta[s];
                if (ab == NEG_INF) continue;
                S& slot = per_class[(*ext)[s]];
                slot = detail::lse2(slot, ab);
            }
            for (int k = 0; k < K; ++k)
                if (per_class[k] != NEG_INF)
                    log_probs->grad[static_cast<std::size_t>(t) * K + k] -=
                        gscale * std::exp(per_class[k] - log_p_total);
            if (t == 0) break;
            // beta'[t-1] from beta'[t]
            for (int s = 0; s < R; ++s) {
                S p = beta[s] + ((beta[s] == NEG_INF) ? S(0) : Yv(t, (*ext)[s]));
                if (beta[s] == NEG_INF) p = NEG_INF;
                if (s + 1 < R && beta[s + 1] != NEG_INF)
                    p = detail::lse2(p, beta[s + 1] + Yv(t, (*ext)[s + 1]));
                if (s + 2 < R && (*ext)[s + 2] != blank && (*ext)[s + 2] != (*ext)[s] &&
                    beta[s + 2] != NEG_INF)
                    p = detail::lse2(p, beta[s + 2] + Yv(t, (*ext)[s + 2]));
                beta_next[s] = p;
            }
            beta.swap(beta_next);
        }
    };
    return tape.record(std::move(out));
}

// Eq-style MSE-to-white term: mean over pixels of (1 - g)^2.
template <class S>
diffkernel::Var<S> mse_to_white(diffkernel::Tape<S>& tape, diffkernel::Var<S> g) {
    return diffkernel::mean_sq_to_const(tape, std::move(g), S(1));
}

// CTC(approx_out, target) + beta * mse_to_white(g).
template <class S>
diffkernel::Var<S> composite_loss(diffkernel::Tape<S>& tape, diffkernel::Var<S> approx_log_probs,
                                  diffkernel::Var<S> g, const std::vector<int>& target, int blank,
                                  S beta) {
    auto ctc = ctc_loss(tape, std::move(approx_log_probs), target, blank);
    if (beta == S(0)) return ctc;
    auto white = scale(tape, mse_to_white(tape, std::move(g)), beta);
    return add(tape, std::move(ctc), std::move(white));
}

}  // namespace ocrprep::losses
