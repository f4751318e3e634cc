#pragma once

// Latent-space machinery: channel-block recurrence, reparameterised sampling
// and the weighted KL divergence.
//
// A latent tensor z has shape [N, c, h, w] with c divisible by the step count
// T. Step t owns the channel range [t*c/T, (t+1)*c/T); a block is flattened
// channel-major (plain contiguous reshape) into a vector of length c/T*h*w,
// which is also the LSTM hidden width, so the recurrence maps block to block
// through a learned square projection.

#include <vector>

#include "crvae/ops.hpp"
#include "crvae/rng.hpp"

namespace crvae {

// Per-step weights for the KL term.
struct KLWeights {
    std::vector<double> w;

    static KLWeights uniform(int steps, double v = 1.0) {
        KLWeights k;
        k.w.assign(static_cast<std::size_t>(steps), v);
        k.validate();
        return k;
    }

    // Front-loaded split: the first min(3, steps) steps carry `head`, the
    // remainder `tail`.
    static KLWeights head_tail(int steps, double head, double tail) {
        KLWeights k;
        for (int t = 0; t < steps; ++t) k.w.push_back(t < 3 ? head : tail);
        k.validate();
        return k;
    }

    int steps() const { return static_cast<int>(w.size()); }

    void validate() const {
        if (w.empty()) throw ConfigError("KL weights: need at least one step");
        for (double v : w) {
            if (!std::isfinite(v) || v < 0.0) {
                throw ConfigError("KL weights must be finite and non-negative");
            }
        }
    }
};

namespace detail {

template <typename T>
void check_latent(const Tensor<T>& z, int steps) {
    if (z.ndim() != 4) throw ShapeError("latent must be [N,c,h,w], got " + shape_str(z.shape));
    if (steps < 1 || z.dim(1) % steps != 0) {
        throw ShapeError("channel count " + std::to_string(z.dim(1)) + " not divisible into " +
                         std::to_string(steps) + " steps");
    }
}

}  // namespace detail

// ---- channel blocks --------------------------------------------------------

template <typename T>
std::vector<Val<T>> slice_channels(Val<T> z, int steps) {
    detail::check_latent(z.tape->value(z), steps);
    const int bc = z.shape()[1] / steps;
    std::vector<Val<T>> blocks;
    for (int t = 0; t < steps; ++t) blocks.push_back(slice(z, 1, t * bc, bc));
    return blocks;
}

template <typename T>
Val<T> concat_channels(const std::vector<Val<T>>& blocks) {
    return concat(blocks, 1);
}

// Value-level latent split, used by the sampling/interpolation tasks.
template <typename T>
struct LatentBlocks {
    std::vector<Tensor<T>> blocks;  // each [N, c/T, h, w]

    int steps() const { return static_cast<int>(blocks.size()); }
};

template <typename T>
LatentBlocks<T> split_latent(const Tensor<T>& z, int steps) {
    detail::check_latent(z, steps);
    const int N = z.dim(0), bc = z.dim(1) / steps, h = z.dim(2), w = z.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(bc) * h * w;
    LatentBlocks<T> out;
    for (int t = 0; t < steps; ++t) {
        Tensor<T> b({N, bc, h, w});
        for (int n = 0; n < N; ++n) {
            const T* src = z.data.data() + (static_cast<std::int64_t>(n) * steps + t) * plane;
            std::copy(src, src + plane, b.data.data() + static_cast<std::int64_t>(n) * plane);
        }
        out.blocks.push_back(std::move(b));
    }
    return out;
}

template <typename T>
Tensor<T> merge_latent(const LatentBlocks<T>& lb) {
    if (lb.blocks.empty()) throw ShapeError("merge_latent: no blocks");
    const int steps = lb.steps();
    const int N = lb.blocks[0].dim(0), bc = lb.blocks[0].dim(1);
    const int h = lb.blocks[0].dim(2), w = lb.blocks[0].dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(bc) * h * w;
    Tensor<T> z({N, bc * steps, h, w});
    for (int t = 0; t < steps; ++t) {
        require_same_shape(lb.blocks[static_cast<std::size_t>(t)], lb.blocks[0], "merge_latent");
        for (int n = 0; n < N; ++n) {
            const T* src = lb.blocks[static_cast<std::size_t>(t)].data.data() +
                           static_cast<std::int64_t>(n) * plane;
            std::copy(src, src + plane, z.data.data() + (static_cast<std::int64_t>(n) * steps + t) * plane);
        }
    }
    return z;
}

// ---- recurrent block transform ---------------------------------------------

// Bound handles for one LSTM-plus-projection path.
template <typename T>
struct RecurrentVals {
    Val<T> wx, wh, b;       // packed gate weights, hidden width = block length
    Val<T> proj_w, proj_b;  // square map from hidden back to block length
};

// Runs the recurrence over channel blocks of `z` and returns the transformed
// tensor (same shape). Initial hidden and cell state are zero; step t sees
// only blocks 1..t, which is what makes prefix outputs causal.
template <typename T>
Val<T> recurrent_transform(Val<T> z, int steps, const RecurrentVals<T>& p) {
    Tape<T>* tp = z.tape;
    detail::check_latent(tp->value(z), steps);
    const Shape& s = z.shape();
    const int N = s[0], bc = s[1] / steps, h = s[2], w = s[3];
    const int L = bc * h * w;
    if (tp->value(p.wx).shape != Shape{4 * L, L} || tp->value(p.proj_w).shape != Shape{L, L}) {
        throw ShapeError("recurrent_transform: weights sized for block length " +
                         std::to_string(tp->value(p.wx).dim(1)) + ", latent expects " + std::to_string(L));
    }
    LstmState<T> st{tp->constant(Tensor<T>({N, L}, T(0))), tp->constant(Tensor<T>({N, L}, T(0)))};
    std::vector<Val<T>> outs;
    for (Val<T> block : slice_channels(z, steps)) {
        Val<T> xt = reshape(block, {N, L});
        st = lstm_cell(xt, st, p.wx, p.wh, p.b);
        Val<T> yt = linear(st.h, p.proj_w, p.proj_b);
        outs.push_back(reshape(yt, {N, bc, h, w}));
    }
    return concat_channels(outs);
}

// ---- sampling and KL -------------------------------------------------------

constexpr double kLogvarLo = -10.0;
constexpr double kLogvarHi = 10.0;

// z = mu + exp(logvar / 2) * noise. The log-variance is clamped to
// [-10, 10] before exponentiation; noise must be supplied (drawn from the
// caller's Rng) so graphs stay deterministic.
template <typename T>
Val<T> reparam_sample(Val<T> mu, Val<T> logvar, Val<T> noise) {
    require_same_shape(mu.tape->value(mu), mu.tape->value(logvar), "reparam_sample");
    require_same_shape(mu.tape->value(mu), mu.tape->value(noise), "reparam_sample noise");
    Val<T> sigma = exp(scale(clamp(logvar, kLogvarLo, kLogvarHi), 0.5));
    return add(mu, mul(sigma, noise));
}

template <typename T>
struct KlResult {
    Val<T> total;                 // sum_t weight[t] * per_step[t]
    std::vector<Val<T>> per_step; // unweighted, each scalar = block KL / batch
};

// KL(N(mu, e^logvar) || N(0, I)) against the unit Gaussian, split over
// channel blocks. Each per-step term sums 0.5*(mu^2 + e^lv - lv - 1) over its
// block and divides by the batch size only (spatial/channel extent is not
// averaged out).
template <typename T>
KlResult<T> kl_weighted(Val<T> mu, Val<T> logvar, const KLWeights& weights) {
    Tape<T>* tp = mu.tape;
    require_same_shape(tp->value(mu), tp->value(logvar), "kl_weighted");
    weights.validate();
    const int steps = weights.steps();
    detail::check_latent(tp->value(mu), steps);
    const int N = tp->value(mu).dim(0);

    Val<T> lv = clamp(logvar, kLogvarLo, kLogvarHi);
    // 0.5 * (mu^2 + e^lv - lv - 1), elementwise
    Val<T> elem = scale(add_scalar(sub(add(square(mu), exp(lv)), lv), -1.0), 0.5);

    KlResult<T> out;
    for (Val<T> block : slice_channels(elem, steps)) {
        Val<T> step = scale(sum(block), 1.0 / N);
        out.per_step.push_back(step);
    }
    for (int t = 0; t < steps; ++t) {
        Val<T> wterm = scale(out.per_step[static_cast<std::size_t>(t)], weights.w[static_cast<std::size_t>(t)]);
        out.total = (t == 0) ? wterm : add(out.total, wterm);
    }
    return out;
}

}  // namespace crvae
