#pragma once

// Latent-space tasks on a trained bundle: prior sampling, progressive
// prefix generation, per-block interpolation, and optimisation-based image
// completion. All of these are inference-style: model parameters stay fixed.

#include <algorithm>

#include "crvae/objectives.hpp"

namespace crvae {

// Images decoded from prior draws z ~ N(0, I). Returns [n, C, H, W].
template <typename T>
Tensor<T> sample_prior(ModelBundle<T>& bundle, int n, Rng& rng) {
    if (n < 1) throw ConfigError("sample_prior: need n >= 1");
    Tape<T> tape;
    BindContext<T> ctx(tape, bundle);
    Val<T> z = tape.constant(rng.normal_tensor<T>(bundle.spec.posterior_shape(n)));
    return tape.value(decode(ctx, z));
}

// Posterior mean for a batch of images (no sampling).
template <typename T>
Tensor<T> posterior_mean(ModelBundle<T>& bundle, const Tensor<T>& images) {
    Tape<T> tape;
    BindContext<T> ctx(tape, bundle);
    auto post = posterior(ctx, encode(ctx, tape.constant(images)));
    return tape.value(post.mu);
}

// Mean-path reconstruction: decode the posterior mean.
template <typename T>
Tensor<T> reconstruct_mean(ModelBundle<T>& bundle, const Tensor<T>& images) {
    Tape<T> tape;
    BindContext<T> ctx(tape, bundle);
    auto post = posterior(ctx, encode(ctx, tape.constant(images)));
    return tape.value(decode(ctx, post.mu));
}

// Decode a latent whose blocks beyond the first k are zeroed (the prior
// mean): with k = 0 everything is zero, with k = T the latent is untouched.
// Because the recurrence is causal, growing k refines the sample without
// rewriting what earlier blocks already decided.
template <typename T>
Tensor<T> progressive_sample(ModelBundle<T>& bundle, const LatentBlocks<T>& z, int k) {
    const int steps = z.steps();
    if (steps != bundle.spec.effective_steps()) {
        throw ConfigError("progressive_sample: latent has " + std::to_string(steps) +
                          " blocks, model expects " + std::to_string(bundle.spec.effective_steps()));
    }
    if (k < 0 || k > steps) {
        throw ConfigError("progressive_sample: prefix length " + std::to_string(k) +
                          " outside [0," + std::to_string(steps) + "]");
    }
    LatentBlocks<T> masked = z;
    for (int t = k; t < steps; ++t) {
        std::fill(masked.blocks[static_cast<std::size_t>(t)].data.begin(),
                  masked.blocks[static_cast<std::size_t>(t)].data.end(), T(0));
    }
    Tape<T> tape;
    BindContext<T> ctx(tape, bundle);
    return tape.value(decode(ctx, tape.constant(merge_latent(masked))));
}

// Frames walking z towards z_alt in latent block t only; every other block
// stays at z. steps >= 2 endpoints inclusive.
template <typename T>
std::vector<Tensor<T>> interpolate_block(ModelBundle<T>& bundle, const Tensor<T>& z,
                                         const Tensor<T>& z_alt, int t, int steps) {
    const int T_steps = bundle.spec.effective_steps();
    if (t < 0 || t >= T_steps) {
        throw ConfigError("interpolate_block: block index " + std::to_string(t) + " outside [0," +
                          std::to_string(T_steps) + ")");
    }
    if (steps < 2) throw ConfigError("interpolate_block: need at least 2 frames");
    require_same_shape(z, z_alt, "interpolate_block");
    LatentBlocks<T> a = split_latent(z, T_steps);
    LatentBlocks<T> b = split_latent(z_alt, T_steps);

    std::vector<Tensor<T>> frames;
    for (int s = 0; s < steps; ++s) {
        const T lam = static_cast<T>(static_cast<double>(s) / (steps - 1));
        LatentBlocks<T> cur = a;
        Tensor<T>& blk = cur.blocks[static_cast<std::size_t>(t)];
        const Tensor<T>& alt = b.blocks[static_cast<std::size_t>(t)];
        if (s == steps - 1) {
            blk = alt;  // exact endpoint
        } else {
            // Delta form: frames where the endpoints agree stay bitwise put.
            for (std::int64_t i = 0; i < blk.numel(); ++i) {
                blk[i] += lam * (alt[i] - blk[i]);
            }
        }
        Tape<T> tape;
        BindContext<T> ctx(tape, bundle);
        frames.push_back(tape.value(decode(ctx, tape.constant(merge_latent(cur)))));
    }
    return frames;
}

// ---------------------------------------------------------------------------
// image completion
// ---------------------------------------------------------------------------

template <typename T>
struct CompletionSpec {
    Tensor<T> mask;       // image-shaped, strictly {0,1}; 1 marks observed pixels
    double gamma = 1e-5;  // weight of the latent prior pull (0.5*|z|^2)
    double tau = 0.003;   // weight of the realism pull through the discriminator
    int iters = 200;
    double step_size = 0.05;          // Adam rate on the latent
    bool init_from_posterior = true;  // encode the occluded image; else draw from the prior
    std::uint64_t seed = 0;           // used only for the prior-draw init

    void validate(const NetworkSpec& net) const {
        if (!(gamma >= 0.0) || !(tau >= 0.0) || !std::isfinite(gamma) || !std::isfinite(tau)) {
            throw ConfigError("completion: gamma and tau must be finite and non-negative");
        }
        if (iters < 1) throw ConfigError("completion: need at least one iteration");
        if (!(step_size > 0.0)) throw ConfigError("completion: step size must be positive");
        if (mask.shape != Shape{1, net.image_c, net.image_h, net.image_w} &&
            mask.shape != Shape{net.image_c, net.image_h, net.image_w}) {
            throw ShapeError("completion: mask shape " + shape_str(mask.shape) +
                             " does not match the image layout");
        }
        for (const T& v : mask.data) {
            if (v != T(0) && v != T(1)) {
                throw ConfigError("completion: mask entries must be exactly 0 or 1");
            }
        }
    }
};

template <typename T>
struct CompletionResult {
    Tensor<T> image;          // [1,C,H,W] decode of the final latent
    Tensor<T> initial_image;  // decode of the starting latent
    Tensor<T> z;              // final latent
    std::vector<double> trace;  // objective value per iteration, before each update
};

// Mean squared error restricted to hole pixels (mask == 0); for evaluating
// how much of the occluded region was recovered.
template <typename T>
double masked_region_mse(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask) {
    require_same_shape(a, b, "masked_region_mse");
    if (mask.numel() != a.numel()) throw ShapeError("masked_region_mse: mask size mismatch");
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (mask[i] == T(0)) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            acc += d * d;
            ++count;
        }
    }
    if (count == 0) throw ConfigError("masked_region_mse: mask has no hole pixels");
    return acc / static_cast<double>(count);
}

// Fills the hole in `x` by gradient descent in latent space:
//   min_z  mean((decode(z) - x) * mask)^2  + gamma * 0.5|z|^2
//                                          - tau * softplus(disc_logit)
// The realism term is log(1 - D) of the candidate; it needs a discriminator
// that has actually been trained, which the bundle tracks.
template <typename T>
CompletionResult<T> complete(ModelBundle<T>& bundle, const Tensor<T>& image,
                             const CompletionSpec<T>& cs) {
    const NetworkSpec& net = bundle.spec;
    cs.validate(net);
    Tensor<T> x = image;
    if (x.ndim() == 3) x.shape = {1, x.dim(0), x.dim(1), x.dim(2)};
    if (x.shape != Shape{1, net.image_c, net.image_h, net.image_w}) {
        throw ShapeError("completion: image shape " + shape_str(image.shape) +
                         " does not match the model");
    }
    if (cs.tau > 0.0 && !bundle.disc_trained) {
        throw ConfigError("completion: tau > 0 needs a trained discriminator in the bundle");
    }

    Tensor<T> mask = cs.mask;
    mask.shape = x.shape;  // [C,H,W] and [1,C,H,W] hold the same element count

    // Observed pixels pass through; the hole is filled with the range
    // midpoint before encoding.
    const double mid = net.out_act == OutputAct::tanh_sym ? 0.0 : 0.5;
    Tensor<T> occluded = x;
    for (std::int64_t i = 0; i < occluded.numel(); ++i) {
        if (mask[i] == T(0)) occluded[i] = static_cast<T>(mid);
    }

    Tensor<T> z0;
    if (cs.init_from_posterior) {
        z0 = posterior_mean(bundle, occluded);
    } else {
        Rng rng(cs.seed);
        z0 = rng.normal_tensor<T>(net.posterior_shape(1));
    }

    CompletionResult<T> out;
    AdamState<T> zopt;
    zopt.lr = cs.step_size;
    Tensor<T> zcur = z0;

    for (int it = 0; it <= cs.iters; ++it) {
        Tape<T> tape;
        BindContext<T> ctx(tape, bundle);
        Val<T> z = tape.leaf(zcur, true);
        Val<T> xhat = decode(ctx, z);
        if (it == 0) out.initial_image = tape.value(xhat);

        Val<T> m = tape.constant(mask);
        Val<T> data = mean(square(mul(sub(xhat, tape.constant(x)), m)));
        Val<T> obj = data;
        if (cs.gamma > 0.0) {
            obj = add(obj, scale(sum(square(z)), 0.5 * cs.gamma));
        }
        if (cs.tau > 0.0) {
            obj = add(obj, scale(mean(softplus(discriminate(ctx, xhat).logit)), -cs.tau));
        }
        if (it == cs.iters) {
            // Final forward only: report the decode of the last update.
            out.image = tape.value(xhat);
            out.z = zcur;
            break;
        }
        const double v = static_cast<double>(tape.value(obj).scalar_value());
        if (!std::isfinite(v)) {
            throw NumericError("completion objective became non-finite at iteration " +
                               std::to_string(it));
        }
        out.trace.push_back(v);
        tape.backward(obj);
        adam_step(zcur, tape.grad(z), zopt);
    }
    return out;
}

}  // namespace crvae
