#pragma once

// Training objectives and the per-step update schedule.
//
// One train_step runs up to three phases on fresh tapes:
//   G: generator-side pass. recon + weighted KL + adversarial + MI terms,
//      gradients applied to encoder / heads / transforms / decoder only. The
//      discriminator trunk and heads are bound as constants, so adversarial
//      and MI gradients flow *through* them into the decoder without
//      training them.
//   Q: MI head pass (kappa > 0). Same prediction loss on detached images;
//      updates the shared trunk and the MI head.
//   D: discriminator pass (beta > 0). Binary realness loss on an assembled
//      half-real batch; the update is skipped - but still logged - when the
//      probe accuracy exceeds the staleness threshold.
//
// The shared trunk can therefore receive two updates per step (Q then D),
// each from its own tape; optimiser state is per-parameter and sequential.

#include "crvae/networks.hpp"

namespace crvae {

// ---------------------------------------------------------------------------
// coefficients and reporting
// ---------------------------------------------------------------------------

struct CoeffSet {
    double alpha1 = 0.0003;  // KL weight on the first (up to) three blocks
    double alpha2 = 0.0002;  // KL weight on the remaining blocks
    double beta = 0.0125;    // adversarial weight; 0 disables the GAN phases
    double kappa = 0.02;     // mutual-information weight; 0 disables the MI phase

    bool operator==(const CoeffSet&) const = default;

    void validate() const {
        for (double v : {alpha1, alpha2, beta, kappa}) {
            if (!std::isfinite(v) || v < 0.0) {
                throw ConfigError("loss coefficients must be finite and non-negative");
            }
        }
    }
};

struct LossBreakdown {
    double recon = 0.0;
    double kl_head = 0.0;  // unweighted KL over the first blocks
    double kl_tail = 0.0;  // unweighted KL over the rest
    double adv_gen = 0.0;
    double adv_disc = 0.0;
    double mi = 0.0;
    double total_gen = 0.0;  // the scalar actually backpropagated in phase G
    double disc_accuracy = 0.0;
    bool disc_skipped = false;
};

struct StepInfo {
    LossBreakdown losses;
    int n_real = 0, n_generated = 0, n_reconstructed = 0;  // discriminator batch mix
};

// Raised when any loss term leaves the finite range; carries the partial
// breakdown for diagnosis.
class StepError : public std::runtime_error {
public:
    StepError(const std::string& msg, LossBreakdown bd)
        : std::runtime_error(msg), breakdown(bd) {}
    LossBreakdown breakdown;
};

// ---------------------------------------------------------------------------
// individual loss terms
// ---------------------------------------------------------------------------

// Pixel reconstruction: squared error averaged over batch and pixel extent.
template <typename T>
Val<T> recon_loss(Val<T> xhat, Val<T> x) {
    return mse(xhat, x);
}

template <typename T>
struct AdvLosses {
    Val<T> disc_loss;  // -log D(real) - log(1 - D(fake)), batch means
    Val<T> gen_loss;   // non-saturating -log D(fake)
    double accuracy;   // fraction of the probe classified correctly; ties lose
};

// Both losses are assembled from raw logits through softplus identities
// (-log sigmoid(v) = softplus(-v)), so saturated discriminators produce
// large-but-finite values instead of log(0).
template <typename T>
AdvLosses<T> adversarial_losses(Val<T> real_logits, Val<T> fake_logits) {
    AdvLosses<T> out;
    out.disc_loss = add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
    out.gen_loss = mean(softplus(neg(fake_logits)));
    const Tensor<T>& rv = real_logits.tape->value(real_logits);
    const Tensor<T>& fv = fake_logits.tape->value(fake_logits);
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < rv.numel(); ++i) correct += rv[i] > T(0) ? 1 : 0;
    for (std::int64_t i = 0; i < fv.numel(); ++i) correct += fv[i] < T(0) ? 1 : 0;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(rv.numel() + fv.numel());
    return out;
}

// Prediction loss for the mutual-information bound: how well u_hat recovers
// the generation-transform output. The target is supplied already detached.
template <typename T>
Val<T> mi_loss(Val<T> u_hat, Val<T> u_target) {
    return mse(u_hat, u_target);
}

// ---------------------------------------------------------------------------
// discriminator batch assembly
// ---------------------------------------------------------------------------

template <typename T>
struct DiscBatch {
    Tensor<T> images;  // [B,C,H,W]: real block, generated block, reconstructed block
    int n_real = 0, n_generated = 0, n_reconstructed = 0;
};

namespace detail {

template <typename T>
void copy_rows(const Tensor<T>& pool, const std::vector<std::int64_t>& idx, Tensor<T>& dst,
               std::int64_t& row) {
    const std::int64_t stride = pool.numel() / pool.dim(0);
    for (std::int64_t i : idx) {
        std::copy(pool.data.begin() + i * stride, pool.data.begin() + (i + 1) * stride,
                  dst.data.begin() + row * stride);
        ++row;
    }
}

inline std::vector<std::int64_t> pick(std::int64_t pool, std::int64_t want, Rng& rng,
                                      const char* what) {
    if (pool < want) {
        throw ConfigError(std::string("assemble_batch: ") + what + " pool has " +
                          std::to_string(pool) + " images, need " + std::to_string(want));
    }
    std::vector<std::int64_t> all(static_cast<std::size_t>(pool));
    for (std::int64_t i = 0; i < pool; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(want));
    return all;
}

}  // namespace detail

// Mixes a discriminator batch of size total: half real, a quarter sampled
// from the prior, a quarter reconstructions. total must be divisible by 4.
template <typename T>
DiscBatch<T> assemble_batch(const Tensor<T>& real, const Tensor<T>& generated,
                            const Tensor<T>& reconstructed, int total, Rng& rng) {
    if (total < 4 || total % 4 != 0) {
        throw ConfigError("assemble_batch: batch size " + std::to_string(total) +
                          " not divisible by 4");
    }
    for (const Tensor<T>* p : {&real, &generated, &reconstructed}) {
        if (p->ndim() != 4) throw ShapeError("assemble_batch: pools must be [N,C,H,W]");
    }
    DiscBatch<T> out;
    out.n_real = total / 2;
    out.n_generated = total / 4;
    out.n_reconstructed = total / 4;
    Shape s = real.shape;
    s[0] = total;
    out.images = Tensor<T>(s);
    std::int64_t row = 0;
    detail::copy_rows(real, detail::pick(real.dim(0), out.n_real, rng, "real"), out.images, row);
    detail::copy_rows(generated, detail::pick(generated.dim(0), out.n_generated, rng, "generated"),
                      out.images, row);
    detail::copy_rows(reconstructed,
                      detail::pick(reconstructed.dim(0), out.n_reconstructed, rng, "reconstructed"),
                      out.images, row);
    return out;
}

// ---------------------------------------------------------------------------
// the training step
// ---------------------------------------------------------------------------

namespace detail {

inline std::set<std::string> generator_groups(Variant v) {
    switch (v) {
        case Variant::vae:
            return {"encoder", "mean_head", "var_head", "gen_fc", "decoder"};
        case Variant::cvae:
            return {"encoder", "mean_head", "var_head", "decoder"};
        case Variant::crvae:
            return {"encoder", "mean_head", "var_head", "var_rnn", "gen_rnn", "decoder"};
    }
    throw ConfigError("unknown variant enum value");
}

template <typename T>
void apply_adam(BindContext<T>& ctx, double lr) {
    ctx.for_each_grad_param([&](const std::string&, const std::string& name, Parameter<T>& p,
                                Val<T> v) {
        p.opt.lr = lr;
        try {
            adam_step(p.value, ctx.tape().grad(v), p.opt);
        } catch (const NumericError& e) {
            throw NumericError(name + ": " + e.what());
        }
    });
}

inline void require_finite(double v, const char* what, const LossBreakdown& bd) {
    if (!std::isfinite(v)) {
        throw StepError(std::string("non-finite ") + what + " loss; step aborted", bd);
    }
}

}  // namespace detail

// Staleness rule: the discriminator sits out a round when it classifies
// strictly more than 90% of the probe correctly. Exactly 0.9 still updates.
inline bool disc_should_skip(double accuracy) { return accuracy > 0.9; }

// Per-step KL weights: the vae treats its latent as one block under alpha1;
// the block variants split alpha1 / alpha2 across head and tail steps.
inline KLWeights step_kl_weights(const NetworkSpec& spec, const CoeffSet& coeffs) {
    if (spec.variant == Variant::vae) return KLWeights::uniform(1, coeffs.alpha1);
    return KLWeights::head_tail(spec.steps, coeffs.alpha1, coeffs.alpha2);
}

// One optimisation step over `batch` (pixels already in the model's range).
// Randomness (posterior noise, prior draws, batch assembly) comes from `rng`
// in a fixed order, so a (bundle, batch, rng) triple fully determines the
// result.
template <typename T>
StepInfo train_step(ModelBundle<T>& bundle, const Tensor<T>& batch, const CoeffSet& coeffs,
                    double lr, Rng& rng) {
    coeffs.validate();
    const NetworkSpec& spec = bundle.spec;
    const int B = batch.ndim() == 4 ? batch.dim(0) : 0;
    if (B < 1) throw ShapeError("train_step: batch must be [N,C,H,W]");
    const bool want_gan = coeffs.beta > 0.0;
    const bool want_mi = coeffs.kappa > 0.0;
    const int n_prior = want_gan ? B / 4 : std::max(1, B / 4);
    if (want_gan && (B < 4 || B % 4 != 0)) {
        throw ConfigError("train_step: adversarial phase needs a batch divisible by 4");
    }

    StepInfo info;
    LossBreakdown& bd = info.losses;

    // Values carried across phases.
    Tensor<T> xhat_v, xgen_v, u_v, uprior_v;

    // ---- phase G: generator-side update ------------------------------------
    {
        Tape<T> tape;
        BindContext<T> ctx(tape, bundle, detail::generator_groups(spec.variant));
        Val<T> x = tape.constant(batch);
        auto post = posterior(ctx, encode(ctx, x));
        Val<T> noise = tape.constant(rng.normal_tensor<T>(spec.posterior_shape(B)));
        Val<T> z = reparam_sample(post.mu, post.logvar, noise);
        Val<T> u = generation(ctx, z);
        Val<T> xhat = decode_u(ctx, u);

        Val<T> recon = recon_loss(xhat, x);
        auto kl = kl_weighted(post.mu, post.logvar, step_kl_weights(spec, coeffs));
        bd.recon = static_cast<double>(tape.value(recon).scalar_value());
        const int head_steps = std::min(3, static_cast<int>(kl.per_step.size()));
        for (std::size_t t = 0; t < kl.per_step.size(); ++t) {
            const double v = static_cast<double>(tape.value(kl.per_step[t]).scalar_value());
            (static_cast<int>(t) < head_steps ? bd.kl_head : bd.kl_tail) += v;
        }

        Val<T> total = add(recon, kl.total);

        Val<T> xgen{}, uprior{};
        if (want_gan || want_mi) {
            Val<T> zp = tape.constant(rng.normal_tensor<T>(spec.posterior_shape(n_prior)));
            uprior = generation(ctx, zp);
            xgen = decode_u(ctx, uprior);
        }
        if (want_gan) {
            // Non-saturating generator loss over both fake kinds; trunk and
            // head are constants here, so only the image side trains.
            Val<T> fake_logits =
                concat({discriminate(ctx, xhat).logit, discriminate(ctx, xgen).logit}, 0);
            Val<T> adv_gen = mean(softplus(neg(fake_logits)));
            bd.adv_gen = static_cast<double>(tape.value(adv_gen).scalar_value());
            total = add(total, scale(adv_gen, coeffs.beta));
        }
        if (want_mi) {
            Val<T> mi = add(mi_loss(mi_predict(ctx, xhat), detach(u)),
                            mi_loss(mi_predict(ctx, xgen), detach(uprior)));
            bd.mi = static_cast<double>(tape.value(mi).scalar_value());
            total = add(total, scale(mi, coeffs.kappa));
        }
        bd.total_gen = static_cast<double>(tape.value(total).scalar_value());
        detail::require_finite(bd.recon, "reconstruction", bd);
        detail::require_finite(bd.kl_head + bd.kl_tail, "KL", bd);
        detail::require_finite(bd.adv_gen, "generator adversarial", bd);
        detail::require_finite(bd.mi, "mutual-information", bd);
        detail::require_finite(bd.total_gen, "total generator", bd);

        tape.backward(total);
        detail::apply_adam(ctx, lr);

        xhat_v = tape.value(xhat);
        if (want_gan || want_mi) {
            xgen_v = tape.value(xgen);
            u_v = tape.value(u);
            uprior_v = tape.value(uprior);
        }
    }

    // ---- phase Q: mutual-information head update ---------------------------
    if (want_mi) {
        Tape<T> tape;
        BindContext<T> ctx(tape, bundle, std::set<std::string>{"trunk", "mi_head"});
        // Images are detached values here: this phase trains the predictor,
        // never the generator that produced its inputs.
        Val<T> mi = add(mi_loss(mi_predict(ctx, tape.constant(xhat_v)), tape.constant(u_v)),
                        mi_loss(mi_predict(ctx, tape.constant(xgen_v)), tape.constant(uprior_v)));
        const double q = static_cast<double>(tape.value(mi).scalar_value());
        detail::require_finite(q, "mutual-information (head phase)", bd);
        tape.backward(mi);
        detail::apply_adam(ctx, lr);
    }

    // ---- phase D: discriminator update -------------------------------------
    if (want_gan) {
        DiscBatch<T> db = assemble_batch(batch, xgen_v, xhat_v, B, rng);
        info.n_real = db.n_real;
        info.n_generated = db.n_generated;
        info.n_reconstructed = db.n_reconstructed;

        Tape<T> tape;
        BindContext<T> ctx(tape, bundle, std::set<std::string>{"trunk", "disc_head"});
        Val<T> images = tape.constant(db.images);
        Val<T> logits = discriminate(ctx, images).logit;
        Val<T> real_logits = slice(logits, 0, 0, db.n_real);
        Val<T> fake_logits = slice(logits, 0, db.n_real, db.n_generated + db.n_reconstructed);
        auto adv = adversarial_losses(real_logits, fake_logits);
        bd.adv_disc = static_cast<double>(tape.value(adv.disc_loss).scalar_value());
        bd.disc_accuracy = adv.accuracy;
        detail::require_finite(bd.adv_disc, "discriminator", bd);

        // Staleness guard: a discriminator that already wins the probe sits
        // out this round so the generator can catch up.
        if (disc_should_skip(adv.accuracy)) {
            bd.disc_skipped = true;
        } else {
            tape.backward(adv.disc_loss);
            detail::apply_adam(ctx, lr);
            bundle.disc_trained = true;
        }
    }

    return info;
}

}  // namespace crvae
