// Loss terms, discriminator batch assembly, and the three-phase train step.

#include "crvae/objectives.hpp"
#include "doctest.h"

using namespace crvae;

namespace {

// Small synthetic pixel batch in [-1,1] with per-image structure, so the
// model has something learnable.
Tensor<float> toy_batch(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> x({n, c, h, w});
    for (int i = 0; i < n; ++i) {
        const double cx = rng.uniform(0.25, 0.75) * w;
        const double cy = rng.uniform(0.25, 0.75) * h;
        const double r = rng.uniform(0.15, 0.3) * h;
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < w; ++xx) {
                    const double d = std::hypot(xx - cx, y - cy);
                    x.at4(i, ch, y, xx) =
                        static_cast<float>(d < r ? 0.8 - 0.2 * ch : -0.6 + 0.1 * ch);
                }
            }
        }
    }
    return x;
}

std::uint64_t groups_hash(const ModelBundle<float>& b, const std::vector<std::string>& gs) {
    Fnv1a64 h;
    for (const auto& g : gs) {
        const std::uint64_t v = param_group_hash(b, g);
        h.update(&v, sizeof(v));
    }
    return h.digest();
}

double identity_gap(const LossBreakdown& bd, const CoeffSet& c) {
    const double recomposed = bd.recon + c.alpha1 * bd.kl_head + c.alpha2 * bd.kl_tail +
                              c.beta * bd.adv_gen + c.kappa * bd.mi;
    return std::abs(bd.total_gen - recomposed) / std::max(1.0, std::abs(bd.total_gen));
}

}  // namespace

TEST_CASE("coefficient validation") {
    CoeffSet c;
    CHECK_NOTHROW(c.validate());
    c.beta = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.beta = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adversarial losses from logits") {
    Tape<double> tape;

    SUBCASE("undecided discriminator: both probabilities at one half") {
        auto r = tape.constant(Tensor<double>({4, 1}, 0.0));
        auto f = tape.constant(Tensor<double>({4, 1}, 0.0));
        auto adv = adversarial_losses(r, f);
        CHECK(tape.value(adv.disc_loss).scalar_value() == doctest::Approx(2.0 * std::log(2.0)));
        CHECK(tape.value(adv.gen_loss).scalar_value() == doctest::Approx(std::log(2.0)));
        CHECK(adv.accuracy == 0.0);  // ties at 0.5 count as wrong
    }

    SUBCASE("confident and correct") {
        auto r = tape.constant(Tensor<double>({2, 1}, 5.0));
        auto f = tape.constant(Tensor<double>({2, 1}, -5.0));
        auto adv = adversarial_losses(r, f);
        const double sp5 = std::log1p(std::exp(-5.0));
        CHECK(tape.value(adv.disc_loss).scalar_value() == doctest::Approx(2.0 * sp5));
        CHECK(tape.value(adv.gen_loss).scalar_value() == doctest::Approx(5.0 + sp5));
        CHECK(adv.accuracy == 1.0);
    }

    SUBCASE("confident and exactly wrong") {
        auto r = tape.constant(Tensor<double>({2, 1}, -3.0));
        auto f = tape.constant(Tensor<double>({2, 1}, 3.0));
        auto adv = adversarial_losses(r, f);
        CHECK(adv.accuracy == 0.0);
        CHECK(tape.value(adv.disc_loss).scalar_value() ==
              doctest::Approx(2.0 * (3.0 + std::log1p(std::exp(-3.0)))));
    }

    SUBCASE("saturated logits stay finite") {
        auto r = tape.constant(Tensor<double>({1, 1}, -1000.0));
        auto f = tape.constant(Tensor<double>({1, 1}, 1000.0));
        auto adv = adversarial_losses(r, f);
        CHECK(std::isfinite(tape.value(adv.disc_loss).scalar_value()));
        CHECK(tape.value(adv.disc_loss).scalar_value() == doctest::Approx(2000.0));
    }
}

TEST_CASE("skip rule boundary") {
    CHECK_FALSE(disc_should_skip(0.9));  // exactly the threshold still updates
    CHECK(disc_should_skip(0.9 + 1e-12));
    CHECK(disc_should_skip(1.0));
    CHECK_FALSE(disc_should_skip(0.5));
}

TEST_CASE("batch assembly: half real, quarter generated, quarter reconstructed") {
    Tensor<float> real({8, 1, 2, 2}, 1.0f);
    Tensor<float> gen({4, 1, 2, 2}, 2.0f);
    Tensor<float> rec({8, 1, 2, 2}, 3.0f);
    Rng rng(5);
    auto db = assemble_batch(real, gen, rec, 8, rng);
    CHECK(db.n_real == 4);
    CHECK(db.n_generated == 2);
    CHECK(db.n_reconstructed == 2);
    REQUIRE(db.images.shape == Shape{8, 1, 2, 2});
    for (int i = 0; i < 8; ++i) {
        const float expect = i < 4 ? 1.0f : (i < 6 ? 2.0f : 3.0f);
        CHECK(db.images.at4(i, 0, 0, 0) == expect);
    }

    Rng r1(9), r2(9);
    auto a = assemble_batch(real, gen, rec, 8, r1);
    auto b = assemble_batch(real, gen, rec, 8, r2);
    CHECK(a.images.data == b.images.data);

    CHECK_THROWS_AS(assemble_batch(real, gen, rec, 6, rng), ConfigError);
    CHECK_THROWS_AS(assemble_batch(real, gen, rec, 0, rng), ConfigError);
    Tensor<float> tiny({1, 1, 2, 2}, 2.0f);
    CHECK_THROWS_AS(assemble_batch(real, tiny, rec, 8, rng), ConfigError);
}

TEST_CASE("pure VAE steps: only generator groups move, loss decreases") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng init(71);
    auto bundle = build_bundle<float>(spec, init);
    auto batch = toy_batch(8, 3, 8, 8, 72);
    CoeffSet coeffs;
    coeffs.beta = 0.0;
    coeffs.kappa = 0.0;

    const auto frozen_before = groups_hash(bundle, {"trunk", "disc_head", "mi_head"});
    Rng step_rng(73);
    double first = 0.0, last = 0.0;
    for (int s = 0; s < 120; ++s) {
        auto info = train_step(bundle, batch, coeffs, 2e-3, step_rng);
        CHECK(identity_gap(info.losses, coeffs) < 1e-6);
        CHECK(info.losses.adv_gen == 0.0);
        CHECK(info.losses.adv_disc == 0.0);
        CHECK(info.losses.mi == 0.0);
        CHECK_FALSE(info.losses.disc_skipped);
        CHECK(info.n_real == 0);
        if (s == 0) first = info.losses.recon;
        last = info.losses.recon;
    }
    CHECK(last < 0.5 * first);  // overfits a fixed batch quickly
    CHECK(groups_hash(bundle, {"trunk", "disc_head", "mi_head"}) == frozen_before);
    // generator side did move
    Rng init2(71);
    auto fresh = build_bundle<float>(spec, init2);
    CHECK(param_group_hash(bundle, "encoder") != param_group_hash(fresh, "encoder"));
    CHECK(param_group_hash(bundle, "gen_rnn") != param_group_hash(fresh, "gen_rnn"));
}

TEST_CASE("train steps are deterministic given (bundle, batch, seed)") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    CoeffSet coeffs;  // full objective incl. GAN + MI
    auto batch = toy_batch(8, 3, 8, 8, 81);

    auto run = [&]() {
        Rng init(82);
        auto b = build_bundle<float>(spec, init);
        Rng rng(83);
        for (int s = 0; s < 3; ++s) train_step(b, batch, coeffs, 1e-3, rng);
        Fnv1a64 h;
        for (const auto& g : groups_for(spec.variant)) {
            const std::uint64_t v = param_group_hash(b, g);
            h.update(&v, sizeof(v));
        }
        return h.digest();
    };
    CHECK(run() == run());
}

TEST_CASE("adversarial and MI phases train the shared trunk and heads") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng init(91);
    auto bundle = build_bundle<float>(spec, init);
    auto batch = toy_batch(8, 3, 8, 8, 92);
    CoeffSet coeffs;  // defaults: beta, kappa > 0

    const auto trunk0 = param_group_hash(bundle, "trunk");
    const auto mi0 = param_group_hash(bundle, "mi_head");
    Rng rng(93);
    auto info = train_step(bundle, batch, coeffs, 1e-3, rng);
    CHECK(info.n_real == 4);
    CHECK(info.n_generated == 2);
    CHECK(info.n_reconstructed == 2);
    CHECK(identity_gap(info.losses, coeffs) < 1e-6);
    CHECK(info.losses.mi > 0.0);
    CHECK(info.losses.adv_disc > 0.0);
    CHECK(param_group_hash(bundle, "trunk") != trunk0);     // Q phase ran
    CHECK(param_group_hash(bundle, "mi_head") != mi0);
    // disc head moves unless the probe was already >90% right on step one,
    // which an untrained head cannot be by construction... but check via flag:
    if (!info.losses.disc_skipped) {
        Rng init2(91);
        auto fresh = build_bundle<float>(spec, init2);
        CHECK(param_group_hash(bundle, "disc_head") != param_group_hash(fresh, "disc_head"));
    }
}

TEST_CASE("beta=0 kappa>0: MI phase runs without any discriminator pass") {
    auto spec = NetworkSpec::tiny(Variant::cvae);
    Rng init(95);
    auto bundle = build_bundle<float>(spec, init);
    auto batch = toy_batch(4, 3, 8, 8, 96);
    CoeffSet coeffs;
    coeffs.beta = 0.0;
    const auto disc0 = param_group_hash(bundle, "disc_head");
    Rng rng(97);
    auto info = train_step(bundle, batch, coeffs, 1e-3, rng);
    CHECK(info.losses.mi > 0.0);
    CHECK(info.losses.adv_disc == 0.0);
    CHECK(info.n_real == 0);
    CHECK(param_group_hash(bundle, "disc_head") == disc0);
}

TEST_CASE("non-finite losses abort the step with a breakdown attached") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng init(99);
    auto bundle = build_bundle<float>(spec, init);
    // Poison the posterior mean head so mu^2 overflows float range.
    for (auto& v : bundle.mean_conv.bias.value.data) v = 1e25f;
    auto batch = toy_batch(4, 3, 8, 8, 100);
    CoeffSet coeffs;
    coeffs.beta = 0.0;
    coeffs.kappa = 0.0;
    Rng rng(101);
    try {
        train_step(bundle, batch, coeffs, 1e-3, rng);
        FAIL("expected StepError");
    } catch (const StepError& e) {
        CHECK(std::string(e.what()).find("KL") != std::string::npos);
        CHECK(std::isfinite(e.breakdown.recon));  // earlier terms still reported
    }
}

TEST_CASE("batch shape errors are rejected up front") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng init(103);
    auto bundle = build_bundle<float>(spec, init);
    CoeffSet coeffs;
    Rng rng(104);
    Tensor<float> flat({8, 3 * 8 * 8}, 0.0f);
    CHECK_THROWS_AS(train_step(bundle, flat, coeffs, 1e-3, rng), ShapeError);
    // GAN phase requires divisibility by 4
    auto odd = toy_batch(6, 3, 8, 8, 105);
    CHECK_THROWS_AS(train_step(bundle, odd, coeffs, 1e-3, rng), ConfigError);
}
