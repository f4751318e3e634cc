// Network bundle: spec validation, shape flow, initialisation, parameter
// accounting and end-to-end gradient correctness at micro scale.

#include "crvae/gradcheck.hpp"
#include "crvae/networks.hpp"
#include "doctest.h"

using namespace crvae;

namespace {

// Micro configuration small enough for exhaustive finite differences over
// every parameter: 2x4x4 images, 2x2x2 latent, two recurrence steps.
NetworkSpec micro(Variant v) {
    NetworkSpec s;
    s.variant = v;
    s.image_c = 2;
    s.image_h = s.image_w = 4;
    s.latent_c = 2;
    s.latent_h = s.latent_w = 2;
    s.steps = 2;
    s.encoder = {{3, 2, 3, 1}};
    s.decoder = {{3, 1, 3, 1}, {2, 2, 4, 1}};
    s.trunk = {{3, 2, 4, 1}};
    s.validate();
    return s;
}

}  // namespace

TEST_CASE("spec validation catches inconsistent geometry") {
    CHECK_NOTHROW(NetworkSpec::defaults(Variant::crvae).validate());
    CHECK_NOTHROW(NetworkSpec::tiny(Variant::vae).validate());

    NetworkSpec s = NetworkSpec::tiny();
    s.steps = 3;  // 8 channels not divisible
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = NetworkSpec::tiny();
    s.decoder.pop_back();  // no longer reaches the image shape
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = NetworkSpec::tiny();
    s.latent_h = 4;  // encoder grid no longer matches
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = NetworkSpec::tiny();
    s.encoder[0].stride = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("bundle construction is deterministic in (spec, seed)") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng r1(99), r2(99), r3(100);
    auto a = build_bundle<float>(spec, r1);
    auto b = build_bundle<float>(spec, r2);
    auto c = build_bundle<float>(spec, r3);
    for (const std::string& g : groups_for(spec.variant)) {
        CHECK(param_group_hash(a, g) == param_group_hash(b, g));
    }
    CHECK(param_group_hash(a, "encoder") != param_group_hash(c, "encoder"));
}

TEST_CASE("initialisation: glorot bounds, zero biases, forget-gate offset") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng rng(7);
    auto b = build_bundle<double>(spec, rng);

    // encoder stage 0: fan_in = 3*9, fan_out = 8*9
    const double bound = std::sqrt(6.0 / (3 * 9 + 8 * 9));
    for (double v : b.encoder[0].kernel.value.data) CHECK(std::abs(v) <= bound);
    for (double v : b.encoder[0].bias.value.data) CHECK(v == 0.0);

    const int H = spec.block_len();
    for (int i = 0; i < 4 * H; ++i) {
        const double expect = (i >= H && i < 2 * H) ? 1.0 : 0.0;
        CHECK(b.var_rnn.b.value[i] == expect);
    }
    for (double v : b.disc_head.b.value.data) CHECK(v == 0.0);
}

TEST_CASE("enumeration order is stable and grouped") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng rng(1);
    auto b = build_bundle<float>(spec, rng);
    std::vector<std::string> names;
    b.for_each_param([&](const std::string&, const std::string& n, Parameter<float>&) {
        names.push_back(n);
    });
    REQUIRE(names.size() >= 10);
    CHECK(names[0] == "encoder.0.kernel");
    CHECK(names[1] == "encoder.0.bias");
    // var_rnn sits between the heads and the decoder for crvae
    auto at = [&](const std::string& n) {
        return std::find(names.begin(), names.end(), n) - names.begin();
    };
    CHECK(at("mean_head.0.kernel") < at("var_head.0.kernel"));
    CHECK(at("var_head.0.bias") < at("var_rnn.wx"));
    CHECK(at("var_rnn.proj.b") < at("gen_rnn.wx"));
    CHECK(at("gen_rnn.proj.b") < at("decoder.0.kernel"));
    CHECK(at("trunk.0.kernel") < at("disc_head.w"));
    CHECK(at("disc_head.b") < at("mi_head.0.kernel"));
}

TEST_CASE("shape flow through every stage, all variants") {
    for (Variant v : {Variant::vae, Variant::cvae, Variant::crvae}) {
        CAPTURE(variant_name(v));
        auto spec = NetworkSpec::tiny(v);
        Rng rng(13);
        auto bundle = build_bundle<float>(spec, rng);
        Tape<float> tape;
        BindContext<float> ctx(tape, bundle);
        Rng dr(14);
        auto x = tape.constant(dr.uniform_tensor<float>({3, 3, 8, 8}, -0.99, 0.99));

        auto f = encode(ctx, x);
        CHECK(tape.value(f).shape == Shape{3, 16, 2, 2});

        auto post = posterior(ctx, f);
        CHECK(tape.value(post.mu).shape == spec.posterior_shape(3));
        CHECK(tape.value(post.logvar).shape == spec.posterior_shape(3));

        auto noise = tape.constant(dr.normal_tensor<float>(spec.posterior_shape(3)));
        auto z = reparam_sample(post.mu, post.logvar, noise);
        auto u = generation(ctx, z);
        CHECK(tape.value(u).shape == spec.posterior_shape(3));

        auto img = decode_u(ctx, u);
        CHECK(tape.value(img).shape == Shape{3, 3, 8, 8});
        for (float p : tape.value(img).data) {
            CHECK(p >= -1.0f);
            CHECK(p <= 1.0f);
        }

        auto d = discriminate(ctx, x);
        CHECK(tape.value(d.logit).shape == Shape{3, 1});
        for (float p : tape.value(d.prob).data) {
            CHECK(p > 0.0f);
            CHECK(p < 1.0f);
        }

        auto uh = mi_predict(ctx, x);
        CHECK(tape.value(uh).shape == spec.posterior_shape(3));
    }
}

TEST_CASE("cvae generation transform is the identity") {
    auto spec = NetworkSpec::tiny(Variant::cvae);
    Rng rng(23);
    auto bundle = build_bundle<float>(spec, rng);
    Tape<float> tape;
    BindContext<float> ctx(tape, bundle);
    auto zv = rng.normal_tensor<float>(spec.posterior_shape(2));
    auto z = tape.constant(zv);
    auto u = generation(ctx, z);
    CHECK(u.id == z.id);  // literally the same node
}

TEST_CASE("encode rejects out-of-range pixels") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng rng(29);
    auto bundle = build_bundle<float>(spec, rng);
    Tape<float> tape;
    BindContext<float> ctx(tape, bundle);
    Tensor<float> bad({1, 3, 8, 8}, 0.0f);
    bad[5] = 1.7f;
    CHECK_THROWS_AS(encode(ctx, tape.constant(bad)), DomainError);
    Tensor<float> wrong({1, 3, 4, 4}, 0.0f);
    CHECK_THROWS_AS(encode(ctx, tape.constant(wrong)), ShapeError);
}

TEST_CASE("parameter counts at full-size defaults") {
    Rng rng(31);
    auto cr = build_bundle<float>(NetworkSpec::defaults(Variant::crvae), rng);
    Rng rng2(31);
    auto va = build_bundle<float>(NetworkSpec::defaults(Variant::vae), rng2);

    // Recurrent path with block length 64: 4*64*(64+64+1) + 64*64+64 weights.
    CHECK(param_count(cr, {"var_rnn"}) == 37184);
    CHECK(param_count(cr, {"gen_rnn"}) == 37184);
    CHECK(param_count(cr, {"var_rnn", "gen_rnn"}) == 74368);
    // Dense counterparts on the flat 512-long latent.
    CHECK(param_count(va, {"gen_fc"}) == 262656);
    CHECK(param_count(va, {"mean_head"}) == 1049088);
    CHECK(param_count(cr, {"mean_head"}) == 4128);
    CHECK(param_count(cr, {"encoder"}) == 240832);
    CHECK(param_count(cr, {"disc_head"}) == 2049);

    // The latent transforms are where the recurrent factorisation saves
    // parameters relative to dense maps.
    CHECK(param_count(cr, {"var_rnn", "gen_rnn"}) < param_count(va, {"gen_fc"}));

    CHECK(param_count(cr, std::vector<std::string>{}) == 0);
    CHECK(param_count(cr) > 0);
    CHECK_THROWS_AS(param_count(cr, {"gen_fc"}), ConfigError);   // vae-only group
    CHECK_THROWS_AS(param_count(cr, {"nonsense"}), ConfigError);
}

TEST_CASE("doubling the step count shrinks the recurrent paths") {
    std::int64_t prev = -1;
    for (int steps : {4, 8, 16, 32}) {
        NetworkSpec s = NetworkSpec::defaults(Variant::crvae);
        s.steps = steps;
        s.validate();
        Rng rng(37);
        auto b = build_bundle<float>(s, rng);
        const std::int64_t n = param_count(b, {"var_rnn", "gen_rnn"});
        if (prev >= 0) CHECK(n < prev);
        prev = n;
    }
}

TEST_CASE("grad groups: only requested groups collect gradients") {
    auto spec = NetworkSpec::tiny(Variant::crvae);
    Rng rng(41);
    auto bundle = build_bundle<float>(spec, rng);
    Tape<float> tape;
    BindContext<float> ctx(tape, bundle, {"decoder"});
    auto z = tape.constant(rng.normal_tensor<float>(spec.posterior_shape(2)));
    auto img = decode(ctx, z);  // runs gen_rnn (constant) + decoder (grad)
    tape.backward(mean(square(img)));

    int grad_params = 0;
    ctx.for_each_grad_param([&](const std::string& g, const std::string&, Parameter<float>&,
                                Val<float> v) {
        CHECK(g == "decoder");
        const Tensor<float>& gv = tape.grad(v);
        bool nonzero = false;
        for (float x : gv.data) nonzero |= (x != 0.0f);
        CHECK(nonzero);
        ++grad_params;
    });
    CHECK(grad_params == 6);  // three decoder stages, kernel+bias each

    CHECK_THROWS_AS(BindContext<float>(tape, bundle, {"gen_fc"}), ConfigError);
}

TEST_CASE("exhaustive finite differences through the full model, per variant") {
    // Every parameter of a micro-sized model plus the input image and noise
    // probe the complete pipeline: encode -> posterior -> sample -> transform
    // -> decode -> reconstruction + KL + realness score + MI prediction.
    for (Variant v : {Variant::vae, Variant::cvae, Variant::crvae}) {
        CAPTURE(variant_name(v));
        NetworkSpec spec = micro(v);
        Rng rng(47);
        auto bundle = build_bundle<double>(spec, rng);

        std::vector<Tensor<double>> inputs;
        bundle.for_each_param([&](const std::string&, const std::string&, Parameter<double>& p) {
            inputs.push_back(p.value);
        });
        const std::size_t n_params = inputs.size();
        Rng dr(48);
        inputs.push_back(dr.uniform_tensor<double>({2, 2, 4, 4}, -0.9, 0.9));  // image
        inputs.push_back(dr.normal_tensor<double>(spec.posterior_shape(2)));   // noise

        auto rep = grad_check(
            [&spec, &bundle, n_params](Tape<double>& tape, const std::vector<Val<double>>& in) {
                std::vector<Val<double>> handles(in.begin(), in.begin() + n_params);
                BindContext<double> ctx(tape, bundle, handles);
                Val<double> x = in[n_params];
                Val<double> noise = in[n_params + 1];

                auto post = posterior(ctx, encode(ctx, x));
                auto z = reparam_sample(post.mu, post.logvar, noise);
                auto u = generation(ctx, z);
                auto xhat = decode_u(ctx, u);
                auto kl = kl_weighted(post.mu, post.logvar,
                                      KLWeights::head_tail(spec.effective_steps(), 0.31, 0.17));
                auto adv = mean(softplus(neg(discriminate(ctx, xhat).logit)));
                auto mi = mse(mi_predict(ctx, xhat), u);
                return add(add(mse(xhat, x), scale(kl.total, 0.05)),
                           add(scale(adv, 0.11), scale(mi, 0.07)));
            },
            std::move(inputs));
        CAPTURE(rep.max_rel_error);
        CAPTURE(rep.input_index);
        CHECK(rep.max_rel_error < 1e-4);
    }
}
