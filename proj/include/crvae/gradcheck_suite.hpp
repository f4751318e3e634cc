#pragma once

// Named registry of finite-difference gradient checks: one case per op family
// plus the composite paths (recurrence, sampling + KL, adversarial terms,
// whole models, the completion objective). The CLI `gradcheck` command and the
// verification suite both run these; everything is double precision.

#include <chrono>
#include <iomanip>
#include <ostream>

#include "crvae/gradcheck.hpp"
#include "crvae/objectives.hpp"

namespace crvae {

struct GradCheckCase {
    std::string name;
    std::function<GradCheckReport()> run;
};

namespace detail {

// Distinct per-element weights expose misrouted or transposed gradients that
// a plain sum would silently accept.
inline Val<double> weighted_sum(Tape<double>& tape, Val<double> v, std::uint64_t weight_seed) {
    Rng wr(weight_seed);
    return sum(mul(v, tape.constant(wr.uniform_tensor<double>(v.shape(), 0.5, 1.5))));
}

// Push every entry at least `margin` away from `kink` so central differences
// never straddle a non-differentiable point.
inline Tensor<double> away_from(Tensor<double> t, double kink, double margin) {
    for (auto& v : t.data) {
        if (std::abs(v - kink) < margin) v = kink + (v >= kink ? margin : -margin);
    }
    return t;
}

inline Tensor<double> draw(std::uint64_t seed, Shape s, double lo, double hi) {
    Rng r(seed);
    return r.uniform_tensor<double>(std::move(s), lo, hi);
}

// Same micro geometry the model-level checks use: small enough for exhaustive
// probing of every parameter.
inline NetworkSpec micro_spec(Variant v) {
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

}  // namespace detail

inline std::vector<GradCheckCase> gradcheck_registry() {
    using detail::away_from;
    using detail::draw;
    using detail::weighted_sum;
    std::vector<GradCheckCase> cases;
    auto put = [&cases](std::string name, std::function<GradCheckReport()> run) {
        cases.push_back({std::move(name), std::move(run)});
    };

    // ---- elementwise --------------------------------------------------------
    put("add", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, add(in[0], in[1]), 1);
            },
            {draw(101, {2, 3}, -1, 1), draw(102, {2, 3}, -1, 1)});
    });
    put("sub", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, sub(in[0], in[1]), 2);
            },
            {draw(103, {2, 3}, -1, 1), draw(104, {2, 3}, -1, 1)});
    });
    put("mul", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, mul(in[0], in[1]), 3);
            },
            {draw(105, {2, 3}, -1, 1), draw(106, {2, 3}, -1, 1)});
    });
    put("neg_scale_addscalar", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, add_scalar(scale(neg(in[0]), 1.7), 0.3), 4);
            },
            {draw(107, {2, 3}, -1, 1)});
    });
    put("exp", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, crvae::exp(in[0]), 5);
            },
            {draw(108, {2, 3}, -1, 1)});
    });
    put("log", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, crvae::log(in[0]), 6);
            },
            {draw(109, {2, 3}, 0.5, 2.0)});
    });
    put("tanh", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, crvae::tanh(in[0]), 7);
            },
            {draw(110, {2, 3}, -2, 2)});
    });
    put("logistic", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, logistic(in[0]), 8);
            },
            {draw(111, {2, 3}, -2, 2)});
    });
    put("softplus", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, softplus(in[0]), 9);
            },
            {draw(112, {2, 3}, -2, 2)});
    });
    put("relu", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, relu(in[0]), 10);
            },
            {away_from(draw(113, {2, 3}, -1, 1), 0.0, 0.05)});
    });
    put("leaky_relu", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, leaky_relu(in[0], 0.1), 11);
            },
            {away_from(draw(114, {2, 3}, -1, 1), 0.0, 0.05)});
    });
    put("square", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, square(in[0]), 12);
            },
            {draw(115, {2, 3}, -1, 1)});
    });
    put("clamp", [] {
        Tensor<double> x = away_from(away_from(draw(116, {2, 3}, -1, 1), -0.5, 0.05), 0.5, 0.05);
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, clamp(in[0], -0.5, 0.5), 13);
            },
            {std::move(x)});
    });

    // ---- reductions ---------------------------------------------------------
    put("sum", [] {
        return grad_check(
            [](Tape<double>&, const std::vector<Val<double>>& in) { return sum(square(in[0])); },
            {draw(117, {3, 4}, -1, 1)});
    });
    put("mean", [] {
        return grad_check(
            [](Tape<double>&, const std::vector<Val<double>>& in) { return mean(square(in[0])); },
            {draw(118, {3, 4}, -1, 1)});
    });
    put("mse", [] {
        return grad_check(
            [](Tape<double>&, const std::vector<Val<double>>& in) { return mse(in[0], in[1]); },
            {draw(119, {2, 5}, -1, 1), draw(120, {2, 5}, -1, 1)});
    });

    // ---- structure ----------------------------------------------------------
    put("reshape_slice_concat", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                Val<double> r = reshape(in[0], {3, 4});
                Val<double> a = slice(r, 1, 0, 2);
                Val<double> b = slice(r, 1, 2, 2);
                return weighted_sum(t, concat({b, a, mul(a, b)}, 0), 14);
            },
            {draw(121, {2, 6}, -1, 1)});
    });

    // ---- dense and conv layers ----------------------------------------------
    put("linear", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, linear(in[0], in[1], in[2]), 15);
            },
            {draw(122, {3, 4}, -1, 1), draw(123, {2, 4}, -1, 1), draw(124, {2}, -1, 1)});
    });
    put("bias_nchw", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, bias_nchw(in[0], in[1]), 16);
            },
            {draw(125, {2, 3, 2, 2}, -1, 1), draw(126, {3}, -1, 1)});
    });
    put("conv2d", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, conv2d(in[0], in[1], 2, 1), 17);
            },
            {draw(127, {2, 2, 5, 5}, -1, 1), draw(128, {3, 2, 3, 3}, -0.5, 0.5)});
    });
    put("deconv2d", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                return weighted_sum(t, deconv2d(in[0], in[1], 2, 1), 18);
            },
            {draw(129, {2, 3, 3, 3}, -1, 1), draw(130, {3, 2, 4, 4}, -0.5, 0.5)});
    });

    // ---- recurrence ---------------------------------------------------------
    put("lstm_cell", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                LstmState<double> st{in[1], in[2]};
                st = lstm_cell(in[0], st, in[3], in[4], in[5]);
                return add(weighted_sum(t, st.h, 19), weighted_sum(t, st.c, 20));
            },
            {draw(131, {2, 3}, -1, 1), draw(132, {2, 4}, -1, 1), draw(133, {2, 4}, -1, 1),
             draw(134, {16, 3}, -0.5, 0.5), draw(135, {16, 4}, -0.5, 0.5),
             draw(136, {16}, -0.5, 0.5)});
    });
    put("recurrent_transform", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                RecurrentVals<double> p{in[1], in[2], in[3], in[4], in[5]};
                return weighted_sum(t, recurrent_transform(in[0], 2, p), 21);
            },
            {draw(137, {2, 4, 2, 2}, -1, 1), draw(138, {32, 8}, -0.4, 0.4),
             draw(139, {32, 8}, -0.4, 0.4), draw(140, {32}, -0.4, 0.4),
             draw(141, {8, 8}, -0.4, 0.4), draw(142, {8}, -0.4, 0.4)});
    });

    // ---- sampling, KL, adversarial ------------------------------------------
    put("reparam_kl", [] {
        return grad_check(
            [](Tape<double>& t, const std::vector<Val<double>>& in) {
                Val<double> z = reparam_sample(in[0], in[1], t.constant(draw(143, {2, 4, 2, 2}, -1, 1)));
                auto kl = kl_weighted(in[0], in[1], KLWeights::head_tail(2, 0.4, 0.2));
                return add(weighted_sum(t, z, 22), kl.total);
            },
            {draw(144, {2, 4, 2, 2}, -1.5, 1.5), draw(145, {2, 4, 2, 2}, -2, 2)});
    });
    put("adversarial_losses", [] {
        return grad_check(
            [](Tape<double>&, const std::vector<Val<double>>& in) {
                auto adv = adversarial_losses(in[0], in[1]);
                return add(adv.disc_loss, scale(adv.gen_loss, 0.7));
            },
            {draw(146, {4, 1}, -2, 2), draw(147, {4, 1}, -2, 2)});
    });

    // ---- whole models -------------------------------------------------------
    for (Variant v : {Variant::vae, Variant::cvae, Variant::crvae}) {
        put(std::string("model_") + variant_name(v), [v]() {
            NetworkSpec spec = detail::micro_spec(v);
            Rng rng(47);
            auto bundle = build_bundle<double>(spec, rng);
            std::vector<Tensor<double>> inputs;
            bundle.for_each_param([&](const std::string&, const std::string&, Parameter<double>& p) {
                inputs.push_back(p.value);
            });
            const std::size_t n_params = inputs.size();
            Rng dr(48);
            inputs.push_back(dr.uniform_tensor<double>({2, 2, 4, 4}, -0.9, 0.9));
            inputs.push_back(dr.normal_tensor<double>(spec.posterior_shape(2)));
            return grad_check(
                [&spec, &bundle, n_params](Tape<double>& tape, const std::vector<Val<double>>& in) {
                    std::vector<Val<double>> handles(in.begin(), in.begin() + n_params);
                    BindContext<double> ctx(tape, bundle, handles);
                    Val<double> x = in[n_params];
                    auto post = posterior(ctx, encode(ctx, x));
                    auto z = reparam_sample(post.mu, post.logvar, in[n_params + 1]);
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
        });
    }

    // ---- completion objective ----------------------------------------------
    put("completion_objective", [] {
        NetworkSpec spec = detail::micro_spec(Variant::crvae);
        Rng rng(61);
        auto bundle = build_bundle<double>(spec, rng);
        Tensor<double> x = rng.uniform_tensor<double>({1, 2, 4, 4}, -0.8, 0.8);
        Tensor<double> mask(Shape{1, 2, 4, 4}, 1.0);
        for (int h = 1; h < 3; ++h) {
            for (int w = 1; w < 3; ++w) mask.at4(0, 0, h, w) = mask.at4(0, 1, h, w) = 0.0;
        }
        Rng zr(62);
        return grad_check(
            [&](Tape<double>& tape, const std::vector<Val<double>>& in) {
                BindContext<double> ctx(tape, bundle);
                Val<double> xhat = decode(ctx, in[0]);
                Val<double> data =
                    mean(square(mul(sub(xhat, tape.constant(x)), tape.constant(mask))));
                Val<double> prior = scale(sum(square(in[0])), 0.5 * 1e-5);
                Val<double> realism = scale(mean(softplus(discriminate(ctx, xhat).logit)), -0.003);
                return add(add(data, prior), realism);
            },
            {zr.normal_tensor<double>(spec.posterior_shape(1))});
    });

    return cases;
}

struct GradSuiteOutcome {
    int total = 0;
    int passed = 0;
    double worst = 0.0;
    std::string worst_case;
    double seconds = 0.0;
    bool ok() const { return total > 0 && passed == total; }
};

// Runs every registered case (or the one named by `only`), printing one line
// per case. Tolerance applies to the guarded relative error.
inline GradSuiteOutcome run_gradcheck_suite(std::ostream& os, const std::string& only = "",
                                            double tol = 1e-4) {
    auto cases = gradcheck_registry();
    if (!only.empty()) {
        std::vector<GradCheckCase> filtered;
        for (auto& c : cases) {
            if (c.name == only) filtered.push_back(std::move(c));
        }
        if (filtered.empty()) throw ConfigError("gradcheck: no case named '" + only + "'");
        cases = std::move(filtered);
    }

    GradSuiteOutcome out;
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& c : cases) {
        GradCheckReport rep = c.run();
        const bool pass = rep.max_rel_error < tol;
        out.total += 1;
        out.passed += pass ? 1 : 0;
        if (rep.max_rel_error > out.worst) {
            out.worst = rep.max_rel_error;
            out.worst_case = c.name;
        }
        os << (pass ? "pass" : "FAIL") << "  " << std::left << std::setw(24) << c.name
           << "  max_rel_err=" << std::scientific << std::setprecision(3) << rep.max_rel_error
           << std::defaultfloat << "  probes=" << rep.evaluated << "\n";
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    os << (out.ok() ? "OK" : "FAILED") << ": " << out.passed << "/" << out.total
       << " gradient cases within " << tol << " (worst " << std::scientific << std::setprecision(3)
       << out.worst << std::defaultfloat << " in " << out.worst_case << ", "
       << std::setprecision(2) << std::fixed << out.seconds << std::defaultfloat << " s)\n";
    return out;
}

}  // namespace crvae
