// End-to-end verification of the pinned desk-scale experiments. Ten numbered
// checks cover the gradient suite, KL oracles, latent causality, training
// descent, adversarial mechanics, the mutual-information regulariser,
// completion, parameter accounting and bit-level reproducibility. One
// PASS/FAIL line is printed per check; the exit code is 0 only if all pass.
//
// Long runs go through the installed command-line binary (path injected via
// CRVAE_BIN) so the checks exercise the same entry points a user would.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "crvae/checkpoint.hpp"
#include "crvae/corpus.hpp"
#include "crvae/dataset.hpp"
#include "crvae/gradcheck_suite.hpp"
#include "crvae/metrics.hpp"
#include "crvae/tasks.hpp"
#include "crvae/trainer.hpp"

#ifndef CRVAE_BIN
#error "CRVAE_BIN (path to the command-line binary) must be defined"
#endif

using namespace crvae;
namespace fs = std::filesystem;

namespace {

//======================================================================
// Shared state and helpers
//======================================================================

struct Check {
    bool pass = false;
    std::string detail = "not run";
};

std::array<Check, 11> g_checks;  // indexed 1..10
fs::path g_work;                 // scratch directory for all artifacts

// Reference value for check 7: unweighted mutual-information loss averaged
// over the last ten of 500 steps with the pinned settings below. Frozen from
// an observed run; later builds must land within +/-20% of it.
constexpr double kPinnedMiLate = 0.1002;
constexpr double kPinnedMiBand = 0.20;

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << v;
    return ss.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code = -1;
    std::string out, err;
};

// Runs the command-line binary with the given arguments, capturing exit code
// and both streams.
CliResult run_cli(const std::string& args) {
    static int seq = 0;
    const fs::path so = g_work / ("cli_" + std::to_string(seq) + ".out");
    const fs::path se = g_work / ("cli_" + std::to_string(seq) + ".err");
    ++seq;
    const std::string cmd =
        std::string(CRVAE_BIN) + " " + args + " > " + so.string() + " 2> " + se.string();
    const int raw = std::system(cmd.c_str());
    if (raw == -1) throw std::runtime_error("std::system failed for: " + cmd);
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -2;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

// Mean of one loss column over metrics rows with step in [lo, hi].
double column_mean(const std::vector<MetricsRow>& rows, int lo, int hi,
                   double LossBreakdown::*field) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.step >= lo && r.step <= hi) {
            acc += r.losses.*field;
            ++n;
        }
    if (n == 0) throw std::runtime_error("no metrics rows in requested step range");
    return acc / n;
}

// Centred occlusion mask: zeros over a square covering ~25% of the area.
Tensor<float> quarter_mask(const NetworkSpec& net) {
    const int bh = static_cast<int>(std::lround(net.image_h * 0.5));
    const int bw = static_cast<int>(std::lround(net.image_w * 0.5));
    Tensor<float> m(Shape{1, net.image_c, net.image_h, net.image_w}, 1.0f);
    const int y0 = (net.image_h - bh) / 2, x0 = (net.image_w - bw) / 2;
    for (int c = 0; c < net.image_c; ++c)
        for (int y = y0; y < y0 + bh; ++y)
            for (int x = x0; x < x0 + bw; ++x)
                m.data[static_cast<std::size_t>((c * net.image_h + y) * net.image_w + x)] = 0.0f;
    return m;
}

Tensor<float> dataset_row(const Dataset& ds, int i) {
    const int C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    Tensor<float> x(Shape{1, C, H, W});
    const std::size_t n = x.data.size();
    std::copy(ds.images.data.begin() + static_cast<std::ptrdiff_t>(i * n),
              ds.images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n), x.data.begin());
    return x;
}

void run_check(int idx, const std::string& label, const std::function<Check()>& fn) {
    std::cerr << "[acceptance] criterion " << idx << " (" << label << ")...\n";
    const auto t0 = std::chrono::steady_clock::now();
    try {
        g_checks[static_cast<std::size_t>(idx)] = fn();
    } catch (const std::exception& e) {
        g_checks[static_cast<std::size_t>(idx)] = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "[acceptance]   -> " << (g_checks[static_cast<std::size_t>(idx)].pass ? "pass" : "FAIL")
              << " in " << fmt(secs, 3) << " s\n";
}

//======================================================================
// 1. Finite-difference gradient suite
//======================================================================

Check check_gradients() {
    Check ck;
    std::ostringstream log;
    const GradSuiteOutcome out = run_gradcheck_suite(log);
    std::cerr << log.str();
    ck.pass = out.ok() && out.seconds < 120.0;
    ck.detail = std::to_string(out.passed) + "/" + std::to_string(out.total) +
                " operations, worst rel err " + fmt(out.worst, 3) + " (" + out.worst_case +
                "), " + fmt(out.seconds, 3) + " s";
    return ck;
}

//======================================================================
// 2. Gaussian KL against Monte-Carlo estimation
//======================================================================

// Draws (mean, variance) pairs from [-2,2] x [0.05,4] and compares the graph
// KL against a 1e6-sample Monte-Carlo estimate of E_q[log q - log p]. Pairs
// whose true KL falls below 0.1 nat are redrawn: under that the 1% relative
// band drops beneath the sampler's own noise floor.
Check check_kl_monte_carlo() {
    Check ck;
    Rng rng(4242);
    int done = 0;
    double worst = 0.0;
    while (done < 20) {
        const double mu = rng.uniform(-2.0, 2.0);
        const double s2 = rng.uniform(0.05, 4.0);
        const double closed = 0.5 * (mu * mu + s2 - std::log(s2) - 1.0);
        if (closed < 0.1) continue;

        Tape<double> tape;
        const Tensor<double> mt(Shape{1, 1, 1, 1}, mu);
        const Tensor<double> lt(Shape{1, 1, 1, 1}, std::log(s2));
        auto kl = kl_weighted(tape.constant(mt), tape.constant(lt), KLWeights::uniform(1));
        const double impl = tape.value(kl.total).data[0];
        if (std::abs(impl - closed) > 1e-9 * std::max(1.0, closed)) {
            ck.detail = "graph KL " + fmt(impl, 10) + " disagrees with closed form " +
                        fmt(closed, 10);
            return ck;
        }

        const double sd = std::sqrt(s2);
        double acc = 0.0;
        for (int i = 0; i < 1000000; ++i) {
            const double x = mu + sd * rng.normal();
            acc += 0.5 * x * x - 0.5 * std::log(s2) - 0.5 * (x - mu) * (x - mu) / s2;
        }
        const double mc = acc / 1e6;
        worst = std::max(worst, std::abs(impl - mc) / closed);
        ++done;
    }
    ck.pass = worst <= 0.01;
    ck.detail = "20 pairs x 1e6 draws, worst rel gap " + fmt(worst, 3);
    return ck;
}

//======================================================================
// 3. Weighted KL: all-ones equivalence and linearity in the weights
//======================================================================

Check check_kl_weighting() {
    Check ck;
    Rng rng(333);
    double worst_direct = 0.0, worst_linear = 0.0;
    for (int cse = 0; cse < 100; ++cse) {
        const int steps = 2 + static_cast<int>(rng.below(4));
        const int per = 1 + static_cast<int>(rng.below(3));
        const int N = 1 + static_cast<int>(rng.below(3));
        const Shape s{N, steps * per, 2, 2};
        const Tensor<double> mu = rng.normal_tensor<double>(s);
        const Tensor<double> lv = rng.uniform_tensor<double>(s, -3.0, 1.0);

        Tape<double> tape;
        auto m = tape.constant(mu);
        auto l = tape.constant(lv);
        auto ones = kl_weighted(m, l, KLWeights::uniform(steps));

        double direct = 0.0;
        for (std::size_t i = 0; i < mu.data.size(); ++i)
            direct += 0.5 * (mu.data[i] * mu.data[i] + std::exp(lv.data[i]) - lv.data[i] - 1.0);
        direct /= N;
        worst_direct = std::max(
            worst_direct, std::abs(tape.value(ones.total).data[0] - direct) / std::abs(direct));

        KLWeights wts = KLWeights::uniform(steps);
        for (auto& w : wts.w) w = rng.uniform(0.0, 2.0);
        auto mixed = kl_weighted(m, l, wts);
        double manual = 0.0;
        for (int t = 0; t < steps; ++t)
            manual += wts.w[static_cast<std::size_t>(t)] *
                      tape.value(ones.per_step[static_cast<std::size_t>(t)]).data[0];
        worst_linear = std::max(
            worst_linear, std::abs(tape.value(mixed.total).data[0] - manual) /
                              std::max(1.0, std::abs(manual)));
    }
    ck.pass = worst_direct <= 1e-6 && worst_linear <= 1e-6;
    ck.detail = "100 cases, all-ones gap " + fmt(worst_direct, 3) + ", linearity gap " +
                fmt(worst_linear, 3);
    return ck;
}

//======================================================================
// 4. Recurrence causality: later blocks cannot reach earlier outputs
//======================================================================

Check check_causality() {
    Check ck;
    NetworkSpec spec = NetworkSpec::tiny();
    spec.steps = 4;
    spec.validate();
    Rng seed_rng(99);
    auto bundle = build_bundle<float>(spec, seed_rng);

    const int N = 2, T = spec.steps;
    const int bc = spec.latent_c / T;
    const int hw = spec.latent_h * spec.latent_w;

    auto run_path = [&](LstmPath<float>& path, const Tensor<float>& z) {
        Tape<float> tape;
        BindContext<float> ctx(tape, bundle);
        auto out = recurrent_transform(tape.constant(z), T, detail::bind_lstm(ctx, path));
        return tape.value(out);
    };

    Rng rng(412);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor<float> z = rng.normal_tensor<float>(spec.posterior_shape(N));
        const int bt = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T - 1)));
        Tensor<float> z2 = z;
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < bc * hw; ++k) {
                const std::size_t at = static_cast<std::size_t>(
                    (n * spec.latent_c + bt * bc) * hw + k);
                z2.data[at] += static_cast<float>(rng.uniform(-1.0, 1.0));
            }

        for (LstmPath<float>* path : {&bundle.gen_rnn, &bundle.var_rnn}) {
            const Tensor<float> a = run_path(*path, z);
            const Tensor<float> b = run_path(*path, z2);
            const std::size_t prefix = static_cast<std::size_t>(bt * bc * hw);
            for (int n = 0; n < N; ++n) {
                const std::size_t base = static_cast<std::size_t>(n * spec.latent_c * hw);
                if (std::memcmp(a.data.data() + base, b.data.data() + base,
                                prefix * sizeof(float)) != 0) {
                    ck.detail = "prefix changed at trial " + std::to_string(trial) +
                                ", block " + std::to_string(bt);
                    return ck;
                }
                ++checked;
            }
        }
    }
    ck.pass = true;
    ck.detail = "50 perturbation trials, " + std::to_string(checked) +
                " prefix slices bit-identical on both recurrences";
    return ck;
}

//======================================================================
// 9. Parameter accounting of the recurrent latent transform
//======================================================================

Check check_param_counts() {
    Check ck;
    Rng r1(1), r2(1);
    auto rb = build_bundle<float>(NetworkSpec::defaults(Variant::crvae), r1);
    auto vb = build_bundle<float>(NetworkSpec::defaults(Variant::vae), r2);
    const std::int64_t rec = param_count(rb, {"var_rnn", "gen_rnn"});
    const std::int64_t fc = param_count(vb, {"gen_fc"});
    bool shrinking = true;
    for (int t : {2, 4, 8, 16}) {
        NetworkSpec a = NetworkSpec::defaults(Variant::crvae);
        NetworkSpec b = a;
        a.steps = t;
        b.steps = 2 * t;
        a.validate();
        b.validate();
        Rng ra(1), rb2(1);
        const auto ca = param_count(build_bundle<float>(a, ra), {"var_rnn", "gen_rnn"});
        const auto cb = param_count(build_bundle<float>(b, rb2), {"var_rnn", "gen_rnn"});
        if (!(cb < ca)) shrinking = false;
    }
    ck.pass = rec < fc && shrinking;
    ck.detail = "recurrent " + std::to_string(rec) + " < dense " + std::to_string(fc) +
                " params; doubling the step count shrinks the recurrence at T=2,4,8,16";
    return ck;
}

//======================================================================
// 5 + 10. Pinned training runs via the command line
//======================================================================

// Shared artifact paths filled by check 5 and reused by 6/7/8/10.
struct RunArtifacts {
    fs::path corpus;
    fs::path ck_a, ck_b, csv_a, csv_b;  // duplicate runs of the pinned command
    fs::path vae_csv;
    double crvae_minutes = 0.0;
    bool ready = false;
} g_runs;

Check check_training_descent() {
    Check ck;
    g_runs.corpus = g_work / "corpus";
    g_runs.ck_a = g_work / "c5_a.ckpt";
    g_runs.ck_b = g_work / "c5_b.ckpt";
    g_runs.csv_a = g_work / "c5_a.csv";
    g_runs.csv_b = g_work / "c5_b.csv";
    g_runs.vae_csv = g_work / "vae.csv";

    CliResult r = run_cli("gen-data --out " + g_runs.corpus.string() +
                          " --count 2000 --size 32 --seed 7");
    if (r.code != 0) {
        ck.detail = "corpus generation failed: " + r.err;
        return ck;
    }

    const std::string pinned =
        "train --data " + g_runs.corpus.string() +
        " --preset small --variant crvae --steps 2000 --batch 32"
        " --beta 0 --kappa 0 --lr 3e-4 --seed 7 --log-every 500";

    const auto t0 = std::chrono::steady_clock::now();
    r = run_cli(pinned + " --out " + g_runs.ck_a.string() + " --metrics " + g_runs.csv_a.string());
    g_runs.crvae_minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    if (r.code != 0) {
        ck.detail = "training run failed: " + r.err;
        return ck;
    }

    std::cerr << "[acceptance]   duplicate run for the reproducibility check...\n";
    r = run_cli(pinned + " --out " + g_runs.ck_b.string() + " --metrics " + g_runs.csv_b.string());
    if (r.code != 0) {
        ck.detail = "duplicate training run failed: " + r.err;
        return ck;
    }

    std::cerr << "[acceptance]   plain-VAE comparison run...\n";
    r = run_cli("train --data " + g_runs.corpus.string() +
                " --preset small --variant vae --steps 2000 --batch 32"
                " --beta 0 --kappa 0 --lr 3e-4 --seed 7 --log-every 500 --metrics " +
                g_runs.vae_csv.string());
    if (r.code != 0) {
        ck.detail = "plain-VAE run failed: " + r.err;
        return ck;
    }
    g_runs.ready = true;

    const auto rows = read_metrics(g_runs.csv_a.string());
    const double early = column_mean(rows, 1, 10, &LossBreakdown::recon);
    const double late = column_mean(rows, 1951, 2000, &LossBreakdown::recon);
    const auto vrows = read_metrics(g_runs.vae_csv.string());
    const double vearly = column_mean(vrows, 1, 10, &LossBreakdown::recon);
    const double vlate = column_mean(vrows, 1951, 2000, &LossBreakdown::recon);

    const double ratio = late / early, vratio = vlate / vearly;
    ck.pass = ratio < 0.25 && vratio < 0.40 && g_runs.crvae_minutes < 20.0;
    ck.detail = "recon ratio " + fmt(ratio, 3) + " (<0.25), plain-VAE " + fmt(vratio, 3) +
                " (<0.40), " + fmt(g_runs.crvae_minutes, 3) + " min (<20)";
    return ck;
}

//======================================================================
// 6. Adversarial phase mechanics over 500 live steps
//======================================================================

Check check_adversarial_mechanics() {
    Check ck;
    if (!g_runs.ready) {
        ck.detail = "skipped: training corpus unavailable";
        return ck;
    }
    TrainConfig cfg;
    cfg.net = NetworkSpec::small();
    cfg.coeffs.beta = 0.0125;
    cfg.coeffs.kappa = 0.0;  // isolates the adversarial phase
    cfg.batch = 32;
    cfg.max_steps = 500;
    cfg.seed = 21;
    cfg.validate();

    Dataset ds = load_dataset(g_runs.corpus.string(), cfg.net.out_act);
    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    auto bundle = build_bundle<float>(cfg.net, init_rng);
    Batcher batcher(ds, cfg.batch, root.fork(2), false);
    Rng steprng = root.fork(3);

    std::uint64_t trunk_h = param_group_hash(bundle, "trunk");
    std::uint64_t head_h = param_group_hash(bundle, "disc_head");
    int skips = 0;
    bool mix_ok = true, frozen_ok = true;
    double worst_ident = 0.0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        const StepInfo info = train_step(bundle, batcher.next(), cfg.coeffs, cfg.lr, steprng);
        if (info.n_real != 16 || info.n_generated != 8 || info.n_reconstructed != 8)
            mix_ok = false;
        const LossBreakdown& b = info.losses;
        const double manual = b.recon + cfg.coeffs.alpha1 * b.kl_head +
                              cfg.coeffs.alpha2 * b.kl_tail + cfg.coeffs.beta * b.adv_gen +
                              cfg.coeffs.kappa * b.mi;
        worst_ident = std::max(
            worst_ident, std::abs(manual - b.total_gen) / std::max(1.0, std::abs(b.total_gen)));
        const std::uint64_t nt = param_group_hash(bundle, "trunk");
        const std::uint64_t nh = param_group_hash(bundle, "disc_head");
        if (b.disc_skipped) {
            ++skips;
            if (nt != trunk_h || nh != head_h) frozen_ok = false;
        }
        trunk_h = nt;
        head_h = nh;
        if (step % 100 == 0) std::cerr << "[acceptance]   step " << step << "/500\n";
    }
    ck.pass = mix_ok && frozen_ok && worst_ident <= 1e-6 && skips >= 1;
    ck.detail = std::to_string(skips) +
                " skipped discriminator updates left its weights bit-frozen; batch mix 16/8/8 "
                "every step; loss identity gap " +
                fmt(worst_ident, 3);
    return ck;
}

//======================================================================
// 7. Mutual-information regulariser drives its loss down
//======================================================================

// The information head and its shared trunk start untrained in the base
// checkpoint (they were inactive there), while the generator's transformed
// code u already has its trained scale, so the predictor's error starts high
// and falls as it learns to recover u. The adversarial phase stays off: it
// retargets the shared trunk every step and masks the predictor's progress.
Check check_mi_regulariser() {
    Check ck;
    if (!g_runs.ready) {
        ck.detail = "skipped: training corpus unavailable";
        return ck;
    }
    const fs::path csv = g_work / "mi.csv";
    CliResult r = run_cli("train --data " + g_runs.corpus.string() + " --init " +
                          g_runs.ck_a.string() +
                          " --steps 500 --batch 32 --beta 0 --kappa 0.02"
                          " --lr 1e-3 --seed 11 --log-every 250 --metrics " +
                          csv.string());
    if (r.code != 0) {
        ck.detail = "run failed: " + r.err;
        return ck;
    }
    const auto rows = read_metrics(csv.string());
    const double early = column_mean(rows, 1, 10, &LossBreakdown::mi);
    const double late = column_mean(rows, 491, 500, &LossBreakdown::mi);
    const double ratio = late / early;
    const bool pinned_ok =
        kPinnedMiLate > 0.0 && std::abs(late - kPinnedMiLate) <= kPinnedMiBand * kPinnedMiLate;
    ck.pass = ratio < 0.5 && pinned_ok;
    ck.detail = "late/early " + fmt(late, 4) + "/" + fmt(early, 4) + " = " + fmt(ratio, 3) +
                " (<0.5); pinned " + fmt(kPinnedMiLate, 4) + " +/-20%";
    return ck;
}

//======================================================================
// 8. Optimisation-based completion on an adversarially trained model
//======================================================================

Check check_completion() {
    Check ck;
    if (!g_runs.ready) {
        ck.detail = "skipped: base checkpoint unavailable";
        return ck;
    }
    const fs::path ckpt = g_work / "c8.ckpt";
    std::cerr << "[acceptance]   adversarial continuation run...\n";
    CliResult r = run_cli("train --data " + g_runs.corpus.string() + " --init " +
                          g_runs.ck_a.string() +
                          " --steps 1000 --batch 32 --beta 0.0125 --kappa 0.02"
                          " --lr 3e-4 --seed 13 --out " +
                          ckpt.string());
    if (r.code != 0) {
        ck.detail = "continuation run failed: " + r.err;
        return ck;
    }

    Checkpoint ck8 = load_checkpoint(ckpt.string());
    if (!ck8.bundle.disc_trained) {
        ck.detail = "continuation never trained the discriminator";
        return ck;
    }

    CorpusOptions co;
    co.dir = (g_work / "completion_set").string();
    co.count = 20;
    co.size = 32;
    co.seed = 8888;
    generate_corpus(co);
    const Dataset ds = load_dataset(co.dir, ck8.bundle.spec.out_act);

    const Tensor<float> mask = quarter_mask(ck8.bundle.spec);
    int improved = 0;
    double mean_drop = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Tensor<float> x = dataset_row(ds, i);
        CompletionSpec<float> cs;
        cs.mask = mask;
        // Classic inversion protocol: a seeded prior draw is the iteration-0
        // state, so the baseline carries no information about the hole.
        cs.init_from_posterior = false;
        cs.seed = 1000 + i;
        const CompletionResult<float> res = complete(ck8.bundle, x, cs);
        const double before = masked_region_mse(res.initial_image, x, mask);
        const double after = masked_region_mse(res.image, x, mask);
        if (after < before) ++improved;
        mean_drop += before - after;
        if ((i + 1) % 5 == 0) std::cerr << "[acceptance]   completed " << i + 1 << "/20\n";
    }
    mean_drop /= 20.0;
    ck.pass = improved >= 18;
    ck.detail = std::to_string(improved) +
                "/20 occlusions ended with lower hidden-region error (need >=18); mean drop " +
                fmt(mean_drop, 4);
    return ck;
}

//======================================================================
// 10. Bit-level reproducibility and command-line contract
//======================================================================

Check check_reproducibility() {
    Check ck;
    if (!g_runs.ready) {
        ck.detail = "skipped: pinned runs unavailable";
        return ck;
    }
    std::vector<std::string> problems;

    // (a) identical checkpoints and metrics from two runs of the same command
    if (file_hash(g_runs.ck_a.string()) != file_hash(g_runs.ck_b.string()))
        problems.push_back("duplicate runs produced different checkpoints");
    if (file_hash(g_runs.csv_a.string()) != file_hash(g_runs.csv_b.string()))
        problems.push_back("duplicate runs produced different metrics");

    // (b) save(load(x)) is byte-identical
    {
        const Checkpoint c = load_checkpoint(g_runs.ck_a.string());
        const fs::path copy = g_work / "resaved.ckpt";
        save_checkpoint(copy.string(), c.config, c.bundle, c.has_optimizer);
        if (file_hash(copy.string()) != file_hash(g_runs.ck_a.string()))
            problems.push_back("checkpoint round trip changed bytes");
    }

    // (c) command-line contract: success paths exit 0 and write their outputs,
    // runtime failures exit 1, usage errors use the parser's own codes.
    const std::string ckpt = (g_work / "c8.ckpt").string();
    const bool have_c8 = fs::exists(ckpt);
    struct Case {
        std::string args;
        int want;          // exact expected code, or -1 for "nonzero, not 1"
        std::string file;  // artifact that must exist afterwards
    };
    std::vector<Case> cases = {
        {"gradcheck --op add", 0, ""},
        {"sample --ckpt " + ckpt + " --out " + (g_work / "s.ppm").string() + " --n 4 --cols 2",
         0, (g_work / "s.ppm").string()},
        {"reconstruct --ckpt " + ckpt + " --data " + g_runs.corpus.string() + " --out " +
             (g_work / "r.ppm").string() + " --n 4",
         0, (g_work / "r.ppm").string()},
        {"progressive --ckpt " + ckpt + " --out " + (g_work / "p.ppm").string() + " --rows 2",
         0, (g_work / "p.ppm").string()},
        {"interp --ckpt " + ckpt + " --block 0 --frames 5 --rows 2 --out " +
             (g_work / "i.ppm").string(),
         0, (g_work / "i.ppm").string()},
        {"complete --ckpt " + ckpt + " --image " + (g_work / "completion_set/00000.ppm").string() +
             " --iters 5 --out " + (g_work / "c.ppm").string(),
         0, (g_work / "c.ppm").string()},
        {"sample --ckpt " + (g_work / "absent.ckpt").string() + " --out " +
             (g_work / "x.ppm").string(),
         1, ""},
        {"gradcheck --op no_such_operation", 1, ""},
        // tau > 0 needs an adversarially trained model; this checkpoint has none
        {"complete --ckpt " + g_runs.ck_a.string() + " --image " +
             (g_work / "completion_set/00000.ppm").string() + " --iters 2",
         1, ""},
        {"train", -1, ""},          // missing required --data
        {"no-such-command", -1, ""},
    };
    for (const auto& c : cases) {
        if (c.want == 0 && c.args.find(ckpt) != std::string::npos && !have_c8) continue;
        const CliResult r = run_cli(c.args);
        if (c.want == 0 && r.code != 0)
            problems.push_back("'" + c.args + "' exited " + std::to_string(r.code) + ": " + r.err);
        if (c.want == 1 && r.code != 1)
            problems.push_back("'" + c.args + "' expected exit 1, got " + std::to_string(r.code));
        if (c.want == -1 && (r.code == 0 || r.code == 1))
            problems.push_back("'" + c.args + "' expected a usage-error code, got " +
                               std::to_string(r.code));
        if (!c.file.empty() && r.code == 0 && !fs::exists(c.file))
            problems.push_back("'" + c.args + "' exited 0 but wrote no output file");
    }

    ck.pass = problems.empty();
    if (ck.pass)
        ck.detail = "duplicate runs byte-identical; checkpoint round trip exact; " +
                    std::to_string(cases.size()) + " command-line cases honoured exit codes";
    else {
        ck.detail = problems.front();
        if (problems.size() > 1)
            ck.detail += " (+" + std::to_string(problems.size() - 1) + " more)";
    }
    return ck;
}

}  // namespace

//======================================================================

int main() {
    g_work = fs::temp_directory_path() / "crvae_acceptance";
    std::error_code ec;
    fs::remove_all(g_work, ec);
    fs::create_directories(g_work);

    const auto t0 = std::chrono::steady_clock::now();
    run_check(1, "gradient suite", check_gradients);
    run_check(2, "KL vs Monte-Carlo", check_kl_monte_carlo);
    run_check(3, "KL weighting", check_kl_weighting);
    run_check(4, "latent causality", check_causality);
    run_check(9, "parameter accounting", check_param_counts);
    run_check(5, "training descent", check_training_descent);
    run_check(6, "adversarial mechanics", check_adversarial_mechanics);
    run_check(7, "information regulariser", check_mi_regulariser);
    run_check(8, "occlusion completion", check_completion);
    run_check(10, "reproducibility and CLI contract", check_reproducibility);
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    static const char* kLabels[11] = {"",
                                      "gradient suite within 1e-4 of finite differences",
                                      "KL within 1% of Monte-Carlo over 20 seeded pairs",
                                      "weighted KL: all-ones equivalence and linearity",
                                      "later latent blocks never touch earlier outputs",
                                      "pinned 2000-step run cuts reconstruction loss",
                                      "discriminator mix, skip-freezing and loss identity",
                                      "information loss halves and matches pinned value",
                                      "completion lowers hidden-region error on 18/20",
                                      "recurrent latent transform saves parameters",
                                      "byte-identical reruns and command-line contract"};
    int failures = 0;
    std::cout << "\n";
    for (int i = 1; i <= 10; ++i) {
        const Check& c = g_checks[static_cast<std::size_t>(i)];
        if (!c.pass) ++failures;
        std::cout << "criterion " << (i < 10 ? " " : "") << i << ": "
                  << (c.pass ? "PASS" : "FAIL") << " - " << kLabels[i] << " [" << c.detail
                  << "]\n";
    }
    std::cout << (failures == 0 ? "ACCEPTED" : "REJECTED") << ": " << (10 - failures)
              << "/10 criteria passed in " << fmt(total / 60.0, 3) << " min\n";
    return failures == 0 ? 0 : 1;
}
