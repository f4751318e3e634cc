// Command-line front end: corpus generation, training, latent-space tasks and
// the gradient verification suite. Exit code 0 on success, 1 on any runtime
// failure (one-line diagnostic on stderr); usage errors use CLI11's codes.

#include <iostream>

#include "CLI11.hpp"
#include "crvae/corpus.hpp"
#include "crvae/gradcheck_suite.hpp"
#include "crvae/tasks.hpp"
#include "crvae/trainer.hpp"

using namespace crvae;

namespace {

ModelBundle<float> load_bundle(const std::string& ckpt_path, TrainConfig* cfg_out = nullptr) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    if (cfg_out) *cfg_out = ck.config;
    return std::move(ck.bundle);
}

// Centred occlusion covering `frac` of the image area.
Tensor<float> centred_mask(const NetworkSpec& net, double frac) {
    if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("occlusion fraction must be in (0,1)");
    const int bh = std::max(1, static_cast<int>(std::lround(net.image_h * std::sqrt(frac))));
    const int bw = std::max(1, static_cast<int>(std::lround(net.image_w * std::sqrt(frac))));
    Tensor<float> m(Shape{1, net.image_c, net.image_h, net.image_w}, 1.0f);
    const int y0 = (net.image_h - bh) / 2, x0 = (net.image_w - bw) / 2;
    for (int c = 0; c < net.image_c; ++c) {
        for (int y = y0; y < y0 + bh; ++y) {
            for (int x = x0; x < x0 + bw; ++x) m.at4(0, c, y, x) = 0.0f;
        }
    }
    return m;
}

Tensor<float> stack_rows(const std::vector<Tensor<float>>& imgs) {
    const int n = static_cast<int>(imgs.size());
    const Shape& s = imgs.at(0).shape;
    Tensor<float> out({n, s[1], s[2], s[3]});
    for (int i = 0; i < n; ++i) {
        require_same_shape(imgs[static_cast<std::size_t>(i)], imgs[0], "stack_rows");
        std::copy(imgs[static_cast<std::size_t>(i)].data.begin(),
                  imgs[static_cast<std::size_t>(i)].data.end(),
                  out.data.begin() + static_cast<std::size_t>(i) * imgs[0].data.size());
    }
    return out;
}

Tensor<float> row_of(const Tensor<float>& batch, int i) {
    Tensor<float> out({1, batch.dim(1), batch.dim(2), batch.dim(3)});
    const std::size_t stride = out.data.size();
    std::copy(batch.data.begin() + static_cast<std::size_t>(i) * stride,
              batch.data.begin() + static_cast<std::size_t>(i + 1) * stride, out.data.begin());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"channel-recurrent variational autoencoder toolkit"};
    app.require_subcommand(1);

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic blob corpus");
    CorpusOptions corpus;
    gen->add_option("--out", corpus.dir, "output directory")->required();
    gen->add_option("--count", corpus.count, "number of images");
    gen->add_option("--size", corpus.size, "square image size in pixels");
    gen->add_option("--seed", corpus.seed, "corpus seed");

    // ---- train -------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train a model on a PPM directory");
    std::string t_data, t_out, t_metrics, t_config, t_init, t_variant = "crvae",
                t_preset = "default", t_save_config;
    double t_lr = 0, t_a1 = 0, t_a2 = 0, t_beta = 0, t_kappa = 0;
    int t_steps = 0, t_batch = 0, t_log_every = 0;
    std::uint64_t t_seed = 0;
    bool t_augment = false, t_no_opt_state = false;
    train->add_option("--data", t_data, "directory of training PPMs")->required();
    train->add_option("--out", t_out, "checkpoint file to write");
    train->add_option("--metrics", t_metrics, "per-step metrics CSV to write");
    train->add_option("--config", t_config, "JSON config file (flags override it)");
    train->add_option("--init", t_init, "checkpoint to continue from");
    auto* ov = train->add_option("--variant", t_variant, "vae | cvae | crvae");
    auto* op = train->add_option("--preset", t_preset, "architecture preset: default | small | tiny");
    auto* olr = train->add_option("--lr", t_lr, "Adam learning rate");
    auto* oa1 = train->add_option("--alpha1", t_a1, "KL weight, head blocks");
    auto* oa2 = train->add_option("--alpha2", t_a2, "KL weight, tail blocks");
    auto* obt = train->add_option("--beta", t_beta, "adversarial weight (0 = off)");
    auto* okp = train->add_option("--kappa", t_kappa, "mutual-information weight (0 = off)");
    auto* ost = train->add_option("--steps", t_steps, "training steps");
    auto* oba = train->add_option("--batch", t_batch, "batch size");
    auto* ose = train->add_option("--seed", t_seed, "run seed");
    auto* olg = train->add_option("--log-every", t_log_every, "stderr progress interval");
    train->add_flag("--augment", t_augment, "mirror images horizontally at random");
    train->add_flag("--no-optimizer-state", t_no_opt_state, "omit Adam state from the checkpoint");
    train->add_option("--save-config", t_save_config, "also write the effective config JSON here");

    // ---- sample ------------------------------------------------------------
    auto* sample = app.add_subcommand("sample", "decode prior draws into a grid image");
    std::string s_ckpt, s_out;
    int s_n = 16, s_cols = 4;
    std::uint64_t s_seed = 0;
    sample->add_option("--ckpt", s_ckpt, "checkpoint")->required();
    sample->add_option("--out", s_out, "output PPM")->required();
    sample->add_option("--n", s_n, "number of samples");
    sample->add_option("--cols", s_cols, "grid columns");
    sample->add_option("--seed", s_seed, "sampling seed");

    // ---- reconstruct -------------------------------------------------------
    auto* rec = app.add_subcommand("reconstruct", "originals (top) vs reconstructions (bottom)");
    std::string r_ckpt, r_data, r_out;
    int r_n = 8;
    rec->add_option("--ckpt", r_ckpt, "checkpoint")->required();
    rec->add_option("--data", r_data, "directory of PPMs")->required();
    rec->add_option("--out", r_out, "output PPM")->required();
    rec->add_option("--n", r_n, "images to reconstruct");

    // ---- progressive -------------------------------------------------------
    auto* prog = app.add_subcommand("progressive",
                                    "rows of one draw decoded with growing block prefixes");
    std::string p_ckpt, p_out;
    int p_rows = 4;
    std::uint64_t p_seed = 0;
    prog->add_option("--ckpt", p_ckpt, "checkpoint")->required();
    prog->add_option("--out", p_out, "output PPM")->required();
    prog->add_option("--rows", p_rows, "independent draws (grid rows)");
    prog->add_option("--seed", p_seed, "sampling seed");

    // ---- interp ------------------------------------------------------------
    auto* interp = app.add_subcommand("interp", "interpolate one latent block between two draws");
    std::string i_ckpt, i_out;
    int i_block = 0, i_frames = 8, i_rows = 4;
    std::uint64_t i_seed = 0;
    interp->add_option("--ckpt", i_ckpt, "checkpoint")->required();
    interp->add_option("--out", i_out, "output PPM")->required();
    interp->add_option("--block", i_block, "latent block index to vary")->required();
    interp->add_option("--frames", i_frames, "interpolation frames per row");
    interp->add_option("--rows", i_rows, "independent draw pairs (grid rows)");
    interp->add_option("--seed", i_seed, "sampling seed");

    // ---- complete ----------------------------------------------------------
    auto* comp = app.add_subcommand("complete", "fill a centred occlusion by latent optimisation");
    std::string c_ckpt, c_image, c_out;
    double c_frac = 0.25, c_tau = 0.003, c_gamma = 1e-5, c_step = 0.05;
    int c_iters = 200;
    std::uint64_t c_seed = 0;
    bool c_prior_init = false;
    comp->add_option("--ckpt", c_ckpt, "checkpoint")->required();
    comp->add_option("--image", c_image, "PPM to occlude and complete")->required();
    comp->add_option("--out", c_out, "grid PPM: original | occluded | completed");
    comp->add_option("--frac", c_frac, "occluded area fraction (centred box)");
    comp->add_option("--tau", c_tau, "realism weight (needs a trained discriminator)");
    comp->add_option("--gamma", c_gamma, "latent prior weight");
    comp->add_option("--iters", c_iters, "optimisation iterations");
    comp->add_option("--step-size", c_step, "Adam rate on the latent");
    comp->add_option("--seed", c_seed, "seed for prior-draw init");
    comp->add_flag("--prior-init", c_prior_init, "start from a prior draw instead of the encoder");

    // ---- gradcheck ---------------------------------------------------------
    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
    std::string g_op;
    gc->add_option("--op", g_op, "run only the named case");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            generate_corpus(corpus);
            std::cout << "wrote " << corpus.count << " images to " << corpus.dir << "\n";
            return 0;
        }

        if (*train) {
            TrainOptions opt;
            if (!t_config.empty()) opt.config = load_config(t_config);
            // A continued run inherits the checkpoint's architecture unless one
            // is named explicitly; other settings still come from flags.
            if (!t_init.empty() && t_config.empty() && !*op && !*ov)
                opt.config.net = load_checkpoint(t_init).config.net;
            if (*op) {
                if (t_preset == "default") opt.config.net = NetworkSpec::defaults();
                else if (t_preset == "small") opt.config.net = NetworkSpec::small();
                else if (t_preset == "tiny") opt.config.net = NetworkSpec::tiny();
                else throw ConfigError("unknown preset '" + t_preset + "'");
            }
            if (*ov) {
                opt.config.net.variant = variant_from_name(t_variant);
                opt.config.net.validate();
            }
            if (*olr) opt.config.lr = t_lr;
            if (*oa1) opt.config.coeffs.alpha1 = t_a1;
            if (*oa2) opt.config.coeffs.alpha2 = t_a2;
            if (*obt) opt.config.coeffs.beta = t_beta;
            if (*okp) opt.config.coeffs.kappa = t_kappa;
            if (*ost) opt.config.max_steps = t_steps;
            if (*oba) opt.config.batch = t_batch;
            if (*ose) opt.config.seed = t_seed;
            if (*olg) opt.config.log_every = t_log_every;
            if (t_augment) opt.config.augment = true;
            opt.data_dir = t_data;
            opt.checkpoint_out = t_out;
            opt.metrics_out = t_metrics;
            opt.init_checkpoint = t_init;
            opt.save_optimizer = !t_no_opt_state;

            TrainResult res = run_training(opt);
            if (!t_save_config.empty()) save_config(t_save_config, res.config);
            std::cout << "trained " << res.summary.steps_run << " steps, final recon "
                      << res.summary.last.recon << ", disc skips " << res.summary.disc_skips
                      << "\n";
            return 0;
        }

        if (*sample) {
            auto bundle = load_bundle(s_ckpt);
            Rng rng(s_seed);
            write_ppm(s_out, tile_grid(sample_prior(bundle, s_n, rng), s_cols,
                                       bundle.spec.out_act));
            std::cout << "wrote " << s_out << "\n";
            return 0;
        }

        if (*rec) {
            TrainConfig cfg;
            auto bundle = load_bundle(r_ckpt, &cfg);
            Dataset ds = load_dataset(r_data, bundle.spec.out_act);
            if (ds.count() < r_n) throw ConfigError("dataset smaller than --n");
            Tensor<float> firstn({r_n, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
            std::copy(ds.images.data.begin(),
                      ds.images.data.begin() + firstn.data.size(), firstn.data.begin());
            Tensor<float> recon = reconstruct_mean(bundle, firstn);
            std::vector<Tensor<float>> rows;
            for (int i = 0; i < r_n; ++i) rows.push_back(row_of(firstn, i));
            for (int i = 0; i < r_n; ++i) rows.push_back(row_of(recon, i));
            Tensor<float> all = stack_rows(rows);
            all.shape = {2 * r_n, firstn.dim(1), firstn.dim(2), firstn.dim(3)};
            write_ppm(r_out, tile_grid(all, r_n, bundle.spec.out_act));
            std::cout << "wrote " << r_out << "\n";
            return 0;
        }

        if (*prog) {
            auto bundle = load_bundle(p_ckpt);
            const int steps = bundle.spec.effective_steps();
            Rng rng(p_seed);
            std::vector<Tensor<float>> tiles;
            for (int r = 0; r < p_rows; ++r) {
                Tensor<float> z = rng.normal_tensor<float>(bundle.spec.posterior_shape(1));
                LatentBlocks<float> blocks = split_latent(z, steps);
                for (int k = 0; k <= steps; ++k) {
                    tiles.push_back(progressive_sample(bundle, blocks, k));
                }
            }
            write_ppm(p_out, tile_grid(stack_rows(tiles), steps + 1, bundle.spec.out_act));
            std::cout << "wrote " << p_out << "\n";
            return 0;
        }

        if (*interp) {
            auto bundle = load_bundle(i_ckpt);
            Rng rng(i_seed);
            std::vector<Tensor<float>> tiles;
            for (int r = 0; r < i_rows; ++r) {
                Tensor<float> za = rng.normal_tensor<float>(bundle.spec.posterior_shape(1));
                Tensor<float> zb = rng.normal_tensor<float>(bundle.spec.posterior_shape(1));
                for (auto& f : interpolate_block(bundle, za, zb, i_block, i_frames)) {
                    tiles.push_back(std::move(f));
                }
            }
            write_ppm(i_out, tile_grid(stack_rows(tiles), i_frames, bundle.spec.out_act));
            std::cout << "wrote " << i_out << "\n";
            return 0;
        }

        if (*comp) {
            auto bundle = load_bundle(c_ckpt);
            const ImageU8 img = read_ppm(c_image);
            Tensor<float> x = image_to_chw(img, bundle.spec.out_act);
            x.shape = {1, x.dim(0), x.dim(1), x.dim(2)};

            CompletionSpec<float> cs;
            cs.mask = centred_mask(bundle.spec, c_frac);
            cs.tau = c_tau;
            cs.gamma = c_gamma;
            cs.iters = c_iters;
            cs.step_size = c_step;
            cs.seed = c_seed;
            cs.init_from_posterior = !c_prior_init;

            CompletionResult<float> res = complete(bundle, x, cs);
            std::cout << "masked_mse_initial=" << masked_region_mse(res.initial_image, x, cs.mask)
                      << " masked_mse_final=" << masked_region_mse(res.image, x, cs.mask) << "\n";
            if (!c_out.empty()) {
                const float mid = bundle.spec.out_act == OutputAct::tanh_sym ? 0.0f : 0.5f;
                Tensor<float> occluded = x;
                for (std::int64_t i = 0; i < occluded.numel(); ++i) {
                    if (cs.mask[i] == 0.0f) occluded[i] = mid;
                }
                write_ppm(c_out,
                          tile_grid(stack_rows({x, occluded, res.image}), 3, bundle.spec.out_act));
                std::cout << "wrote " << c_out << "\n";
            }
            return 0;
        }

        if (*gc) {
            const GradSuiteOutcome out = run_gradcheck_suite(std::cout, g_op);
            return out.ok() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
