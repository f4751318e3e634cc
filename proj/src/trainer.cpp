#include "crvae/trainer.hpp"

#include <iostream>
#include <memory>

namespace crvae {

namespace {

// Sub-stream tags off the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kStepStream = 3;

}  // namespace

TrainResult run_training(const TrainOptions& opt, const StepObserver& observer) {
    TrainConfig cfg = opt.config;
    cfg.validate();
    if (opt.data_dir.empty()) throw ConfigError("training needs a data directory");

    TrainResult res;
    Rng root(cfg.seed);

    if (!opt.init_checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(opt.init_checkpoint);
        if (!(ck.config.net == cfg.net)) {
            throw ConfigError("init checkpoint architecture does not match the requested config");
        }
        res.bundle = std::move(ck.bundle);
    } else {
        Rng init = root.fork(kInitStream);
        res.bundle = build_bundle<float>(cfg.net, init);
        res.bundle.disc_trained = cfg.disc_trained;
    }

    const Dataset ds = load_dataset(opt.data_dir, cfg.net.out_act);
    if (ds.images.dim(1) != cfg.net.image_c || ds.images.dim(2) != cfg.net.image_h ||
        ds.images.dim(3) != cfg.net.image_w) {
        throw ConfigError("dataset images are " + shape_str(ds.images.shape) +
                          ", model expects " + std::to_string(cfg.net.image_c) + "x" +
                          std::to_string(cfg.net.image_h) + "x" + std::to_string(cfg.net.image_w));
    }
    Batcher batcher(ds, cfg.batch, root.fork(kBatchStream), cfg.augment);
    Rng steprng = root.fork(kStepStream);

    std::unique_ptr<MetricsWriter> metrics;
    if (!opt.metrics_out.empty()) metrics = std::make_unique<MetricsWriter>(opt.metrics_out);

    for (int step = 1; step <= cfg.max_steps; ++step) {
        const Tensor<float> batch = batcher.next();
        const StepInfo info = train_step(res.bundle, batch, cfg.coeffs, cfg.lr, steprng);

        res.summary.steps_run = step;
        res.summary.disc_skips += info.losses.disc_skipped ? 1 : 0;
        res.summary.last = info.losses;
        if (metrics) metrics->append(step, info.losses);
        if (observer) observer(step, info);
        if (step % cfg.log_every == 0 || step == cfg.max_steps) {
            std::cerr << "step " << step << "/" << cfg.max_steps << "  recon=" << info.losses.recon
                      << "  total=" << info.losses.total_gen << "\n";
        }
    }

    cfg.disc_trained = res.bundle.disc_trained;
    res.config = cfg;
    if (!opt.checkpoint_out.empty()) {
        save_checkpoint(opt.checkpoint_out, cfg, res.bundle, opt.save_optimizer);
    }
    return res;
}

}  // namespace crvae
