#pragma once

// End-to-end training driver: corpus in, checkpoint and metrics out. All
// randomness flows from config.seed through three independent sub-streams
// (weight init, batch order, per-step noise), so a run is reproducible from
// its command line alone.

#include <functional>
#include <string>

#include "crvae/checkpoint.hpp"
#include "crvae/dataset.hpp"
#include "crvae/metrics.hpp"

namespace crvae {

struct TrainOptions {
    TrainConfig config;
    std::string data_dir;
    std::string checkpoint_out;   // empty: don't save
    std::string metrics_out;      // empty: don't write CSV
    std::string init_checkpoint;  // empty: fresh init; else continue from this file
    bool save_optimizer = true;
};

struct TrainSummary {
    int steps_run = 0;
    int disc_skips = 0;
    LossBreakdown last;
};

using StepObserver = std::function<void(int step, const StepInfo& info)>;

struct TrainResult {
    TrainSummary summary;
    TrainConfig config;         // as trained, disc_trained updated
    ModelBundle<float> bundle;  // final parameters
};

TrainResult run_training(const TrainOptions& opt, const StepObserver& observer = {});

}  // namespace crvae
