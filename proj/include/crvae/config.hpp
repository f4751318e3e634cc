#pragma once

// Training configuration and its canonical JSON form. The compact canonical
// string (fixed key order, no whitespace) is what gets embedded in
// checkpoints, so identical configs always serialise to identical bytes.

#include <string>

#include "crvae/objectives.hpp"

namespace crvae {

struct TrainConfig {
    NetworkSpec net = NetworkSpec::defaults();
    CoeffSet coeffs;
    double lr = 3e-4;
    int batch = 32;
    int max_steps = 1000;
    std::uint64_t seed = 1;
    bool augment = false;       // horizontal mirroring in the batcher
    bool disc_trained = false;  // carried through checkpoints; gates completion realism
    int log_every = 50;         // progress lines on stderr during training

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        net.validate();
        coeffs.validate();
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("config: lr must be positive");
        if (batch < 1) throw ConfigError("config: batch must be >= 1");
        if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
        if (log_every < 1) throw ConfigError("config: log_every must be >= 1");
    }
};

// Compact canonical JSON (stable key order). Inverse rejects unknown keys,
// missing keys fall back to defaults.
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

void save_config(const std::string& path, const TrainConfig& cfg);  // pretty-printed
TrainConfig load_config(const std::string& path);

}  // namespace crvae
