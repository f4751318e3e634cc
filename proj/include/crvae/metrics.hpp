#pragma once

// Per-step training metrics as CSV, one row per step, fixed column set.

#include <fstream>
#include <string>
#include <vector>

#include "crvae/objectives.hpp"

namespace crvae {

inline constexpr const char* kMetricsHeader =
    "step,recon,kl_head,kl_tail,adv_gen,adv_disc,mi,total_gen,disc_accuracy,disc_skipped";

class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    void append(int step, const LossBreakdown& bd);  // flushes each row

private:
    std::ofstream out_;
    std::string path_;
};

struct MetricsRow {
    int step = 0;
    LossBreakdown losses;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace crvae
