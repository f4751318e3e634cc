#include "crvae/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace crvae {

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc), path_(path) {
    if (!out_) throw std::runtime_error(path + ": cannot open for writing");
    out_ << kMetricsHeader << "\n";
    out_.flush();
}

void MetricsWriter::append(int step, const LossBreakdown& bd) {
    out_ << step << ',' << std::setprecision(10) << bd.recon << ',' << bd.kl_head << ','
         << bd.kl_tail << ',' << bd.adv_gen << ',' << bd.adv_disc << ',' << bd.mi << ','
         << bd.total_gen << ',' << bd.disc_accuracy << ',' << (bd.disc_skipped ? 1 : 0) << "\n";
    out_.flush();
    if (!out_) throw std::runtime_error(path_ + ": write failed");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (line != kMetricsHeader) throw ParseError(path + ": unexpected header '" + line + "'");

    std::vector<MetricsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        MetricsRow r;
        char comma;
        int skipped = 0;
        ss >> r.step >> comma >> r.losses.recon >> comma >> r.losses.kl_head >> comma >>
            r.losses.kl_tail >> comma >> r.losses.adv_gen >> comma >> r.losses.adv_disc >> comma >>
            r.losses.mi >> comma >> r.losses.total_gen >> comma >> r.losses.disc_accuracy >>
            comma >> skipped;
        if (!ss) throw ParseError(path + ": malformed row at line " + std::to_string(lineno));
        r.losses.disc_skipped = skipped != 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace crvae
