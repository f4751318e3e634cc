#include "crvae/corpus.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "crvae/image.hpp"
#include "crvae/rng.hpp"
#include "json.hpp"

namespace crvae {

namespace {

struct Blob {
    double cx, cy;    // centre, pixel units
    double rx, ry;    // radii
    int color[3];     // peak colour
};

// Soft coverage of the ellipse at a pixel: logistic falloff around the unit
// boundary, ~1 inside, ~0 outside, smooth over about 1.5 px.
double coverage(const Blob& b, double x, double y) {
    const double dx = (x - b.cx) / b.rx;
    const double dy = (y - b.cy) / b.ry;
    const double d = std::sqrt(dx * dx + dy * dy);
    const double edge = 1.5 / std::min(b.rx, b.ry);  // px falloff in normalised units
    return 1.0 / (1.0 + std::exp((d - 1.0) / edge));
}

}  // namespace

void generate_corpus(const CorpusOptions& opt) {
    if (opt.count < 1) throw ConfigError("corpus: need count >= 1");
    if (opt.size < 8) throw ConfigError("corpus: need size >= 8");
    std::filesystem::create_directories(opt.dir);

    Rng rng(opt.seed);
    nlohmann::ordered_json manifest;
    manifest["count"] = opt.count;
    manifest["size"] = opt.size;
    manifest["seed"] = opt.seed;
    manifest["images"] = nlohmann::ordered_json::array();

    const double S = static_cast<double>(opt.size);
    for (int i = 0; i < opt.count; ++i) {
        int bg[3];
        for (int& v : bg) v = static_cast<int>(rng.below(80));

        const int nblobs = 1 + (rng.coin() ? 1 : 0);
        std::vector<Blob> blobs;
        for (int bi = 0; bi < nblobs; ++bi) {
            Blob b{};
            b.cx = rng.uniform(0.2, 0.8) * S;
            b.cy = rng.uniform(0.2, 0.8) * S;
            b.rx = rng.uniform(0.12, 0.30) * S;
            b.ry = rng.uniform(0.12, 0.30) * S;
            for (int& v : b.color) v = 100 + static_cast<int>(rng.below(156));
            blobs.push_back(b);
        }

        ImageU8 img;
        img.h = img.w = opt.size;
        img.rgb.resize(img.byte_count());
        for (int y = 0; y < opt.size; ++y) {
            for (int x = 0; x < opt.size; ++x) {
                double px[3] = {static_cast<double>(bg[0]), static_cast<double>(bg[1]),
                                static_cast<double>(bg[2])};
                for (const Blob& b : blobs) {
                    const double a = coverage(b, x + 0.5, y + 0.5);
                    for (int c = 0; c < 3; ++c) px[c] += a * (b.color[c] - px[c]);
                }
                for (int c = 0; c < 3; ++c) {
                    const int q = static_cast<int>(std::lround(px[c]));
                    img.rgb[(static_cast<std::size_t>(y) * opt.size + x) * 3 + c] =
                        static_cast<unsigned char>(std::min(std::max(q, 0), 255));
                }
            }
        }

        std::ostringstream name;
        name << std::setw(5) << std::setfill('0') << i << ".ppm";
        write_ppm(opt.dir + "/" + name.str(), img);

        nlohmann::ordered_json entry;
        entry["file"] = name.str();
        entry["background"] = {bg[0], bg[1], bg[2]};
        entry["blobs"] = nlohmann::ordered_json::array();
        for (const Blob& b : blobs) {
            nlohmann::ordered_json jb;
            jb["cx"] = b.cx;
            jb["cy"] = b.cy;
            jb["rx"] = b.rx;
            jb["ry"] = b.ry;
            jb["color"] = {b.color[0], b.color[1], b.color[2]};
            entry["blobs"].push_back(jb);
        }
        manifest["images"].push_back(entry);
    }

    std::ofstream mf(opt.dir + "/manifest.json", std::ios::trunc);
    if (!mf) throw std::runtime_error(opt.dir + "/manifest.json: cannot open for writing");
    mf << manifest.dump(2) << "\n";
}

}  // namespace crvae
