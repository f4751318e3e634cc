#pragma once

// Synthetic training corpus: images of one or two soft-edged colour blobs on
// a dark background, written as PPM files plus a manifest recording the
// generating factors (positions, radii, colours) per image.

#include <string>

namespace crvae {

struct CorpusOptions {
    std::string dir;
    int count = 2000;
    int size = 32;  // square images
    std::uint64_t seed = 7;
};

// Writes 00000.ppm .. and manifest.json into `dir` (created if missing).
// Deterministic in (count, size, seed).
void generate_corpus(const CorpusOptions& opt);

}  // namespace crvae
