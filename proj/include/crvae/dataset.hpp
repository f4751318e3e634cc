#pragma once

// Directory-of-PPMs dataset and the shuffling batcher used for training.

#include <string>
#include <vector>

#include "crvae/image.hpp"
#include "crvae/rng.hpp"

namespace crvae {

struct Dataset {
    Tensor<float> images;            // [N,3,H,W], already in the activation range
    std::vector<std::string> files;  // sorted basenames, row i came from files[i]

    int count() const { return images.numel() ? images.dim(0) : 0; }
};

// Loads every *.ppm under `dir` in sorted name order. All images must share
// one size.
Dataset load_dataset(const std::string& dir, OutputAct range);

// Serves fixed-size batches; each epoch is a fresh Fisher-Yates permutation
// of the dataset and a trailing partial batch is dropped. Optional horizontal
// mirroring flips each served image with probability 1/2.
class Batcher {
public:
    Batcher(const Dataset& ds, int batch, Rng rng, bool flip_augment);

    Tensor<float> next();  // [batch,3,H,W]
    int epoch() const { return epoch_; }

private:
    const Dataset& ds_;
    int batch_;
    Rng rng_;
    bool flip_;
    int epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::int64_t> order_;

    void reshuffle();
};

}  // namespace crvae
