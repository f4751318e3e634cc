#include "crvae/dataset.hpp"

#include <algorithm>
#include <filesystem>

namespace crvae {

Dataset load_dataset(const std::string& dir, OutputAct range) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("dataset: '" + dir + "' is not a directory");

    Dataset ds;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") {
            ds.files.push_back(e.path().filename().string());
        }
    }
    if (ds.files.empty()) throw ConfigError("dataset: no .ppm files in '" + dir + "'");
    std::sort(ds.files.begin(), ds.files.end());

    int h = 0, w = 0;
    for (std::size_t i = 0; i < ds.files.size(); ++i) {
        const ImageU8 img = read_ppm(dir + "/" + ds.files[i]);
        if (i == 0) {
            h = img.h;
            w = img.w;
            ds.images = Tensor<float>({static_cast<int>(ds.files.size()), 3, h, w});
        } else if (img.h != h || img.w != w) {
            throw ShapeError("dataset: '" + ds.files[i] + "' is " + std::to_string(img.w) + "x" +
                             std::to_string(img.h) + ", expected " + std::to_string(w) + "x" +
                             std::to_string(h));
        }
        const Tensor<float> chw = image_to_chw(img, range);
        std::copy(chw.data.begin(), chw.data.end(),
                  ds.images.data.begin() + static_cast<std::size_t>(i) * chw.data.size());
    }
    return ds;
}

Batcher::Batcher(const Dataset& ds, int batch, Rng rng, bool flip_augment)
    : ds_(ds), batch_(batch), rng_(rng), flip_(flip_augment) {
    if (batch_ < 1) throw ConfigError("batcher: batch size must be >= 1");
    if (ds_.count() < batch_) {
        throw ConfigError("batcher: dataset of " + std::to_string(ds_.count()) +
                          " images cannot fill a batch of " + std::to_string(batch_));
    }
    reshuffle();
    epoch_ = 0;  // reshuffle() counts epochs; the first shuffle is epoch 0
}

void Batcher::reshuffle() {
    if (order_.empty()) {
        order_.resize(static_cast<std::size_t>(ds_.count()));
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
    }
    rng_.shuffle(order_);
    cursor_ = 0;
    epoch_ += 1;
}

Tensor<float> Batcher::next() {
    if (cursor_ + static_cast<std::size_t>(batch_) > order_.size()) reshuffle();

    const int c = ds_.images.dim(1), h = ds_.images.dim(2), w = ds_.images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(c) * h * w;
    Tensor<float> out({batch_, c, h, w});
    for (int i = 0; i < batch_; ++i) {
        const std::int64_t src = order_[cursor_ + static_cast<std::size_t>(i)];
        const float* from = ds_.images.data.data() + static_cast<std::size_t>(src) * stride;
        float* to = out.data.data() + static_cast<std::size_t>(i) * stride;
        if (flip_ && rng_.coin()) {
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < h; ++y) {
                    const float* row = from + (static_cast<std::size_t>(ch) * h + y) * w;
                    float* dst = to + (static_cast<std::size_t>(ch) * h + y) * w;
                    for (int x = 0; x < w; ++x) dst[x] = row[w - 1 - x];
                }
            }
        } else {
            std::copy(from, from + stride, to);
        }
    }
    cursor_ += static_cast<std::size_t>(batch_);
    return out;
}

}  // namespace crvae
