#pragma once

// Binary PPM (P6) image I/O and the byte <-> model-range conversions. Images
// on disk are 8-bit interleaved RGB; in the model they are [3,H,W] floats in
// the range of the decoder's output activation.

#include <stdexcept>
#include <string>
#include <vector>

#include "crvae/networks.hpp"

namespace crvae {

struct ImageU8 {
    int h = 0, w = 0;
    std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

    std::size_t byte_count() const { return static_cast<std::size_t>(h) * w * 3; }
};

ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// [3,H,W] floats: bytes map onto [-1,1] for the symmetric activation and
// [0,1] for the logistic one. Both directions round-trip every byte exactly.
Tensor<float> image_to_chw(const ImageU8& img, OutputAct range);
ImageU8 chw_to_image(const Tensor<float>& chw, OutputAct range);  // clamps, then quantises

// Montage of a [N,3,H,W] batch, `cols` tiles per row, black gutter pixels.
ImageU8 tile_grid(const Tensor<float>& batch, int cols, OutputAct range, int gutter = 2);

}  // namespace crvae
