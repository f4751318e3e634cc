#include "crvae/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace crvae {

namespace {

[[noreturn]] void fail(const std::string& path, std::int64_t offset, const std::string& what) {
    throw ParseError(path + ": " + what + " (byte " + std::to_string(offset) + ")");
}

// Skips whitespace and '#' comments, then reads one decimal token.
int read_header_int(std::istream& in, const std::string& path, const char* field) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) fail(path, in.tellg(), std::string("missing ") + field);
    if (!std::isdigit(c)) {
        fail(path, static_cast<std::int64_t>(in.tellg()) - 1,
             std::string("expected digit for ") + field);
    }
    std::int64_t v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 20) fail(path, in.tellg(), std::string(field) + " out of range");
        c = in.get();
    }
    if (c != EOF) in.unget();
    return static_cast<int>(v);
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || m1 != '6') fail(path, 0, "not a binary PPM (P6) file");

    ImageU8 img;
    img.w = read_header_int(in, path, "width");
    img.h = read_header_int(in, path, "height");
    const int maxval = read_header_int(in, path, "maxval");
    if (img.w < 1 || img.h < 1) fail(path, in.tellg(), "non-positive dimensions");
    if (maxval != 255) fail(path, in.tellg(), "maxval " + std::to_string(maxval) + ", only 255 supported");

    const int sep = in.get();
    if (sep == EOF || !std::isspace(sep)) fail(path, in.tellg(), "missing separator after maxval");

    img.rgb.resize(img.byte_count());
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.rgb.size()) {
        fail(path, static_cast<std::int64_t>(in.tellg()),
             "truncated pixel data: got " + std::to_string(in.gcount()) + " of " +
                 std::to_string(img.rgb.size()) + " bytes");
    }
    return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
    if (img.h < 1 || img.w < 1 || img.rgb.size() != img.byte_count()) {
        throw ShapeError("write_ppm: inconsistent image dimensions");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

Tensor<float> image_to_chw(const ImageU8& img, OutputAct range) {
    if (img.rgb.size() != img.byte_count()) throw ShapeError("image_to_chw: bad byte buffer");
    Tensor<float> t({3, img.h, img.w});
    // Divide rather than multiply by a reciprocal: 255/255 and 255/127.5 then
    // land exactly on the range endpoints.
    const float denom = range == OutputAct::tanh_sym ? 127.5f : 255.0f;
    const float shift = range == OutputAct::tanh_sym ? -1.0f : 0.0f;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const unsigned char b = img.rgb[(static_cast<std::size_t>(y) * img.w + x) * 3 + c];
                t.data[(static_cast<std::size_t>(c) * img.h + y) * img.w + x] =
                    static_cast<float>(b) / denom + shift;
            }
        }
    }
    return t;
}

ImageU8 chw_to_image(const Tensor<float>& chw, OutputAct range) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) {
        throw ShapeError("chw_to_image: expected [3,H,W], got " + shape_str(chw.shape));
    }
    ImageU8 img;
    img.h = chw.dim(1);
    img.w = chw.dim(2);
    img.rgb.resize(img.byte_count());
    const float lo = range == OutputAct::tanh_sym ? -1.0f : 0.0f;
    const float scale = range == OutputAct::tanh_sym ? 127.5f : 255.0f;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = chw.data[(static_cast<std::size_t>(c) * img.h + y) * img.w + x];
                v = std::min(std::max(v, lo), lo + (range == OutputAct::tanh_sym ? 2.0f : 1.0f));
                const int q = static_cast<int>(std::lround((v - lo) * scale));
                img.rgb[(static_cast<std::size_t>(y) * img.w + x) * 3 + c] =
                    static_cast<unsigned char>(std::min(std::max(q, 0), 255));
            }
        }
    }
    return img;
}

ImageU8 tile_grid(const Tensor<float>& batch, int cols, OutputAct range, int gutter) {
    if (batch.ndim() != 4 || batch.dim(1) != 3) {
        throw ShapeError("tile_grid: expected [N,3,H,W], got " + shape_str(batch.shape));
    }
    if (cols < 1 || gutter < 0) throw ConfigError("tile_grid: bad cols/gutter");
    const int n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
    const int rows = (n + cols - 1) / cols;

    ImageU8 grid;
    grid.h = rows * h + (rows + 1) * gutter;
    grid.w = cols * w + (cols + 1) * gutter;
    grid.rgb.assign(grid.byte_count(), 0);

    for (int i = 0; i < n; ++i) {
        Tensor<float> one({3, h, w});
        std::copy(batch.data.begin() + static_cast<std::size_t>(i) * 3 * h * w,
                  batch.data.begin() + static_cast<std::size_t>(i + 1) * 3 * h * w,
                  one.data.begin());
        const ImageU8 tile = chw_to_image(one, range);
        const int oy = gutter + (i / cols) * (h + gutter);
        const int ox = gutter + (i % cols) * (w + gutter);
        for (int y = 0; y < h; ++y) {
            std::copy(tile.rgb.begin() + static_cast<std::size_t>(y) * w * 3,
                      tile.rgb.begin() + static_cast<std::size_t>(y + 1) * w * 3,
                      grid.rgb.begin() + (static_cast<std::size_t>(oy + y) * grid.w + ox) * 3);
        }
    }
    return grid;
}

}  // namespace crvae
