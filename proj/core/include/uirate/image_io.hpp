#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uirate/tensor.hpp"

namespace uirate {

// Interleaved 8-bit RGB raster.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // size == width * height * 3

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// Sniffs PNG vs JPEG from magic bytes. Throws std::runtime_error on
// undecodable input; callers doing batch work catch per sample.
ImageU8 decode_image(const std::uint8_t* data, std::size_t size);
ImageU8 decode_image_file(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

// Half-pixel-center bilinear resampling; an equal-size resize is the
// identity map bit-for-bit.
ImageU8 resize_bilinear(const ImageU8& img, int out_w, int out_h);

// decode -> resize to S x S -> scale to [0,1] -> (x - 0.5)/0.5.
// Output is planar [3, S, S] with values in [-1, 1].
Tensor preprocess_image(const ImageU8& img, int size);
Tensor preprocess_image_file(const std::string& path, int size);

}  // namespace uirate
