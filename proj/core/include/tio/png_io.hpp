#pragma once

#include <string>

#include "tio/tensor.hpp"

namespace tio {

// img: 1 x 3 x H x W with values in [0, 1] -> 8-bit RGB PNG.
// Values are clamped, then rounded to the nearest code.
void write_png_rgb8(const std::string& path, const Tensor& img);

// map: 1 x 1 x H x W -> 16-bit grayscale PNG, [lo, hi] mapped onto
// [0, 65535] with clamping.
void write_png_gray16(const std::string& path, const Tensor& map, double lo, double hi);

}  // namespace tio
