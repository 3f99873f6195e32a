#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrt/tensor.hpp"

namespace mrt {

/// Encode a (H,W) tensor of values in [0,1] as an 8-bit grayscale PNG.
std::vector<std::uint8_t> encode_png_gray(const Tensor& image);

void write_png_gray(const std::string& path, const Tensor& image);

}  // namespace mrt
