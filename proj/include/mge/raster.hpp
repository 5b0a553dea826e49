#pragma once

#include <string>

#include "mge/tensor.hpp"

namespace mge {

// Binary netpbm images with maxval 255: P5 loads as [1,H,W], P6 as [3,H,W],
// values scaled to [0,1]. Malformed files raise an error naming the byte
// offset where parsing failed.
Tensor load_raster(const std::string& path);

// Writes [1,H,W] as P5 and [3,H,W] as P6, rounding v*255 to the nearest
// byte. A load/save round trip changes no value by more than 1/510.
void save_raster(const std::string& path, const Tensor& image);

}  // namespace mge
