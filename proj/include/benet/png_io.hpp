#pragma once

#include <string>

#include "benet/tensor.hpp"

namespace benet {

// 8-bit RGB PNG. save quantizes [0,1] floats with round(v*255); load maps
// bytes back to v/255, so save-then-load is exact at 8-bit resolution.
void save_png(const std::string& path, const Tensor& image);  // (3,H,W)
Tensor load_png(const std::string& path);                     // -> (3,H,W)

}  // namespace benet
