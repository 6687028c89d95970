#ifndef A2V_CORE_IMAGE_HPP
#define A2V_CORE_IMAGE_HPP

#include <string>

#include "tensor.hpp"

namespace a2v {

// Writes an (H, W, 3) tensor with values in [0,1] as an 8-bit RGB PNG.
// Values outside [0,1] are clamped.
void write_png(const std::string& path, const Tensor& hwc);

// Reads an 8-bit non-interlaced PNG (gray, RGB or RGBA) into (H, W, 3) in [0,1].
Tensor read_png(const std::string& path);

}  // namespace a2v

#endif
