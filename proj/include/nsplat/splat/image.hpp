#pragma once

#include <string>

#include "nsplat/splat/types.hpp"

namespace nsplat::splat {

// 8-bit RGB PNG (presentation output; values quantized by rounding).
void write_png(const RenderedImage& img, const std::string& path);

// Raw float dump for exact comparisons. Layout: magic "IMGF", u32 width,
// u32 height, u32 channels (3), all little-endian, then row-major
// interleaved float32 RGB.
void write_f32_image(const RenderedImage& img, const std::string& path);
RenderedImage read_f32_image(const std::string& path);

double image_mse(const RenderedImage& a, const RenderedImage& b);
// Peak signal-to-noise ratio against peak value 1.0, in dB.
double image_psnr(const RenderedImage& a, const RenderedImage& b);

}  // namespace nsplat::splat
