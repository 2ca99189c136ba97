#pragma once

#include <filesystem>

#include "rp2/tensor.hpp"

namespace rp2 {

/// Decodes any PNG to an [H, W, 3] tensor with values in [0,1].
Tensor read_png(const std::filesystem::path& path);

/// Writes [H, W, 3] as 8-bit RGB or [H, W] as 8-bit grayscale. Values are
/// clamped to [0,1] and rounded to the nearest 1/255 step.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// [H, W, 3] image quantized to 8 bits per channel, as write_png would store it.
Tensor quantize_8bit(const Tensor& image);

}  // namespace rp2
