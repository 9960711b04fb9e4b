// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <filesystem>

namespace wildsplat {

/// Images are [3,H,W] tensors with values in [0,1]; masks are [1,H,W]
/// tensors with values in {0,1}, 1 marking a transient occluder.
using ImageRGB = Tensor;
using Mask = Tensor;

/// Throws DimensionError on a bad shape and DomainError on non-finite or
/// out-of-range values. Zero `height`/`width` skips the size check.
void validate_image(const ImageRGB& image, int64_t height = 0, int64_t width = 0);
void validate_mask(const Mask& mask, int64_t height = 0, int64_t width = 0);

/// 8-bit RGB PNG, values quantized as round(255 v).
ImageRGB read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const ImageRGB& image);

/// Single-channel PNG, 0 / 255. Any nonzero pixel reads as 1.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Rounds every value to the nearest multiple of 1/255 (what a PNG round
/// trip would store).
ImageRGB quantize8(const ImageRGB& image);

} // namespace wildsplat
