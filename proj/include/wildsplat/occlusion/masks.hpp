// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/image.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace wildsplat {

/// Replaces masked pixels with Gaussian noise whose per-channel mean and
/// variance come from the unmasked pixels, clamped to [0,1]. Unmasked pixels
/// are copied bit-for-bit. Throws DegeneracyError when every pixel is masked.
ImageRGB mask_noise_fill(const ImageRGB& image, const Mask& mask, std::mt19937_64& rng);

/// Square dilation by `radius` pixels (Chebyshev distance).
Mask dilate_mask(const Mask& mask, int radius);

/// Nearest-neighbour downsample of a [1,H,W] mask to [1,H/f,W/f]: cell
/// (i, j) takes pixel (f i + f/2, f j + f/2).
Mask downsample_mask(const Mask& mask, int64_t factor);

/// Flattened token mask of a [1,h,w] mask (row-major), for attention.
std::vector<float> token_mask(const Mask& mask);

/// M ⊙ a + (1 - M) ⊙ b for latents [C,S,S] and a latent-grid mask [1,S,S]
/// broadcast over channels. Each output element is copied from one source.
Tensor fuse_latents(const Tensor& a, const Tensor& b, const Mask& latent_mask);

} // namespace wildsplat
