// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/cnve/enhance.hpp"
#include "wildsplat/scene/image.hpp"

namespace wildsplat {

struct InpaintOptions {
    /// Square dilation of the occluder mask in pixels.
    int dilation = 2;
    bool apply_adain = true;
    /// Copy the ground truth back outside the dilated mask.
    bool paste_known = true;
};

/// Pseudo ground truth for an occluded training view. Both the render and
/// the ground truth are inverted with the base model; their latents are
/// fused under the (dilated, latent-grid) mask and denoised in two lockstep
/// branches with masked attention fusion. The enhancement result is
/// decoded, matched to the reference appearance and, outside the dilated
/// mask, replaced by the ground truth.
ImageRGB inpaint_occlusion(const ImageRGB& rendered, const ImageRGB& ground_truth, const Mask& mask,
                           const ImageRGB& reference, const DiffusionPrior& prior, const InpaintOptions& options = {});

} // namespace wildsplat
