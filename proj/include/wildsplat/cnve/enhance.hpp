// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/diffusion/codec.hpp"
#include "wildsplat/diffusion/ddim.hpp"
#include "wildsplat/diffusion/denoiser.hpp"
#include "wildsplat/diffusion/schedule.hpp"
#include "wildsplat/scene/image.hpp"

#include <filesystem>

namespace wildsplat {

/// Codec plus the base and constrained denoisers that the enhancement and
/// inpainting passes run on.
struct DiffusionPrior {
    LatentCodec codec;
    DenoiserModel base;
    DenoiserModel constrained;
    NoiseSchedule schedule;

    /// Throws ContractError if the two models differ in architecture.
    void validate() const;
};

inline constexpr double kAdainEps = 1e-6;

/// Per-channel σ_ref (content - μ_content) / (σ_content + 1e-6) + μ_ref,
/// without clamping. Population statistics.
ImageRGB adain_unclamped(const ImageRGB& content, const ImageRGB& reference);
/// adain_unclamped followed by a clamp to [0,1].
ImageRGB adain(const ImageRGB& content, const ImageRGB& reference);

struct EnhanceOptions {
    /// Attention injection from the reconstruction branch.
    bool inject = true;
    bool apply_adain = true;
};

/// Pseudo ground truth for a rendered novel view: encode, invert with the
/// base model, denoise in two lockstep branches with full injection, decode
/// the enhancement branch and transfer the reference appearance. Depends
/// only on images and models, not on any renderer.
ImageRGB enhance(const ImageRGB& rendered, const ImageRGB& reference, const DiffusionPrior& prior,
                 const EnhanceOptions& options = {});

} // namespace wildsplat
