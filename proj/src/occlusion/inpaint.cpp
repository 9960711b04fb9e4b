// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/occlusion/inpaint.hpp"

#include "wildsplat/occlusion/masks.hpp"

namespace wildsplat {

ImageRGB inpaint_occlusion(const ImageRGB& rendered, const ImageRGB& ground_truth, const Mask& mask,
                           const ImageRGB& reference, const DiffusionPrior& prior, const InpaintOptions& options) {
    prior.validate();
    if (rendered.shape() != ground_truth.shape() || rendered.rank() != 3)
        throw DimensionError("render " + shape_str(rendered.shape()) + " and ground truth " + shape_str(ground_truth.shape()) + " differ");
    validate_mask(mask, rendered.size(1), rendered.size(2));
    const int64_t s = prior.base.config().latent_size;
    if (rendered.size(1) % s != 0 || rendered.size(1) != rendered.size(2))
        throw DimensionError("image size does not map onto the latent grid");
    const int64_t latent_factor = rendered.size(1) / s;
    const int64_t tokens_side = s / 4;
    const Mask dilated = dilate_mask(mask, options.dilation);
    try {
        const Tensor x_r = ddim_invert(prior.base, prior.schedule, prior.codec.encode(rendered));
        const Tensor x_gt = ddim_invert(prior.base, prior.schedule, prior.codec.encode(ground_truth));
        const Tensor x_fused = fuse_latents(x_r, x_gt, downsample_mask(dilated, latent_factor));
        DualBranchOptions dual;
        dual.inject = true;
        dual.mode = InjectionMode::Masked;
        dual.token_mask = token_mask(downsample_mask(dilated, rendered.size(1) / tokens_side));
        const DualBranchResult res = dual_branch_denoise(prior.base, prior.constrained, prior.schedule, x_fused, dual);
        ImageRGB out = prior.codec.decode_image(res.enhancement);
        if (options.apply_adain) out = adain(out, reference);
        if (options.paste_known) {
            const auto m = dilated.data();
            const auto hw = static_cast<size_t>(m.size());
            auto px = out.mutable_data();
            for (size_t c = 0; c < 3; ++c)
                for (size_t i = 0; i < hw; ++i)
                    if (m[i] == 0.0f) px[c * hw + i] = ground_truth.data()[c * hw + i];
        }
        return out;
    } catch (const NumericError& e) {
        throw NumericError(std::string("inpaint: ") + e.what());
    }
}

} // namespace wildsplat
