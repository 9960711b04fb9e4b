// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/cnve/enhance.hpp"

#include <algorithm>
#include <cmath>

namespace wildsplat {

namespace {

struct ChannelStats {
    double mean;
    double stddev;
};

ChannelStats channel_stats(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += x;
    const double mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (float x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

} // namespace

void DiffusionPrior::validate() const {
    const auto& a = base.config();
    const auto& b = constrained.config();
    if (a.latent_channels != b.latent_channels || a.latent_size != b.latent_size || a.widths != b.widths ||
        a.temb_dim != b.temb_dim || a.groups != b.groups)
        throw ContractError("base and constrained denoisers differ in architecture");
    if (codec.latent_channels() != a.latent_channels) throw ContractError("codec latent channels differ from the denoiser's");
}

ImageRGB adain_unclamped(const ImageRGB& content, const ImageRGB& reference) {
    if (content.rank() != 3 || reference.rank() != 3 || content.size(0) != reference.size(0))
        throw DimensionError("adain needs [C,H,W] images with equal channel counts, got " + shape_str(content.shape()) +
                             " and " + shape_str(reference.shape()));
    const int64_t c = content.size(0);
    const auto hw = static_cast<size_t>(content.size(1) * content.size(2));
    const auto rhw = static_cast<size_t>(reference.size(1) * reference.size(2));
    std::vector<float> out(content.data().begin(), content.data().end());
    for (int64_t ch = 0; ch < c; ++ch) {
        const auto ci = static_cast<size_t>(ch);
        const ChannelStats cs = channel_stats(content.data().subspan(ci * hw, hw));
        const ChannelStats rs = channel_stats(reference.data().subspan(ci * rhw, rhw));
        const double gain = rs.stddev / (cs.stddev + kAdainEps);
        for (size_t i = 0; i < hw; ++i) {
            auto& v = out[ci * hw + i];
            v = static_cast<float>(gain * (v - cs.mean) + rs.mean);
        }
    }
    return Tensor(content.shape(), std::move(out));
}

ImageRGB adain(const ImageRGB& content, const ImageRGB& reference) {
    Tensor out = adain_unclamped(content, reference);
    for (auto& v : out.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

ImageRGB enhance(const ImageRGB& rendered, const ImageRGB& reference, const DiffusionPrior& prior,
                 const EnhanceOptions& options) {
    prior.validate();
    if (rendered.rank() != 3 || rendered.size(0) != 3) throw DimensionError("enhance expects an RGB image, got " + shape_str(rendered.shape()));
    try {
        const Tensor z = prior.codec.encode(rendered);
        const Tensor x_T = ddim_invert(prior.base, prior.schedule, z);
        DualBranchOptions dual;
        dual.inject = options.inject;
        dual.mode = InjectionMode::Full;
        const DualBranchResult res = dual_branch_denoise(prior.base, prior.constrained, prior.schedule, x_T, dual);
        const ImageRGB decoded = prior.codec.decode_image(res.enhancement);
        return options.apply_adain ? adain(decoded, reference) : decoded;
    } catch (const NumericError& e) {
        throw NumericError(std::string("enhance: ") + e.what());
    }
}

} // namespace wildsplat
