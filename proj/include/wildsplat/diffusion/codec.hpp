// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/image.hpp"

#include <filesystem>
#include <vector>

namespace wildsplat {

/// [C,H,W] -> [C*f*f, H/f, W/f]. Output channel (c*f + dy)*f + dx holds
/// pixel (y*f + dy, x*f + dx) of input channel c.
Tensor space_to_depth(const Tensor& x, int64_t factor);
/// Inverse of space_to_depth.
Tensor depth_to_space(const Tensor& x, int64_t factor);

/// Maps [3,128,128] images to [4,32,32] latents: a fixed 4x space-to-depth
/// (48 channels per 32x32 site) followed by a linear 48->4 projection, and
/// back through the paired 4->48 map. The latent channels are standardized
/// to zero mean and unit variance over the fitting set.
class LatentCodec {
  public:
    static constexpr int64_t kPatch = 4;

    /// Fits the linear pair to minimize mean squared reconstruction error
    /// over all patches of `images`: the top principal directions of the
    /// patch distribution, which is the exact optimum for a linear pair.
    static LatentCodec fit(const std::vector<ImageRGB>& images, int64_t latent_channels = 4);

    int64_t latent_channels() const { return static_cast<int64_t>(latent_mean_.size()); }
    int64_t patch_dim() const { return static_cast<int64_t>(patch_mean_.size()); }

    Tensor encode(const ImageRGB& image) const;
    /// Unclamped decode; use decode_image for a valid image.
    Tensor decode(const Tensor& latent) const;
    ImageRGB decode_image(const Tensor& latent) const;

    void save(const std::filesystem::path& dir) const;
    static LatentCodec load(const std::filesystem::path& dir);

  private:
    std::vector<double> patch_mean_;  // [P]
    std::vector<double> basis_;       // [L, P] orthonormal rows
    std::vector<double> latent_mean_; // [L]
    std::vector<double> latent_std_;  // [L]
};

} // namespace wildsplat
