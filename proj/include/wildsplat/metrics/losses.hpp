// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/image.hpp"
#include "wildsplat/tensor/tensor.hpp"

#include <vector>

namespace wildsplat {

struct LossWeights {
    float lambda1 = 0.8f; ///< L1 term
    float lambda2 = 0.2f; ///< 1 - SSIM term
    float lambda3 = 1.0f; ///< weight of the consistency loss in the total

    void validate() const;
};

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kPsnrDisplayCap = 99.0;

/// Normalized 1D Gaussian window (size 11, sigma 1.5) as stored in f32.
std::vector<float> ssim_kernel();

/// Σ x·w / Σ w with double accumulation. `w` has x's shape and is a constant.
/// With w ≡ 1 the value is bit-identical to mean(x).
Tensor weighted_mean(const Tensor& x, const std::vector<float>& w);

Tensor l1(const Tensor& a, const Tensor& b);

/// Local SSIM map [C, H-10, W-10].
Tensor ssim_map(const Tensor& a, const Tensor& b);
/// Mean local SSIM. Throws DimensionError for images smaller than 11x11.
Tensor ssim(const Tensor& a, const Tensor& b);

/// λ1 L1 + λ2 (1 - SSIM).
Tensor loss_c(const Tensor& image, const Tensor& target, const LossWeights& w = {});

/// L1 over pixels outside the mask, normalized by the unmasked pixel count.
Tensor masked_l1(const Tensor& a, const Tensor& b, const Mask& mask);
/// SSIM averaged over windows that contain no masked pixel. When no window
/// qualifies the result is the constant 1 (the term contributes nothing).
Tensor masked_ssim(const Tensor& a, const Tensor& b, const Mask& mask);
/// λ1 masked L1 + λ2 (1 - masked SSIM). Equal to loss_c when the mask is
/// all zeros.
Tensor masked_loss_c(const Tensor& image, const Tensor& target, const Mask& mask, const LossWeights& w = {});

/// L_o + λ3 L_c.
Tensor loss_total(const Tensor& l_o, const Tensor& l_c, float lambda3);

/// 10 log10(1 / MSE). Identical images give +infinity.
double psnr(const Tensor& a, const Tensor& b);
/// PSNR clamped to the display cap (for logs, CSVs and averages).
double psnr_capped(const Tensor& a, const Tensor& b);
double ssim_value(const Tensor& a, const Tensor& b);
/// Mean squared error restricted to pixels where `mask` is 1.
double masked_mse(const Tensor& a, const Tensor& b, const Mask& mask);

/// Not FID: mean L2 distance between per-patch (8x8, non-overlapping)
/// channel mean/std feature vectors of two images. Lower is closer.
double patch_stat_distance(const Tensor& a, const Tensor& b);

} // namespace wildsplat
