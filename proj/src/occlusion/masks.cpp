// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/occlusion/masks.hpp"

#include <algorithm>
#include <cmath>

namespace wildsplat {

namespace {

void check_mask_for(const ImageRGB& image, const Mask& mask) {
    if (image.rank() != 3 || mask.rank() != 3 || mask.size(0) != 1 || image.size(1) != mask.size(1) ||
        image.size(2) != mask.size(2))
        throw DimensionError("mask " + shape_str(mask.shape()) + " does not match image " + shape_str(image.shape()));
}

} // namespace

ImageRGB mask_noise_fill(const ImageRGB& image, const Mask& mask, std::mt19937_64& rng) {
    check_mask_for(image, mask);
    const int64_t c = image.size(0), hw = image.size(1) * image.size(2);
    const auto m = mask.data();
    const auto in = image.data();
    int64_t free = 0;
    for (float v : m) free += v == 0.0f;
    if (free == 0) throw DegeneracyError("mask covers every pixel; no statistics source for noise fill");
    std::vector<float> out(in.begin(), in.end());
    if (free == hw) return Tensor(image.shape(), std::move(out));
    std::vector<double> mu(static_cast<size_t>(c)), sd(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0, s2 = 0.0;
        for (int64_t i = 0; i < hw; ++i)
            if (m[static_cast<size_t>(i)] == 0.0f) {
                const double v = in[static_cast<size_t>(ch * hw + i)];
                s += v;
                s2 += v * v;
            }
        mu[static_cast<size_t>(ch)] = s / static_cast<double>(free);
        sd[static_cast<size_t>(ch)] = std::sqrt(std::max(0.0, s2 / static_cast<double>(free) - mu[static_cast<size_t>(ch)] * mu[static_cast<size_t>(ch)]));
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int64_t i = 0; i < hw; ++i) {
        if (m[static_cast<size_t>(i)] == 0.0f) continue;
        for (int64_t ch = 0; ch < c; ++ch) {
            const double v = mu[static_cast<size_t>(ch)] + sd[static_cast<size_t>(ch)] * normal(rng);
            out[static_cast<size_t>(ch * hw + i)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return Tensor(image.shape(), std::move(out));
}

Mask dilate_mask(const Mask& mask, int radius) {
    if (mask.rank() != 3 || mask.size(0) != 1) throw DimensionError("expected [1,H,W] mask, got " + shape_str(mask.shape()));
    if (radius < 0) throw DomainError("dilation radius must be nonnegative");
    const int64_t h = mask.size(1), w = mask.size(2);
    const auto m = mask.data();
    // Separable max filter: rows, then columns.
    std::vector<float> rows(m.size()), out(m.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float v = 0.0f;
            for (int64_t dx = std::max<int64_t>(0, x - radius); dx <= std::min<int64_t>(w - 1, x + radius); ++dx)
                v = std::max(v, m[static_cast<size_t>(y * w + dx)]);
            rows[static_cast<size_t>(y * w + x)] = v;
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float v = 0.0f;
            for (int64_t dy = std::max<int64_t>(0, y - radius); dy <= std::min<int64_t>(h - 1, y + radius); ++dy)
                v = std::max(v, rows[static_cast<size_t>(dy * w + x)]);
            out[static_cast<size_t>(y * w + x)] = v;
        }
    return Tensor(mask.shape(), std::move(out));
}

Mask downsample_mask(const Mask& mask, int64_t factor) {
    if (mask.rank() != 3 || mask.size(0) != 1) throw DimensionError("expected [1,H,W] mask, got " + shape_str(mask.shape()));
    if (factor <= 0 || mask.size(1) % factor != 0 || mask.size(2) % factor != 0)
        throw DimensionError("mask " + shape_str(mask.shape()) + " not divisible by " + std::to_string(factor));
    const int64_t h = mask.size(1) / factor, w = mask.size(2) / factor, src_w = mask.size(2);
    std::vector<float> out(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            out[static_cast<size_t>(i * w + j)] = mask.data()[static_cast<size_t>((factor * i + factor / 2) * src_w + factor * j + factor / 2)];
    return Tensor({1, h, w}, std::move(out));
}

std::vector<float> token_mask(const Mask& mask) { return {mask.data().begin(), mask.data().end()}; }

Tensor fuse_latents(const Tensor& a, const Tensor& b, const Mask& latent_mask) {
    if (a.shape() != b.shape() || a.rank() != 3)
        throw DimensionError("fuse_latents needs equal [C,S,S] latents, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    if (latent_mask.rank() != 3 || latent_mask.size(0) != 1 || latent_mask.size(1) != a.size(1) || latent_mask.size(2) != a.size(2))
        throw DimensionError("latent mask " + shape_str(latent_mask.shape()) + " does not match " + shape_str(a.shape()));
    const int64_t c = a.size(0), hw = a.size(1) * a.size(2);
    const auto m = latent_mask.data();
    std::vector<float> out(static_cast<size_t>(a.numel()));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) {
            const auto k = static_cast<size_t>(ch * hw + i);
            out[k] = m[static_cast<size_t>(i)] != 0.0f ? a.data()[k] : b.data()[k];
        }
    return Tensor(a.shape(), std::move(out));
}

} // namespace wildsplat
