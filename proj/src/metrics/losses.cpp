// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/metrics/losses.hpp"

#include "wildsplat/tensor/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace wildsplat {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_mask_for(const Tensor& image, const Mask& mask) {
    if (image.rank() != 3 || mask.rank() != 3 || mask.size(0) != 1 || mask.size(1) != image.size(1) ||
        mask.size(2) != image.size(2))
        throw DimensionError("mask " + shape_str(mask.shape()) + " does not match image " + shape_str(image.shape()));
}

} // namespace

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw DomainError("loss weights must be nonnegative");
}

std::vector<float> ssim_kernel() {
    std::vector<double> g(kSsimWindow);
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += g[static_cast<size_t>(i)];
    }
    std::vector<float> out;
    for (double v : g) out.push_back(static_cast<float>(v / total));
    return out;
}

Tensor weighted_mean(const Tensor& x, const std::vector<float>& w) {
    if (static_cast<int64_t>(w.size()) != x.numel()) throw DimensionError("weighted_mean: weight size mismatch");
    double num = 0.0, den = 0.0;
    const auto xv = x.data();
    for (size_t i = 0; i < w.size(); ++i) {
        num += static_cast<double>(xv[i] * w[i]);
        den += w[i];
    }
    if (!(den > 0.0)) throw DegeneracyError("weighted_mean: all weights are zero");
    auto weights = std::make_shared<std::vector<float>>(w);
    return make_result(Shape{1}, {static_cast<float>(num / den)}, {x}, "weighted_mean",
                       [weights, den](std::span<const float> g, std::span<float* const> gi) {
                           if (!gi[0]) return;
                           for (size_t i = 0; i < weights->size(); ++i)
                               gi[0][i] += static_cast<float>(g[0] * (*weights)[i] / den);
                       });
}

Tensor l1(const Tensor& a, const Tensor& b) {
    require_same(a, b, "l1");
    return mean(abs(sub(a, b)));
}

Tensor ssim_map(const Tensor& a, const Tensor& b) {
    require_same(a, b, "ssim");
    if (a.rank() != 3 || a.size(1) < kSsimWindow || a.size(2) < kSsimWindow)
        throw DimensionError("ssim needs [C,H,W] with H,W >= 11, got " + shape_str(a.shape()));
    const auto k = ssim_kernel();
    const auto mu1 = separable_filter_valid(a, k);
    const auto mu2 = separable_filter_valid(b, k);
    const auto mu1_sq = mul(mu1, mu1);
    const auto mu2_sq = mul(mu2, mu2);
    const auto mu12 = mul(mu1, mu2);
    const auto s11 = sub(separable_filter_valid(mul(a, a), k), mu1_sq);
    const auto s22 = sub(separable_filter_valid(mul(b, b), k), mu2_sq);
    const auto s12 = sub(separable_filter_valid(mul(a, b), k), mu12);
    const float c1 = static_cast<float>(kSsimC1), c2 = static_cast<float>(kSsimC2);
    const auto num = mul(add_scalar(scale(mu12, 2.0f), c1), add_scalar(scale(s12, 2.0f), c2));
    const auto den = mul(add_scalar(add(mu1_sq, mu2_sq), c1), add_scalar(add(s11, s22), c2));
    return div(num, den);
}

Tensor ssim(const Tensor& a, const Tensor& b) { return mean(ssim_map(a, b)); }

Tensor loss_c(const Tensor& image, const Tensor& target, const LossWeights& w) {
    w.validate();
    return add(scale(l1(image, target), w.lambda1), scale(add_scalar(scale(ssim(image, target), -1.0f), 1.0f), w.lambda2));
}

Tensor masked_l1(const Tensor& a, const Tensor& b, const Mask& mask) {
    require_same(a, b, "masked_l1");
    require_mask_for(a, mask);
    const int64_t c = a.size(0), plane = a.size(1) * a.size(2);
    std::vector<float> keep(static_cast<size_t>(c * plane));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < plane; ++p) keep[static_cast<size_t>(ch * plane + p)] = 1.0f - mask[p];
    return weighted_mean(abs(sub(a, b)), keep);
}

Tensor masked_ssim(const Tensor& a, const Tensor& b, const Mask& mask) {
    require_mask_for(a, mask);
    const auto map = ssim_map(a, b);
    const int64_t c = map.size(0), ho = map.size(1), wo = map.size(2), h = a.size(1), w = a.size(2);
    // Integral image of the mask to test each window for masked pixels.
    std::vector<double> integral(static_cast<size_t>((h + 1) * (w + 1)), 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            integral[static_cast<size_t>((y + 1) * (w + 1) + x + 1)] =
                mask[y * w + x] + integral[static_cast<size_t>(y * (w + 1) + x + 1)] +
                integral[static_cast<size_t>((y + 1) * (w + 1) + x)] - integral[static_cast<size_t>(y * (w + 1) + x)];
    auto at = [&](int64_t y, int64_t x) { return integral[static_cast<size_t>(y * (w + 1) + x)]; };
    std::vector<float> valid(static_cast<size_t>(c * ho * wo));
    bool any = false;
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t y1 = oy + kSsimWindow, x1 = ox + kSsimWindow;
            const double masked = at(y1, x1) - at(oy, x1) - at(y1, ox) + at(oy, ox);
            const float v = masked == 0.0 ? 1.0f : 0.0f;
            any = any || v > 0.0f;
            for (int64_t ch = 0; ch < c; ++ch) valid[static_cast<size_t>((ch * ho + oy) * wo + ox)] = v;
        }
    if (!any) return Tensor::scalar(1.0f);
    return weighted_mean(map, valid);
}

Tensor masked_loss_c(const Tensor& image, const Tensor& target, const Mask& mask, const LossWeights& w) {
    w.validate();
    return add(scale(masked_l1(image, target, mask), w.lambda1),
               scale(add_scalar(scale(masked_ssim(image, target, mask), -1.0f), 1.0f), w.lambda2));
}

Tensor loss_total(const Tensor& l_o, const Tensor& l_c, float lambda3) {
    if (l_o.numel() != 1 || l_c.numel() != 1) throw ContractError("loss_total expects scalar losses");
    if (lambda3 < 0) throw DomainError("lambda3 must be nonnegative");
    return add(l_o, scale(l_c, lambda3));
}

double psnr(const Tensor& a, const Tensor& b) {
    require_same(a, b, "psnr");
    double se = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - b[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double psnr_capped(const Tensor& a, const Tensor& b) { return std::min(psnr(a, b), kPsnrDisplayCap); }

double ssim_value(const Tensor& a, const Tensor& b) {
    NoGradGuard ng;
    return ssim(a, b).item();
}

double masked_mse(const Tensor& a, const Tensor& b, const Mask& mask) {
    require_same(a, b, "masked_mse");
    require_mask_for(a, mask);
    const int64_t c = a.size(0), plane = a.size(1) * a.size(2);
    double se = 0.0;
    int64_t count = 0;
    for (int64_t p = 0; p < plane; ++p) {
        if (mask[p] == 0.0f) continue;
        for (int64_t ch = 0; ch < c; ++ch) {
            const double d = double(a[ch * plane + p]) - b[ch * plane + p];
            se += d * d;
        }
        count += c;
    }
    if (count == 0) throw DegeneracyError("masked_mse: mask is empty");
    return se / static_cast<double>(count);
}

double patch_stat_distance(const Tensor& a, const Tensor& b) {
    require_same(a, b, "patch_stat_distance");
    const int64_t c = a.size(0), h = a.size(1), w = a.size(2), p = 8;
    if (h < p || w < p) throw DimensionError("patch_stat_distance needs images of at least 8x8");
    double total = 0.0;
    int64_t patches = 0;
    for (int64_t py = 0; py + p <= h; py += p)
        for (int64_t px = 0; px + p <= w; px += p) {
            double dist2 = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                double stats[2][2] = {{0, 0}, {0, 0}};
                for (int img = 0; img < 2; ++img) {
                    const Tensor& t = img == 0 ? a : b;
                    double s = 0.0, s2 = 0.0;
                    for (int64_t y = py; y < py + p; ++y)
                        for (int64_t x = px; x < px + p; ++x) {
                            const double v = t[(ch * h + y) * w + x];
                            s += v;
                            s2 += v * v;
                        }
                    const double m = s / (p * p);
                    stats[img][0] = m;
                    stats[img][1] = std::sqrt(std::max(0.0, s2 / (p * p) - m * m));
                }
                dist2 += std::pow(stats[0][0] - stats[1][0], 2) + std::pow(stats[0][1] - stats[1][1], 2);
            }
            total += std::sqrt(dist2);
            ++patches;
        }
    return total / static_cast<double>(patches);
}

} // namespace wildsplat
