// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

// Per-window SSIM evaluated directly from its definition in double
// precision: for each 11x11 window, Gaussian-weighted means, variances and
// covariance, then the SSIM ratio; the result is the mean over windows and
// channels.

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <cmath>

namespace wildsplat::testing {

inline double brute_force_ssim(const Tensor& a, const Tensor& b) {
    const int64_t c = a.size(0), h = a.size(1), w = a.size(2);
    double g[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
            total += g[i][j];
        }
    for (auto& row : g)
        for (double& v : row) v /= total;
    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0.0;
    int64_t windows = 0;
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t oy = 0; oy + 11 <= h; ++oy)
            for (int64_t ox = 0; ox + 11 <= w; ++ox) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double va = a[(ch * h + oy + i) * w + ox + j];
                        const double vb = b[(ch * h + oy + i) * w + ox + j];
                        ma += g[i][j] * va;
                        mb += g[i][j] * vb;
                        saa += g[i][j] * va * va;
                        sbb += g[i][j] * vb * vb;
                        sab += g[i][j] * va * vb;
                    }
                saa -= ma * ma;
                sbb -= mb * mb;
                sab -= ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
                ++windows;
            }
    return acc / static_cast<double>(windows);
}

} // namespace wildsplat::testing
