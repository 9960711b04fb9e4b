// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

// Central finite differences, used as the independent gradient oracle.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace wildsplat::testing {

/// d f / d x_i for every i, by (f(x + h e_i) - f(x - h e_i)) / 2h using the
/// step actually representable in f32.
inline std::vector<double> central_differences(std::vector<float>& x, const std::function<double()>& f,
                                               double h = 1e-3) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const float saved = x[i];
        const float hi = static_cast<float>(saved + h);
        const float lo = static_cast<float>(saved - h);
        x[i] = hi;
        const double plus = f();
        x[i] = lo;
        const double minus = f();
        x[i] = saved;
        g[i] = (plus - minus) / (static_cast<double>(hi) - static_cast<double>(lo));
    }
    return g;
}

/// ||a - b|| / max(||b||, floor).
template <typename A, typename B>
double relative_error(const A& a, const B& b, double floor = 1e-6) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < b.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

} // namespace wildsplat::testing
