// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/diffusion/schedule.hpp"

#include "wildsplat/tensor/ops.hpp"

#include <cmath>

namespace wildsplat {

NoiseSchedule::NoiseSchedule(int train_steps, int sample_steps, double beta_start, double beta_end)
    : train_steps_(train_steps), sample_steps_(sample_steps) {
    if (train_steps < 2) throw DomainError("schedule needs at least 2 training steps");
    if (sample_steps < 1 || train_steps % sample_steps != 0)
        throw DomainError("sample steps must evenly divide training steps (" + std::to_string(train_steps) + " / " +
                          std::to_string(sample_steps) + ")");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) throw DomainError("invalid beta range");
    alpha_bar_.resize(static_cast<size_t>(train_steps));
    double prod = 1.0;
    for (int t = 0; t < train_steps; ++t) {
        const double beta = beta_start + (beta_end - beta_start) * t / (train_steps - 1);
        prod *= 1.0 - beta;
        alpha_bar_[static_cast<size_t>(t)] = prod;
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= train_steps_) throw DomainError("timestep " + std::to_string(t) + " out of range");
    return alpha_bar_[static_cast<size_t>(t)];
}

int NoiseSchedule::timestep(int i) const {
    if (i < 0 || i >= sample_steps_) throw DomainError("DDIM step " + std::to_string(i) + " out of range");
    return i * stride();
}

double NoiseSchedule::alpha_bar_prev(int i) const { return i == 0 ? 1.0 : alpha_bar(timestep(i - 1)); }

Tensor forward_diffuse(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps) {
    if (x0.shape() != eps.shape())
        throw DimensionError("noise shape " + shape_str(eps.shape()) + " differs from " + shape_str(x0.shape()));
    const double ab = schedule.alpha_bar(t);
    return add(scale(x0, static_cast<float>(std::sqrt(ab))), scale(eps, static_cast<float>(std::sqrt(1.0 - ab))));
}

} // namespace wildsplat
