// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <vector>

namespace wildsplat {

/// Linear-β diffusion schedule with an evenly strided DDIM sub-sequence.
class NoiseSchedule {
  public:
    explicit NoiseSchedule(int train_steps = 1000, int sample_steps = 50, double beta_start = 1e-4,
                           double beta_end = 0.02);

    int train_steps() const { return train_steps_; }
    int sample_steps() const { return sample_steps_; }
    int stride() const { return train_steps_ / sample_steps_; }

    /// ᾱ_t for t in [0, train_steps). Throws DomainError outside that range.
    double alpha_bar(int t) const;

    /// Timestep of DDIM step i, i in [0, sample_steps): i * stride.
    int timestep(int i) const;
    /// ᾱ of the state reached after DDIM step i when sampling: ᾱ of step
    /// i-1, or exactly 1 for i == 0 (the clean endpoint).
    double alpha_bar_prev(int i) const;

  private:
    int train_steps_;
    int sample_steps_;
    std::vector<double> alpha_bar_;
};

/// √ᾱ_t x0 + √(1-ᾱ_t) ε.
Tensor forward_diffuse(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps);

} // namespace wildsplat
