// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <string>
#include <vector>

namespace wildsplat {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Adam with per-group learning rates. Moments persist across `step()` calls
/// and can be exported for checkpoint/resume.
class Adam {
  public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Registers leaves with their own learning rate (defaults to config lr).
    void add_group(std::vector<Tensor> params, float lr = -1.0f);

    /// Applies one update. Every parameter must carry a gradient.
    void step();
    void zero_grad();

    void set_lr(size_t group, float lr) { groups_.at(group).lr = lr; }
    float lr(size_t group) const { return groups_.at(group).lr; }
    int64_t steps() const { return step_; }

    /// Flattened optimizer state: first moments, second moments (one tensor
    /// each per parameter, in registration order) and the step counter.
    std::vector<Tensor> state() const;
    void load_state(const std::vector<Tensor>& state);

  private:
    struct Slot {
        Tensor param;
        std::vector<float> m;
        std::vector<float> v;
    };
    struct Group {
        float lr;
        std::vector<Slot> slots;
    };
    AdamConfig config_;
    std::vector<Group> groups_;
    int64_t step_ = 0;
};

} // namespace wildsplat
