// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/tensor/optim.hpp"

#include <cmath>

namespace wildsplat {

void Adam::add_group(std::vector<Tensor> params, float lr) {
    Group g;
    g.lr = lr < 0.0f ? config_.lr : lr;
    for (auto& p : params) {
        if (!p.is_leaf()) throw ContractError("Adam parameters must be leaves");
        p.set_requires_grad(true);
        const auto n = static_cast<size_t>(p.numel());
        g.slots.push_back(Slot{p, std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)});
    }
    groups_.push_back(std::move(g));
}

void Adam::step() {
    for (const auto& g : groups_)
        for (const auto& s : g.slots)
            if (!s.param.has_grad()) throw StateError("Adam::step: parameter without gradient");

    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(config_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(config_.beta2), static_cast<double>(step_));
    for (auto& g : groups_) {
        const float step_size = static_cast<float>(g.lr / bc1);
        const float bc2_sqrt = static_cast<float>(std::sqrt(bc2));
        for (auto& s : g.slots) {
            auto x = s.param.mutable_data();
            const auto grad = s.param.grad();
            for (size_t i = 0; i < x.size(); ++i) {
                s.m[i] = config_.beta1 * s.m[i] + (1.0f - config_.beta1) * grad[i];
                s.v[i] = config_.beta2 * s.v[i] + (1.0f - config_.beta2) * grad[i] * grad[i];
                const float denom = std::sqrt(s.v[i]) / bc2_sqrt + config_.eps;
                x[i] -= step_size * s.m[i] / denom;
            }
        }
    }
}

void Adam::zero_grad() {
    for (auto& g : groups_)
        for (auto& s : g.slots) s.param.zero_grad();
}

std::vector<Tensor> Adam::state() const {
    std::vector<Tensor> out;
    for (const auto& g : groups_)
        for (const auto& s : g.slots) out.emplace_back(s.param.shape(), s.m);
    for (const auto& g : groups_)
        for (const auto& s : g.slots) out.emplace_back(s.param.shape(), s.v);
    out.push_back(Tensor::scalar(static_cast<float>(step_)));
    return out;
}

void Adam::load_state(const std::vector<Tensor>& state) {
    size_t n = 0;
    for (const auto& g : groups_) n += g.slots.size();
    if (state.size() != 2 * n + 1) throw ContractError("Adam::load_state: state size mismatch");
    size_t i = 0;
    for (auto& g : groups_)
        for (auto& s : g.slots) {
            if (state[i].numel() != s.param.numel()) throw DimensionError("Adam::load_state: moment shape");
            s.m.assign(state[i].data().begin(), state[i].data().end());
            ++i;
        }
    for (auto& g : groups_)
        for (auto& s : g.slots) {
            if (state[i].numel() != s.param.numel()) throw DimensionError("Adam::load_state: moment shape");
            s.v.assign(state[i].data().begin(), state[i].data().end());
            ++i;
        }
    step_ = static_cast<int64_t>(state[i].item());
}

} // namespace wildsplat
