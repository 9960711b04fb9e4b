// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/diffusion/attention.hpp"

#include "wildsplat/tensor/ops.hpp"

#include <cmath>

namespace wildsplat {

namespace {

const char* role_name(BranchRole r) { return r == BranchRole::Reconstruction ? "reconstruction" : "enhancement"; }

} // namespace

Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DimensionError("self_attention expects [tokens, d] operands");
    if (q.size(1) != k.size(1)) throw DimensionError("query/key dims differ: " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    if (k.size(0) != v.size(0)) throw DimensionError("key/value token counts differ");
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(q.size(1)));
    return matmul(softmax(scale(matmul(q, transpose(k)), inv_sqrt_d), 1), v);
}

void AttentionTape::record(int step, BranchRole role, AttentionRecord rec) {
    if (contains(step, role))
        throw StateError("attention tape already holds step " + std::to_string(step) + " for " + role_name(role));
    if (!records_.empty()) {
        const auto& first = records_.begin()->second;
        if (first.q.shape() != rec.q.shape() || first.k.shape() != rec.k.shape())
            throw StateError("attention record shapes changed between steps");
    }
    records_.emplace(std::make_pair(step, role), std::move(rec));
}

const AttentionRecord& AttentionTape::at(int step, BranchRole role) const {
    const auto it = records_.find({step, role});
    if (it == records_.end())
        throw StateError("attention tape has no record for step " + std::to_string(step) + " (" + role_name(role) + ")");
    return it->second;
}

Tensor blend_tokens(const Tensor& a, const Tensor& b, const std::vector<float>& token_mask) {
    if (a.shape() != b.shape() || a.rank() != 2) throw DimensionError("blend_tokens expects equal [tokens, d] shapes");
    if (static_cast<int64_t>(token_mask.size()) != a.size(0))
        throw DimensionError("token mask length " + std::to_string(token_mask.size()) + " != " + std::to_string(a.size(0)));
    std::vector<float> inv(token_mask.size());
    for (size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0f - token_mask[i];
    const Tensor m({a.size(0), 1}, token_mask);
    const Tensor mi({a.size(0), 1}, std::move(inv));
    return add(mul(m, a), mul(mi, b));
}

Tensor injected_attention(const AttentionTape& tape, int step, const Tensor& v_e, InjectionMode mode,
                          const std::vector<float>& token_mask) {
    const auto& rec = tape.at(step, BranchRole::Reconstruction);
    if (mode == InjectionMode::Full) return self_attention(rec.q, rec.k, v_e);
    const auto& enh = tape.at(step, BranchRole::Enhancement);
    const auto q = blend_tokens(enh.q, rec.q, token_mask);
    const auto k = blend_tokens(enh.k, rec.k, token_mask);
    return self_attention(q, k, v_e);
}

} // namespace wildsplat
