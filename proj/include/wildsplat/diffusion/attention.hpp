// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <functional>
#include <map>
#include <utility>

namespace wildsplat {

/// softmax(Q Kᵀ / √d) V for Q, K, V of shape [tokens, d].
Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v);

enum class BranchRole { Reconstruction, Enhancement };

struct AttentionRecord {
    Tensor q;
    Tensor k;
    Tensor v;
};

/// Q, K, V captured at the bottleneck attention, one record per
/// (DDIM step, branch role).
class AttentionTape {
  public:
    /// Throws StateError if the (step, role) slot is already filled or the
    /// shapes differ from earlier records.
    void record(int step, BranchRole role, AttentionRecord rec);
    /// Throws StateError when the record is missing.
    const AttentionRecord& at(int step, BranchRole role) const;
    bool contains(int step, BranchRole role) const { return records_.count({step, role}) > 0; }
    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

  private:
    std::map<std::pair<int, BranchRole>, AttentionRecord> records_;
};

enum class InjectionMode {
    /// Q, K from the reconstruction branch, V from the enhancement branch.
    Full,
    /// Per-token blend: masked tokens keep the enhancement Q, K; the rest
    /// take the reconstruction Q, K. V from the enhancement branch.
    Masked,
};

/// Attention output for the enhancement branch at `step` using the tape.
/// Masked mode needs both roles recorded and a token mask of length
/// `tokens` with values in {0, 1}.
Tensor injected_attention(const AttentionTape& tape, int step, const Tensor& v_e, InjectionMode mode,
                          const std::vector<float>& token_mask = {});

/// M ⊙ a + (1 - M) ⊙ b with M broadcast over the feature dimension of
/// [tokens, d] tensors.
Tensor blend_tokens(const Tensor& a, const Tensor& b, const std::vector<float>& token_mask);

/// Replaces the bottleneck attention computation of the denoiser.
/// Receives Q, K, V [tokens, d] and returns the attention output.
using AttentionFn = std::function<Tensor(const Tensor& q, const Tensor& k, const Tensor& v)>;

} // namespace wildsplat
