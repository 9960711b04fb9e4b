// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/diffusion/attention.hpp"
#include "wildsplat/tensor/tensor.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace wildsplat {

struct DenoiserConfig {
    int64_t latent_channels = 4;
    int64_t latent_size = 32;
    /// Channel widths of the three resolution levels (32, 16 and 8 px).
    std::array<int64_t, 3> widths{16, 32, 64};
    int64_t temb_dim = 64;
    int64_t groups = 8;

    void validate() const;
};

enum class DenoiserVariant { Base, Constrained };

const char* variant_name(DenoiserVariant v);

/// ε-prediction network: a three-level encoder/decoder of residual conv
/// blocks with skip connections, a sinusoidal timestep embedding injected
/// into every block, and one self-attention block at the 8x8 bottleneck
/// (64 tokens). The bottleneck attention can be replaced per call.
class DenoiserModel {
  public:
    explicit DenoiserModel(DenoiserConfig config = {}, uint64_t seed = 0);

    /// x: [C, S, S] latent, t: diffusion timestep. Output has x's shape.
    Tensor forward(const Tensor& x, int t, const AttentionFn* attention = nullptr) const;

    const DenoiserConfig& config() const { return config_; }
    DenoiserVariant variant() const { return variant_; }
    void set_variant(DenoiserVariant v) { variant_ = v; }

    const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
    std::vector<Tensor> parameters() const;
    int64_t parameter_count() const;

    /// Deep copy; gradients are not copied.
    DenoiserModel clone() const;
    /// True when every parameter is bit-identical to `other`'s.
    bool same_weights(const DenoiserModel& other) const;

    void save(const std::filesystem::path& dir) const;
    static DenoiserModel load(const std::filesystem::path& dir);

  private:
    struct Uninitialized {};
    DenoiserModel(DenoiserConfig config, Uninitialized);

    const Tensor& p(const std::string& name) const;
    Tensor& add_param(const std::string& name, Tensor value);
    void build(uint64_t seed);

    Tensor res_block(const std::string& name, const Tensor& x, const Tensor& temb) const;
    Tensor attention_block(const Tensor& x, const AttentionFn* attention) const;

    DenoiserConfig config_;
    DenoiserVariant variant_ = DenoiserVariant::Base;
    std::vector<std::pair<std::string, Tensor>> params_;
};

/// Sinusoidal embedding [1, dim] of timestep t.
Tensor timestep_embedding(int t, int64_t dim);

} // namespace wildsplat
