// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/cnve/enhance.hpp"
#include "wildsplat/psts/trainer.hpp"
#include "wildsplat/synth/dataset.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace wildsplat {

/// FNV-1a 64 of `text` as 16 hex digits.
std::string fingerprint(const std::string& text);

/// Codec and base denoiser trained on renders of procedurally generated
/// scenes (seeds from kPriorSeedBase, disjoint from evaluation scenes).
struct PriorConfig {
    int scenes = 40;
    int views_per_scene = 8;
    int train_steps = 1500;
    int batch = 4;
    float lr = 1e-3f;
    uint64_t seed = 0;
    /// Side of the square corpus renders; must match the scenes the prior serves.
    int image_size = 128;
    DenoiserConfig denoiser;

    std::string describe() const;
};

struct BasePrior {
    LatentCodec codec;
    DenoiserModel base;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Loads the prior from `cache_dir/prior-<fingerprint>` when present,
/// otherwise builds and stores it there. An empty cache_dir disables caching.
BasePrior build_base_prior(const PriorConfig& config, const std::filesystem::path& cache_dir,
                           const ProgressFn& progress = {});

/// Latent-grid weights for the fine-tune: 0 on (dilated) occluders, 1 elsewhere.
Tensor anchor_weight(const Mask& mask, int64_t latent_factor, int dilation = 4);

/// Fine-tunes the constrained model on the dataset's training images with
/// occluders weighted out, and assembles the full prior.
DiffusionPrior make_scene_prior(const BasePrior& base, const Dataset& dataset, const FinetuneOptions& finetune,
                                int ddim_steps = 50);

struct EvalResult {
    double psnr = 0.0;
    double ssim = 0.0;
    int views = 0;
};

ImageRGB render_view(const GaussianCloud& cloud, const Camera& cam, const Eigen::Vector3f& background);

/// Mean capped PSNR and SSIM of renders against the clean references.
EvalResult evaluate(const GaussianCloud& cloud, const Dataset& dataset, Split split, const Eigen::Vector3f& background);

/// MSE against the clean reference inside each training view's occluder
/// mask (dilated by `dilation`), pooled over all training views.
double masked_region_error(const GaussianCloud& cloud, const Dataset& dataset, int dilation,
                           const Eigen::Vector3f& background);

/// Ablation configurations, from the masked-loss baseline to the full method.
enum class Ablation { Base, Cnve, CnveOh, Full };
const char* ablation_name(Ablation a);

/// Base: no pool views and no occlusion handling. Cnve: pool views with all
/// tiers open from τ_c. CnveOh: Cnve plus occlusion handling from τ_o.
/// Full: CnveOh with the progressive tier curriculum.
TrainerConfig ablation_config(Ablation a, TrainerConfig config);

} // namespace wildsplat
