// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/diffusion/attention.hpp"
#include "wildsplat/diffusion/denoiser.hpp"
#include "wildsplat/diffusion/schedule.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace wildsplat {

/// Noise prediction for latent x_t at timestep t; `step` is the DDIM step
/// index in [0, sample_steps).
using EpsilonFn = std::function<Tensor(const Tensor& x_t, int t, int step)>;

/// Attention override per DDIM step. An empty result keeps the model's own
/// attention for that step.
using StepAttention = std::function<AttentionFn(int step)>;

/// Deterministic (η = 0) DDIM from x_T down to x_0 over the schedule's
/// sampling steps. The running state is kept in double precision. Throws
/// NumericError naming the step when a prediction is not finite.
Tensor ddim_sample(const NoiseSchedule& schedule, const EpsilonFn& eps, const Tensor& x_T);
/// First-order DDIM inversion x_0 -> x_T: each reversed step evaluates the
/// predictor at the known latent with the step's target timestep.
Tensor ddim_invert(const NoiseSchedule& schedule, const EpsilonFn& eps, const Tensor& x_0);

/// Wraps a model (gradient recording disabled) as an EpsilonFn.
EpsilonFn model_epsilon(const DenoiserModel& model, StepAttention hooks = {});

Tensor ddim_sample(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_T,
                   const StepAttention& hooks = {});
Tensor ddim_invert(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_0);

struct DualBranchOptions {
    /// When false the enhancement branch uses its own attention.
    bool inject = true;
    InjectionMode mode = InjectionMode::Full;
    /// Token-grid mask for InjectionMode::Masked (1 = occluded token).
    std::vector<float> token_mask;
};

struct DualBranchResult {
    Tensor reconstruction;
    Tensor enhancement;
};

/// Runs the reconstruction branch (base model) and the enhancement branch
/// (constrained model) in lockstep from the same x_T. At every step the
/// reconstruction branch records its bottleneck Q, K, V to the tape first;
/// the enhancement branch records its own and then attends through
/// injected_attention. The tape, if given, is left filled.
DualBranchResult dual_branch_denoise(const DenoiserModel& base, const DenoiserModel& constrained,
                                     const NoiseSchedule& schedule, const Tensor& x_T,
                                     const DualBranchOptions& options = {}, AttentionTape* tape = nullptr);

/// Mean over elements of w ⊙ (ε - ε_θ(x_t, t))² divided by the mean of w,
/// with x_t = forward_diffuse(x0, t, ε). `weight` is [1,S,S] or empty for
/// uniform weighting.
Tensor denoising_loss(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0, int t,
                      const Tensor& eps, const Tensor& weight = Tensor());

struct DiffusionTrainOptions {
    int steps = 2000;
    /// Latents per optimizer step (gradients accumulate).
    int batch = 4;
    float lr = 1e-3f;
    uint64_t seed = 0;
};

/// ε-prediction training over uniformly drawn timesteps. Returns the
/// trained copy; `loss_log` receives the batch-mean loss of every step.
DenoiserModel train_base(const DenoiserModel& init, const std::vector<Tensor>& latents, const NoiseSchedule& schedule,
                         const DiffusionTrainOptions& options, std::vector<double>* loss_log = nullptr);

struct FinetuneOptions {
    int iters = 400;
    float lr = 5e-8f;
    uint64_t seed = 0;
};

/// Copy of `base` fine-tuned with batch 1 on the anchor latents only and
/// tagged constrained. Optional per-anchor [1,S,S] weights down-weight
/// regions (occluders) that should not be learned. `base` is untouched.
DenoiserModel finetune_constrained(const DenoiserModel& base, const std::vector<Tensor>& anchors,
                                   const NoiseSchedule& schedule, const FinetuneOptions& options,
                                   const std::vector<Tensor>& weights = {}, std::vector<double>* loss_log = nullptr);

} // namespace wildsplat
