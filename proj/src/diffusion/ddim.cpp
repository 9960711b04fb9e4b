// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/diffusion/ddim.hpp"

#include "wildsplat/tensor/ops.hpp"
#include "wildsplat/tensor/optim.hpp"

#include <cmath>
#include <random>

namespace wildsplat {

namespace {

using State = std::vector<double>;

State to_state(const Tensor& x) { return {x.data().begin(), x.data().end()}; }

Tensor from_state(const Shape& shape, const State& s) { return Tensor(shape, std::vector<float>(s.begin(), s.end())); }

void check_finite(const Tensor& eps, const Tensor& x, int step, int t, const char* context) {
    if (eps.shape() != x.shape())
        throw DimensionError("noise prediction " + shape_str(eps.shape()) + " differs from latent " + shape_str(x.shape()));
    for (float v : eps.data())
        if (!std::isfinite(v))
            throw NumericError(std::string(context) + "non-finite noise prediction at DDIM step " + std::to_string(step) +
                               " (t=" + std::to_string(t) + ")");
}

/// Moves x from noise level ab_from to ab_to along the predicted ε.
void ddim_update(State& x, const Tensor& eps, double ab_from, double ab_to) {
    const double sf = std::sqrt(ab_from), nf = std::sqrt(1.0 - ab_from);
    const double st = std::sqrt(ab_to), nt = std::sqrt(1.0 - ab_to);
    const auto e = eps.data();
    for (size_t k = 0; k < x.size(); ++k) {
        const double x0 = (x[k] - nf * e[k]) / sf;
        x[k] = st * x0 + nt * e[k];
    }
}

Tensor broadcast_weight(const Tensor& weight, const Shape& shape) {
    if (weight.rank() != 3 || weight.size(0) != 1 || weight.size(1) != shape[1] || weight.size(2) != shape[2])
        throw DimensionError("loss weight " + shape_str(weight.shape()) + " does not match latent " + shape_str(shape));
    std::vector<float> w;
    w.reserve(static_cast<size_t>(shape[0] * shape[1] * shape[2]));
    for (int64_t c = 0; c < shape[0]; ++c) w.insert(w.end(), weight.data().begin(), weight.data().end());
    return Tensor(shape, std::move(w));
}

void check_latents(const std::vector<Tensor>& latents, const DenoiserConfig& cfg, const char* what) {
    const Shape want{cfg.latent_channels, cfg.latent_size, cfg.latent_size};
    for (const auto& l : latents)
        if (l.shape() != want) throw DimensionError(std::string(what) + " latent " + shape_str(l.shape()) + ", expected " + shape_str(want));
}

} // namespace

Tensor ddim_sample(const NoiseSchedule& schedule, const EpsilonFn& eps, const Tensor& x_T) {
    State x = to_state(x_T);
    for (int i = schedule.sample_steps() - 1; i >= 0; --i) {
        const int t = schedule.timestep(i);
        const Tensor xt = from_state(x_T.shape(), x);
        const Tensor e = eps(xt, t, i);
        check_finite(e, xt, i, t, "");
        ddim_update(x, e, schedule.alpha_bar(t), schedule.alpha_bar_prev(i));
    }
    return from_state(x_T.shape(), x);
}

Tensor ddim_invert(const NoiseSchedule& schedule, const EpsilonFn& eps, const Tensor& x_0) {
    State x = to_state(x_0);
    for (int i = 0; i < schedule.sample_steps(); ++i) {
        const int t = schedule.timestep(i);
        const Tensor xt = from_state(x_0.shape(), x);
        const Tensor e = eps(xt, t, i);
        check_finite(e, xt, i, t, "inversion: ");
        ddim_update(x, e, schedule.alpha_bar_prev(i), schedule.alpha_bar(t));
    }
    return from_state(x_0.shape(), x);
}

EpsilonFn model_epsilon(const DenoiserModel& model, StepAttention hooks) {
    return [&model, hooks = std::move(hooks)](const Tensor& x, int t, int step) {
        NoGradGuard guard;
        if (!hooks) return model.forward(x, t);
        const AttentionFn fn = hooks(step);
        return model.forward(x, t, fn ? &fn : nullptr);
    };
}

Tensor ddim_sample(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_T, const StepAttention& hooks) {
    return ddim_sample(schedule, model_epsilon(model, hooks), x_T);
}

Tensor ddim_invert(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x_0) {
    return ddim_invert(schedule, model_epsilon(model), x_0);
}

DualBranchResult dual_branch_denoise(const DenoiserModel& base, const DenoiserModel& constrained,
                                     const NoiseSchedule& schedule, const Tensor& x_T, const DualBranchOptions& options,
                                     AttentionTape* tape) {
    AttentionTape local;
    AttentionTape& tp = tape ? *tape : local;
    tp.clear();
    NoGradGuard guard;
    State xr = to_state(x_T), xe = xr;
    for (int i = schedule.sample_steps() - 1; i >= 0; --i) {
        const int t = schedule.timestep(i);
        const AttentionFn record_r = [&](const Tensor& q, const Tensor& k, const Tensor& v) {
            tp.record(i, BranchRole::Reconstruction, {q, k, v});
            return self_attention(q, k, v);
        };
        const AttentionFn record_e = [&](const Tensor& q, const Tensor& k, const Tensor& v) {
            tp.record(i, BranchRole::Enhancement, {q, k, v});
            if (!options.inject) return self_attention(q, k, v);
            return injected_attention(tp, i, v, options.mode, options.token_mask);
        };
        const Tensor xrt = from_state(x_T.shape(), xr);
        const Tensor er = base.forward(xrt, t, &record_r);
        check_finite(er, xrt, i, t, "reconstruction branch: ");
        const Tensor xet = from_state(x_T.shape(), xe);
        const Tensor ee = constrained.forward(xet, t, &record_e);
        check_finite(ee, xet, i, t, "enhancement branch: ");
        ddim_update(xr, er, schedule.alpha_bar(t), schedule.alpha_bar_prev(i));
        ddim_update(xe, ee, schedule.alpha_bar(t), schedule.alpha_bar_prev(i));
    }
    return {from_state(x_T.shape(), xr), from_state(x_T.shape(), xe)};
}

Tensor denoising_loss(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& x0, int t,
                      const Tensor& eps, const Tensor& weight) {
    const Tensor xt = forward_diffuse(schedule, x0, t, eps);
    const Tensor sq = square(sub(model.forward(xt, t), eps));
    if (!weight.defined()) return mean(sq);
    const Tensor w = broadcast_weight(weight, x0.shape());
    double total = 0.0;
    for (float v : w.data()) total += v;
    if (total <= 0.0) throw DegeneracyError("denoising loss weight is zero everywhere");
    return scale(sum(mul(sq, w)), static_cast<float>(1.0 / total));
}

DenoiserModel train_base(const DenoiserModel& init, const std::vector<Tensor>& latents, const NoiseSchedule& schedule,
                         const DiffusionTrainOptions& options, std::vector<double>* loss_log) {
    if (latents.empty()) throw DomainError("train_base needs a non-empty latent dataset");
    if (options.steps < 0 || options.batch < 1) throw DomainError("invalid diffusion training options");
    check_latents(latents, init.config(), "training");
    DenoiserModel model = init.clone();
    model.set_variant(DenoiserVariant::Base);
    Adam adam({options.lr});
    adam.add_group(model.parameters());
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<size_t> pick(0, latents.size() - 1);
    std::uniform_int_distribution<int> step_t(0, schedule.train_steps() - 1);
    for (int s = 0; s < options.steps; ++s) {
        adam.zero_grad();
        double batch_loss = 0.0;
        for (int b = 0; b < options.batch; ++b) {
            const Tensor& x0 = latents[pick(rng)];
            const int t = step_t(rng);
            const Tensor eps = Tensor::randn(x0.shape(), rng);
            const Tensor loss = scale(denoising_loss(model, schedule, x0, t, eps), 1.0f / static_cast<float>(options.batch));
            batch_loss += loss.item();
            loss.backward();
        }
        if (!std::isfinite(batch_loss)) throw NumericError("diffusion training diverged at step " + std::to_string(s));
        adam.step();
        if (loss_log) loss_log->push_back(batch_loss);
    }
    return model;
}

DenoiserModel finetune_constrained(const DenoiserModel& base, const std::vector<Tensor>& anchors,
                                   const NoiseSchedule& schedule, const FinetuneOptions& options,
                                   const std::vector<Tensor>& weights, std::vector<double>* loss_log) {
    if (anchors.empty()) throw DomainError("constrained fine-tune needs at least one anchor view");
    if (!weights.empty() && weights.size() != anchors.size())
        throw DimensionError("fine-tune weights must match the anchor count");
    if (options.iters < 0) throw DomainError("fine-tune iterations must be nonnegative");
    check_latents(anchors, base.config(), "anchor");
    DenoiserModel model = base.clone();
    model.set_variant(DenoiserVariant::Constrained);
    if (options.iters == 0) return model;
    Adam adam({options.lr});
    adam.add_group(model.parameters());
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<size_t> pick(0, anchors.size() - 1);
    std::uniform_int_distribution<int> step_t(0, schedule.train_steps() - 1);
    for (int it = 0; it < options.iters; ++it) {
        adam.zero_grad();
        const size_t k = pick(rng);
        const int t = step_t(rng);
        const Tensor eps = Tensor::randn(anchors[k].shape(), rng);
        const Tensor loss = denoising_loss(model, schedule, anchors[k], t, eps, weights.empty() ? Tensor() : weights[k]);
        if (!std::isfinite(loss.item())) throw NumericError("constrained fine-tune diverged at iteration " + std::to_string(it));
        loss.backward();
        adam.step();
        if (loss_log) loss_log->push_back(loss.item());
    }
    return model;
}

} // namespace wildsplat
