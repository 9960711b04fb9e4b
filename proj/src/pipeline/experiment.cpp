// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/pipeline/experiment.hpp"

#include "wildsplat/occlusion/masks.hpp"
#include "wildsplat/raster/rasterizer.hpp"
#include "wildsplat/tensor/ops.hpp"

#include <fmt/format.h>

#include <fstream>

namespace fs = std::filesystem;

namespace wildsplat {

std::string fingerprint(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string PriorConfig::describe() const {
    return fmt::format("scenes={} views={} steps={} batch={} lr={} seed={} size={} widths={},{},{} temb={} groups={}",
                       scenes, views_per_scene, train_steps, batch, lr, seed, image_size, denoiser.widths[0], denoiser.widths[1],
                       denoiser.widths[2], denoiser.temb_dim, denoiser.groups);
}

BasePrior build_base_prior(const PriorConfig& config, const fs::path& cache_dir, const ProgressFn& progress) {
    const fs::path dir = cache_dir.empty() ? fs::path() : cache_dir / ("prior-" + fingerprint(config.describe()));
    if (!dir.empty() && fs::exists(dir / "complete")) {
        if (progress) progress("loading cached prior from " + dir.string());
        return {LatentCodec::load(dir / "codec"), DenoiserModel::load(dir / "base")};
    }
    if (progress) progress(fmt::format("rendering prior corpus ({} scenes x {} views)", config.scenes, config.views_per_scene));
    SceneSpec spec;
    spec.image_size = config.image_size;
    spec.focal *= config.image_size / 128.0;
    const auto corpus = prior_corpus(kPriorSeedBase, config.scenes, config.views_per_scene, spec);
    LatentCodec codec = LatentCodec::fit(corpus, config.denoiser.latent_channels);
    std::vector<Tensor> latents;
    latents.reserve(corpus.size());
    for (const auto& im : corpus) latents.push_back(codec.encode(im));
    if (progress) progress(fmt::format("training base denoiser ({} steps)", config.train_steps));
    const NoiseSchedule schedule;
    DenoiserConfig arch = config.denoiser;
    arch.latent_size = config.image_size / LatentCodec::kPatch;
    DenoiserModel base = train_base(DenoiserModel(arch, config.seed), latents, schedule,
                                    {config.train_steps, config.batch, config.lr, config.seed + 1});
    if (!dir.empty()) {
        codec.save(dir / "codec");
        base.save(dir / "base");
        std::ofstream(dir / "complete") << config.describe() << '\n';
    }
    return {std::move(codec), std::move(base)};
}

Tensor anchor_weight(const Mask& mask, int64_t latent_factor, int dilation) {
    const Mask m = downsample_mask(dilate_mask(mask, dilation), latent_factor);
    std::vector<float> w(m.data().begin(), m.data().end());
    for (auto& v : w) v = 1.0f - v;
    return Tensor(m.shape(), std::move(w));
}

DiffusionPrior make_scene_prior(const BasePrior& base, const Dataset& dataset, const FinetuneOptions& finetune,
                                int ddim_steps) {
    const NoiseSchedule schedule(1000, ddim_steps);
    std::vector<Tensor> anchors, weights;
    for (size_t k : dataset.indices(Split::Train)) {
        const auto& v = dataset.views[k];
        anchors.push_back(base.codec.encode(v.image));
        weights.push_back(anchor_weight(v.mask, v.image.size(1) / base.base.config().latent_size));
    }
    DenoiserModel constrained = finetune_constrained(base.base, anchors, schedule, finetune, weights);
    return {base.codec, base.base.clone(), std::move(constrained), schedule};
}

ImageRGB render_view(const GaussianCloud& cloud, const Camera& cam, const Eigen::Vector3f& background) {
    NoGradGuard guard;
    return render(cloud, cam, background).detach();
}

EvalResult evaluate(const GaussianCloud& cloud, const Dataset& dataset, Split split, const Eigen::Vector3f& background) {
    EvalResult r;
    for (size_t k : dataset.indices(split)) {
        const auto& v = dataset.views[k];
        if (!v.clean.defined()) continue;
        const ImageRGB img = render_view(cloud, v.camera, background);
        r.psnr += psnr_capped(img, v.clean);
        r.ssim += ssim_value(img, v.clean);
        ++r.views;
    }
    if (r.views == 0) throw StateError(std::string("no clean references for the ") + split_name(split) + " split");
    r.psnr /= r.views;
    r.ssim /= r.views;
    return r;
}

double masked_region_error(const GaussianCloud& cloud, const Dataset& dataset, int dilation,
                           const Eigen::Vector3f& background) {
    double se = 0.0;
    int64_t count = 0;
    for (size_t k : dataset.indices(Split::Train)) {
        const auto& v = dataset.views[k];
        if (!v.clean.defined()) throw StateError("masked-region error needs clean references");
        const Mask m = dilate_mask(v.mask, dilation);
        const ImageRGB img = render_view(cloud, v.camera, background);
        const auto hw = static_cast<size_t>(m.numel());
        for (size_t i = 0; i < hw; ++i) {
            if (m.data()[i] == 0.0f) continue;
            for (size_t c = 0; c < 3; ++c) {
                const double d = static_cast<double>(img.data()[c * hw + i]) - v.clean.data()[c * hw + i];
                se += d * d;
            }
            count += 3;
        }
    }
    if (count == 0) throw DegeneracyError("no masked pixels in any training view");
    return se / static_cast<double>(count);
}

const char* ablation_name(Ablation a) {
    switch (a) {
    case Ablation::Base: return "base";
    case Ablation::Cnve: return "cnve";
    case Ablation::CnveOh: return "cnve_oh";
    default: return "full";
    }
}

TrainerConfig ablation_config(Ablation a, TrainerConfig config) {
    auto& s = config.schedule;
    switch (a) {
    case Ablation::Base:
        s.beta = 0.0;
        s.tau_o = s.total_iters;
        break;
    case Ablation::Cnve:
        s.tau_o = s.total_iters;
        s.progressive = false;
        break;
    case Ablation::CnveOh: s.progressive = false; break;
    case Ablation::Full: s.progressive = true; break;
    }
    return config;
}

} // namespace wildsplat
