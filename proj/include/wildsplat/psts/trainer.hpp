// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/cnve/enhance.hpp"
#include "wildsplat/metrics/losses.hpp"
#include "wildsplat/occlusion/inpaint.hpp"
#include "wildsplat/psts/sampling.hpp"
#include "wildsplat/scene/gaussian.hpp"
#include "wildsplat/synth/dataset.hpp"
#include "wildsplat/tensor/optim.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace wildsplat {

/// Supplies pseudo ground truth to the trainer. Implementations count their
/// calls so cache behaviour is observable.
class PseudoGtSource {
  public:
    virtual ~PseudoGtSource() = default;
    virtual ImageRGB enhance(const ImageRGB& rendered, const ImageRGB& reference) = 0;
    virtual ImageRGB inpaint(const ImageRGB& rendered, const ImageRGB& ground_truth, const Mask& mask,
                             const ImageRGB& reference) = 0;

    int64_t enhance_calls() const { return enhance_calls_; }
    int64_t inpaint_calls() const { return inpaint_calls_; }

  protected:
    int64_t enhance_calls_ = 0;
    int64_t inpaint_calls_ = 0;
};

/// Pseudo ground truth from the diffusion prior.
class DiffusionPseudoGt : public PseudoGtSource {
  public:
    explicit DiffusionPseudoGt(const DiffusionPrior& prior, EnhanceOptions enhance = {}, InpaintOptions inpaint = {})
        : prior_(prior), enhance_options_(enhance), inpaint_options_(inpaint) {}

    ImageRGB enhance(const ImageRGB& rendered, const ImageRGB& reference) override;
    ImageRGB inpaint(const ImageRGB& rendered, const ImageRGB& ground_truth, const Mask& mask,
                     const ImageRGB& reference) override;

  private:
    const DiffusionPrior& prior_;
    EnhanceOptions enhance_options_;
    InpaintOptions inpaint_options_;
};

struct TrainerConfig {
    TrainSchedule schedule;
    int pool_size = 60;
    /// Perturbation std-dev per axis as a fraction of the training-camera
    /// bounding-box diagonal.
    double delta_frac = 0.05;
    /// Pseudo ground truth older than this many iterations is regenerated.
    int refresh_every = 50;
    LossWeights weights;
    uint64_t seed = 0;
    /// Training view (position among training views) whose noise-filled
    /// image is the appearance reference for novel-view enhancement.
    int reference_view = 0;
    Eigen::Vector3f background{0.62f, 0.72f, 0.85f};
    float lr_means = 4e-4f;
    float lr_quats = 1e-3f;
    float lr_scales = 5e-3f;
    float lr_opacity = 5e-2f;
    float lr_colors = 1e-2f;

    void validate() const;
};

struct LossRecord {
    int iter = 0;
    bool pool = false;
    size_t view = 0;
    /// Which loss produced this row: "masked", "inpainted" or "enhanced".
    std::string term;
    double loss = 0.0;
};

/// Staged training loop. Every iteration picks a view with next_view and
/// applies one of: masked loss against the captured image (training view,
/// before τ_o), loss against the inpainted pseudo ground truth (training
/// view, from τ_o), or λ3 times the loss against the enhanced pseudo ground
/// truth (pool view). Pseudo ground truth is cached per view and
/// regenerated once it is `refresh_every` iterations old.
class Trainer {
  public:
    /// `filled` are the noise-filled training images (dataset training
    /// order); they provide appearance references.
    Trainer(const Dataset& dataset, GaussianCloud init, std::vector<ImageRGB> filled, TrainerConfig config,
            PseudoGtSource* pseudo_gt);

    /// Runs one iteration. Throws StateError when training is complete and
    /// NumericError if the loss is not finite.
    void step();
    /// Steps until `until` (default: the end of the schedule).
    void run(int until = -1);

    int iteration() const { return iter_; }
    bool done() const { return iter_ >= config_.schedule.total_iters; }
    const GaussianCloud& cloud() const { return cloud_; }
    const std::vector<SampledView>& pool() const { return pool_; }
    const std::vector<LossRecord>& log() const { return log_; }
    const std::vector<ViewChoice>& choices() const { return choices_; }
    const TrainerConfig& config() const { return config_; }

    /// Cloud, optimizer moments, sampler state, pseudo-GT cache and loss log.
    void save(const std::filesystem::path& dir, const std::string& config_hash) const;
    /// Restores a state written by save() into a trainer built with the same
    /// dataset and config.
    void load(const std::filesystem::path& dir);

    static void write_log_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

  private:
    struct CacheEntry {
        ImageRGB image;
        int iter = 0;
    };
    const ImageRGB& pseudo_gt(bool pool, size_t index, const ImageRGB& rendered);

    const Dataset& dataset_;
    std::vector<size_t> train_;
    std::vector<Camera> train_cams_;
    std::vector<ImageRGB> filled_;
    TrainerConfig config_;
    PseudoGtSource* pseudo_gt_;
    GaussianCloud cloud_;
    Adam adam_;
    std::vector<SampledView> pool_;
    std::mt19937_64 view_rng_;
    int iter_ = 0;
    std::map<std::pair<bool, size_t>, CacheEntry> cache_;
    std::vector<LossRecord> log_;
    std::vector<ViewChoice> choices_;
};

} // namespace wildsplat
