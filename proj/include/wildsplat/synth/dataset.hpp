// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/camera.hpp"
#include "wildsplat/scene/gaussian.hpp"
#include "wildsplat/scene/image.hpp"
#include "wildsplat/synth/scene.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wildsplat {

/// One dataset entry. Training views carry `image` and `mask`; `clean` is
/// the occluder-free, appearance-neutral reference when known.
struct ViewRecord {
    int id = 0;
    std::string name;
    Split split = Split::Train;
    Camera camera;
    ImageRGB image;
    Mask mask;
    ImageRGB clean;
};

struct Dataset {
    std::vector<ViewRecord> views;
    /// Ground-truth cloud, present for synthetic scenes.
    std::optional<GaussianCloud> gt_cloud;

    std::vector<size_t> indices(Split split) const;
};

/// Layout: images/, masks/ (training views) and clean/ (all views) holding
/// <name>.png, cameras.txt, manifest.txt (seed, spec echo, one
/// `view <id> <split> <name>` line per view), appearance.txt and gt_cloud/.
void write_dataset(const std::filesystem::path& dir, const SynthScene& scene);

/// Reads a dataset directory. Without manifest.txt the folder is treated as
/// an external posed-image set: every camera in cameras.txt with a file
/// images/view_<id>.png is a training view (mask optional, all-zero when
/// absent); cameras with only clean/view_<id>.png are test views.
Dataset load_dataset(const std::filesystem::path& dir);

/// In-memory dataset of a generated scene, identical to writing and reading
/// it back.
Dataset to_dataset(const SynthScene& scene);

std::string view_name(int id);

struct DenseInitOptions {
    /// Std-dev of the Gaussian jitter added to ground-truth centers.
    double jitter = 0.02;
    /// Extra random points as a fraction of the ground-truth count.
    double spurious_frac = 0.1;
    /// Fill masked pixels with matched noise before sampling colors.
    bool noise_fill = true;
    double initial_opacity = 0.1;
    uint64_t seed = 0;
};

struct DenseInit {
    GaussianCloud cloud;
    /// Training images after the masked noise fill (or unchanged when the
    /// fill is disabled), in dataset training-view order.
    std::vector<ImageRGB> filled;
};

/// Stand-in for a learned dense initializer: jittered ground-truth centers
/// plus spurious points, colored by sampling the (noise-filled) training
/// images at their projections. Scales come from the mean distance to the
/// three nearest neighbours. Requires the dataset's ground-truth cloud.
DenseInit dense_init(const Dataset& dataset, const DenseInitOptions& options);

} // namespace wildsplat
