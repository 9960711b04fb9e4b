// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/raster/rasterizer.hpp"
#include "wildsplat/scene/camera.hpp"
#include "wildsplat/scene/gaussian.hpp"
#include "wildsplat/scene/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace wildsplat {

/// Per-view photometric transform: out_c = clamp(gain · wb_c · in_c^gamma).
struct Appearance {
    double gain = 1.0;
    double gamma = 1.0;
    std::array<double, 3> white_balance{1.0, 1.0, 1.0};

    bool is_identity() const;
    ImageRGB apply(const ImageRGB& image) const;
};

struct SceneSpec {
    uint64_t seed = 0;
    int n_train = 5;
    int n_test = 10;
    int image_size = 128;
    /// Camera ring around the scene origin.
    double ring_radius = 4.0;
    double ring_height = 1.6;
    /// Training cameras span this azimuth arc (degrees), test cameras sit
    /// between and around them.
    double arc_degrees = 120.0;
    double focal = 140.0;
    /// Appearance ranges: gain in [1-g, 1+g], gamma in [1-γ, 1+γ], each
    /// white-balance factor in [1-w, 1+w]. Training view 0 is always neutral.
    double gain_range = 0.25;
    double gamma_range = 0.25;
    double white_balance_range = 0.12;
    /// Elliptical occluders per training view and their radius range (px).
    int occluders = 2;
    double occluder_min_radius = 10.0;
    double occluder_max_radius = 22.0;

    void validate() const;
};

enum class Split { Train, Test };
const char* split_name(Split s);

/// One camera of a generated scene with everything rendered for it.
struct SynthView {
    int id = 0;
    Split split = Split::Train;
    Camera camera;
    Appearance appearance;
    /// Clean, appearance-neutral, occluder-free render.
    ImageRGB clean;
    /// Appearance-transformed, occluded capture (training views only).
    ImageRGB image;
    Mask mask;
};

struct SynthScene {
    SceneSpec spec;
    GaussianCloud gt_cloud;
    std::vector<SynthView> views;
};

/// Background color used for every render of synthetic scenes.
Eigen::Vector3f scene_background();

/// Procedural scene: textured box, striped sphere and checkered ground
/// plane built from isotropic Gaussians. The layout and palette vary with
/// the seed.
GaussianCloud make_scene_cloud(uint64_t seed);

/// Builds the scene, renders every view and composites appearance and
/// occluders into training views. Images are quantized to 8 bits so an
/// in-memory scene equals its on-disk form.
SynthScene generate_scene(const SceneSpec& spec);

/// Draws an appearance transform from the spec's ranges.
Appearance random_appearance(const SceneSpec& spec, std::mt19937_64& rng);

/// Composites `count` opaque elliptical blobs into `image` and returns the
/// exact footprint mask.
Mask add_occluders(ImageRGB& image, const SceneSpec& spec, std::mt19937_64& rng);

/// Images for fitting the codec and training the diffusion prior: renders
/// of `scenes` procedurally generated scenes whose seeds start at
/// `first_seed`, from random ring cameras, each with a random appearance.
std::vector<ImageRGB> prior_corpus(uint64_t first_seed, int scenes, int views_per_scene, const SceneSpec& spec);

/// Seeds for prior scenes start here; evaluation scenes use small seeds.
inline constexpr uint64_t kPriorSeedBase = 1'000'000;

} // namespace wildsplat
