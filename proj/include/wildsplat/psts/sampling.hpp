// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/camera.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

namespace wildsplat {

/// Rotation by shortest-arc quaternion SLERP; camera center by linear
/// interpolation; intrinsics from `a`.
Camera slerp_pose(const Camera& a, const Camera& b, double alpha);

/// Sign-aligned mean of two unit quaternions, renormalized.
Eigen::Quaterniond average_rotation(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Indices of the two training cameras whose centers are closest to `p`
/// (ties broken by index).
std::array<size_t, 2> nearest_two(const std::vector<Camera>& train, const Eigen::Vector3d& p);

/// Moves the center of `cam` by ε ~ N(0, diag(δ²)) and takes the rotation
/// averaged from the two training cameras nearest the new center.
Camera perturb_pose(const Camera& cam, const Eigen::Vector3d& delta, const std::vector<Camera>& train,
                    std::mt19937_64& rng);

enum class Difficulty { Simple = 0, Medium = 1, Difficult = 2 };
const char* difficulty_name(Difficulty d);

struct SampledView {
    Camera camera;
    enum class Kind { Interpolated, Perturbed } kind = Kind::Interpolated;
    /// Interpolated: source pair and α. Perturbed: source camera in `i`.
    size_t i = 0;
    size_t j = 0;
    double alpha = 0.0;
    /// Smallest distance from this camera's center to a training center.
    double distance = 0.0;
    Difficulty difficulty = Difficulty::Simple;
};

/// Per-axis δ as a fraction of the training-center bounding-box diagonal.
Eigen::Vector3d default_delta(const std::vector<Camera>& train, double fraction);

/// Half the pool interpolates camera pairs (cycling over all pairs i < j,
/// α ~ U(0,1)); the rest perturbs each training camera in turn. Views are
/// then tiered by distance tertiles: after a stable sort by distance, the
/// view at rank r gets tier floor(3 r / n).
std::vector<SampledView> build_view_pool(const std::vector<Camera>& train, int pool_size, const Eigen::Vector3d& delta,
                                         std::mt19937_64& rng);

struct TrainSchedule {
    int total_iters = 750;
    /// Training views only before this iteration.
    int tau_c = 550;
    /// Occlusion handling from this iteration on; total_iters disables it.
    int tau_o = 650;
    /// Probability of a pool view once iteration τ_c is reached.
    double beta = 0.3;
    /// When false every tier is available from τ_c on.
    bool progressive = true;

    void validate() const;
    /// 0 before τ_c, then 1, 2, 3 over equal thirds of [τ_c, total_iters).
    int stage(int iter) const;
    /// Highest difficulty available at `iter` (stage 0 has none).
    Difficulty max_difficulty(int iter) const;

    /// Iteration constants scaled from a 7,500-iteration schedule with
    /// τ_c = 5,500 and τ_o = 6,500.
    static TrainSchedule scaled(int total_iters);
};

struct ViewChoice {
    bool pool = false;
    size_t index = 0;
};

/// Before τ_c a uniformly random training view. From τ_c on, with
/// probability β a uniformly random pool view among the unlocked tiers,
/// otherwise a training view. β = 0 draws no Bernoulli variate.
ViewChoice next_view(const TrainSchedule& sched, int iter, const std::vector<SampledView>& pool, size_t n_train,
                     std::mt19937_64& rng);

} // namespace wildsplat
