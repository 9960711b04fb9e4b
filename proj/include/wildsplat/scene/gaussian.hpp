// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <string>
#include <vector>

namespace wildsplat {

/// One anisotropic Gaussian primitive in world space.
struct Gaussian {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    double opacity_logit = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
};

/// Rotation matrix of a (w, x, y, z) quaternion after normalization.
Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& wxyz);

/// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)).
Eigen::Matrix3d build_covariance(const Gaussian& g);

/// Normalized trivariate density at x. Throws DegeneracyError when Σ is
/// numerically singular (scale underflow).
double gaussian_influence(const Gaussian& g, const Eigen::Vector3d& x);

/// The explicit scene: five attribute tensors sharing a leading dimension N.
///   means [N,3], quats [N,4] (w,x,y,z), log_scales [N,3],
///   opacity_logits [N], colors [N,3] in [0,1].
class GaussianCloud {
  public:
    GaussianCloud() = default;
    explicit GaussianCloud(const std::vector<Gaussian>& gaussians);

    int64_t size() const { return means.defined() ? means.size(0) : 0; }
    Gaussian gaussian(int64_t i) const;

    /// Parameter tensors in a fixed order: means, quats, log_scales,
    /// opacity_logits, colors.
    std::vector<Tensor> parameters() const { return {means, quats, log_scales, opacity_logits, colors}; }
    void set_requires_grad(bool value);

    /// Post-step projection: renormalizes quaternions and clamps colors.
    void project_parameters();

    /// Deep copy with fresh leaves (no gradients).
    GaussianCloud clone() const;

    /// Throws DimensionError/ContractError on inconsistent attribute shapes.
    void validate() const;

    Tensor means;
    Tensor quats;
    Tensor log_scales;
    Tensor opacity_logits;
    Tensor colors;
};

struct CloudCheckpoint {
    GaussianCloud cloud;
    int64_t iteration = 0;
    std::string config_hash;
};

/// Writes one tensor file per attribute plus `manifest.txt` into `dir`.
void save_cloud(const std::filesystem::path& dir, const GaussianCloud& cloud, int64_t iteration,
                const std::string& config_hash);
CloudCheckpoint load_cloud(const std::filesystem::path& dir);

} // namespace wildsplat
