// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/scene/camera.hpp"
#include "wildsplat/scene/gaussian.hpp"
#include "wildsplat/scene/image.hpp"

#include <Eigen/Core>

#include <array>
#include <memory>
#include <vector>

namespace wildsplat {

struct RasterConfig {
    float alpha_cap = 0.99f;
    float alpha_min = 1.0f / 255.0f;
    /// Blending stops before a splat would push transmittance below this.
    float transmittance_min = 1e-4f;
    /// Low-pass dilation added to both diagonal entries of the 2D covariance.
    double dilation = 0.3;
    double near_plane = 0.01;
    int tile_size = 16;
};

/// A Gaussian after projection into one camera.
struct Splat2D {
    float mean_x = 0.0f;
    float mean_y = 0.0f;
    /// 2D covariance [[a, b], [b, c]] in px², dilation included.
    float cov_a = 1.0f;
    float cov_b = 0.0f;
    float cov_c = 1.0f;
    /// Inverse covariance, same layout.
    float conic_a = 1.0f;
    float conic_b = 0.0f;
    float conic_c = 1.0f;
    float depth = 1.0f;
    float opacity = 0.5f;
    std::array<float, 3> color{0.5f, 0.5f, 0.5f};
    /// Pixel radius beyond which α < alpha_min. Zero means never visible.
    int radius = 0;
    /// Index of the source Gaussian (or caller-defined id).
    int64_t source = 0;
};

/// Builds a splat from its 2D parameters, filling conic and radius. The
/// covariance is taken as given (no dilation added).
Splat2D make_splat(float mean_x, float mean_y, float cov_a, float cov_b, float cov_c, float depth, float opacity,
                   std::array<float, 3> color, const RasterConfig& config = {});

/// Perspective projection of every Gaussian in front of the near plane.
std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam, const RasterConfig& config = {});

/// Optional per-pixel buffers, each [1,H,W].
struct RasterDebug {
    Tensor transmittance;
    Tensor weight_sum;
};

/// Gradients w.r.t. each splat of the list given to `forward`, indexed like
/// that list. `cov` holds (a, b, c) with b the total over both off-diagonal
/// entries.
struct SplatGradients {
    std::vector<std::array<double, 2>> mean;
    std::vector<std::array<double, 3>> cov;
    std::vector<double> opacity;
    std::vector<std::array<double, 3>> color;
};

/// Tiled front-to-back alpha blending. Splats are sorted globally by depth
/// (stable on input position), binned into square tiles, and blended per
/// pixel. `forward` retains what `backward` needs.
class Rasterizer {
  public:
    explicit Rasterizer(RasterConfig config = {}) : config_(config) {}

    ImageRGB forward(std::vector<Splat2D> splats, int width, int height, const Eigen::Vector3f& background,
                     RasterDebug* debug = nullptr);

    /// Throws StateError when no forward pass has been run.
    SplatGradients backward(const Tensor& grad_image) const;

    const RasterConfig& config() const { return config_; }

  private:
    RasterConfig config_;
    bool has_forward_ = false;
    std::vector<Splat2D> splats_;
    std::vector<int32_t> order_;
    std::vector<std::vector<int32_t>> tiles_;
    int width_ = 0;
    int height_ = 0;
    int tiles_x_ = 0;
    Eigen::Vector3f background_ = Eigen::Vector3f::Zero();
};

ImageRGB rasterize(const std::vector<Splat2D>& splats, const Camera& cam, const Eigen::Vector3f& background,
                   const RasterConfig& config = {}, RasterDebug* debug = nullptr);

/// Differentiable render of a cloud: returns [3,H,W] recorded on the tape
/// with gradients flowing to all five cloud attribute tensors.
Tensor render(const GaussianCloud& cloud, const Camera& cam, const Eigen::Vector3f& background,
              const RasterConfig& config = {}, RasterDebug* debug = nullptr);

} // namespace wildsplat
