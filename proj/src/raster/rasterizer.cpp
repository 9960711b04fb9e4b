// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/raster/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wildsplat {

namespace {

struct Contribution {
    int32_t splat;
    float alpha;
    float transmittance;
    bool capped;
    float gauss;
};

/// Blends one pixel over the depth-ordered candidate list. Calls `emit` for
/// every contributing splat and returns the final transmittance.
template <typename Emit>
float blend_pixel(const std::vector<Splat2D>& splats, const std::vector<int32_t>& candidates, float px, float py,
                  const RasterConfig& cfg, Emit&& emit) {
    float t = 1.0f;
    for (int32_t idx : candidates) {
        const Splat2D& s = splats[static_cast<size_t>(idx)];
        const float dx = px - s.mean_x;
        const float dy = py - s.mean_y;
        const float power = -0.5f * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
        if (power > 0.0f) continue;
        const float g = std::exp(power);
        const float raw = s.opacity * g;
        const float alpha = std::min(cfg.alpha_cap, raw);
        if (alpha < cfg.alpha_min) continue;
        const float test_t = t * (1.0f - alpha);
        if (test_t < cfg.transmittance_min) break;
        emit(Contribution{idx, alpha, t, raw > cfg.alpha_cap, g});
        t = test_t;
    }
    return t;
}

int splat_radius(double a, double b, double c, double opacity, const RasterConfig& cfg) {
    if (!(opacity >= cfg.alpha_min)) return 0;
    const double mid = 0.5 * (a + c);
    const double lambda_max = mid + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    const double reach = 2.0 * lambda_max * std::log(std::max(1.0, opacity / cfg.alpha_min));
    return static_cast<int>(std::ceil(std::sqrt(std::max(0.0, reach)))) + 1;
}

struct Projected {
    Splat2D splat;
    Eigen::Vector3d t_cam;
    Eigen::Matrix<double, 2, 3> m;
    Eigen::Matrix3d sigma;
    Eigen::Matrix3d rot;
    Eigen::Vector3d scale;
    Eigen::Vector4d q_unit;
    double q_norm;
    double opacity;
    bool clamp_x;
    bool clamp_y;
    double lim_x;
    double lim_y;
};

std::vector<Projected> project_full(const GaussianCloud& cloud, const Camera& cam, const RasterConfig& cfg) {
    cloud.validate();
    const Eigen::Matrix3d w = cam.rotation_matrix();
    const double lim_x = 1.3 * 0.5 * cam.width / cam.fx;
    const double lim_y = 1.3 * 0.5 * cam.height / cam.fy;
    std::vector<Projected> out;
    out.reserve(static_cast<size_t>(cloud.size()));
    for (int64_t i = 0; i < cloud.size(); ++i) {
        Projected p;
        const Eigen::Vector3d mu(cloud.means[i * 3], cloud.means[i * 3 + 1], cloud.means[i * 3 + 2]);
        p.t_cam = w * mu + cam.translation;
        const double tz = p.t_cam.z();
        if (tz < cfg.near_plane) continue;

        const Eigen::Vector4d q(cloud.quats[i * 4], cloud.quats[i * 4 + 1], cloud.quats[i * 4 + 2],
                                cloud.quats[i * 4 + 3]);
        p.q_norm = q.norm();
        if (p.q_norm < 1e-12) continue;
        p.q_unit = q / p.q_norm;
        p.rot = quat_to_matrix(p.q_unit);
        for (int k = 0; k < 3; ++k) p.scale[k] = std::exp(static_cast<double>(cloud.log_scales[i * 3 + k]));
        const Eigen::Matrix3d a = p.rot * p.scale.asDiagonal();
        p.sigma = a * a.transpose();

        const double rx = p.t_cam.x() / tz;
        const double ry = p.t_cam.y() / tz;
        p.lim_x = lim_x;
        p.lim_y = lim_y;
        p.clamp_x = std::abs(rx) > lim_x;
        p.clamp_y = std::abs(ry) > lim_y;
        const double txc = std::clamp(rx, -lim_x, lim_x) * tz;
        const double tyc = std::clamp(ry, -lim_y, lim_y) * tz;
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / tz, 0.0, -cam.fx * txc / (tz * tz), 0.0, cam.fy / tz, -cam.fy * tyc / (tz * tz);
        p.m = j * w;
        const Eigen::Matrix2d cov = p.m * p.sigma * p.m.transpose() + cfg.dilation * Eigen::Matrix2d::Identity();
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
        if (!(det > 0.0)) continue;

        p.opacity = 1.0 / (1.0 + std::exp(-static_cast<double>(cloud.opacity_logits[i])));
        Splat2D& s = p.splat;
        s.mean_x = static_cast<float>(cam.fx * rx + cam.cx);
        s.mean_y = static_cast<float>(cam.fy * ry + cam.cy);
        s.cov_a = static_cast<float>(cov(0, 0));
        s.cov_b = static_cast<float>(cov(0, 1));
        s.cov_c = static_cast<float>(cov(1, 1));
        s.conic_a = static_cast<float>(cov(1, 1) / det);
        s.conic_b = static_cast<float>(-cov(0, 1) / det);
        s.conic_c = static_cast<float>(cov(0, 0) / det);
        s.depth = static_cast<float>(tz);
        s.opacity = static_cast<float>(p.opacity);
        for (int k = 0; k < 3; ++k) s.color[static_cast<size_t>(k)] = cloud.colors[i * 3 + k];
        s.radius = splat_radius(cov(0, 0), cov(0, 1), cov(1, 1), s.opacity, cfg);
        s.source = i;
        out.push_back(p);
    }
    return out;
}

/// d/dq of a loss given d/dR, for R built from the unit quaternion (w,x,y,z).
Eigen::Vector4d quat_grad(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Vector4d d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1) -
                2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
    return d;
}

} // namespace

Splat2D make_splat(float mean_x, float mean_y, float cov_a, float cov_b, float cov_c, float depth, float opacity,
                   std::array<float, 3> color, const RasterConfig& config) {
    Splat2D s;
    s.mean_x = mean_x;
    s.mean_y = mean_y;
    s.cov_a = cov_a;
    s.cov_b = cov_b;
    s.cov_c = cov_c;
    const double det = double(cov_a) * cov_c - double(cov_b) * cov_b;
    if (!(det > 0.0)) throw DomainError("splat covariance is not positive definite");
    s.conic_a = static_cast<float>(cov_c / det);
    s.conic_b = static_cast<float>(-cov_b / det);
    s.conic_c = static_cast<float>(cov_a / det);
    s.depth = depth;
    s.opacity = opacity;
    s.color = color;
    s.radius = splat_radius(cov_a, cov_b, cov_c, opacity, config);
    return s;
}

std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam, const RasterConfig& config) {
    std::vector<Splat2D> out;
    for (auto& p : project_full(cloud, cam, config)) out.push_back(p.splat);
    return out;
}

ImageRGB Rasterizer::forward(std::vector<Splat2D> splats, int width, int height, const Eigen::Vector3f& background,
                             RasterDebug* debug) {
    if (width <= 0 || height <= 0) throw DomainError("raster size must be positive");
    splats_ = std::move(splats);
    width_ = width;
    height_ = height;
    background_ = background;
    const int ts = config_.tile_size;
    tiles_x_ = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;

    order_.resize(splats_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [this](int32_t a, int32_t b) {
        return splats_[static_cast<size_t>(a)].depth < splats_[static_cast<size_t>(b)].depth;
    });

    tiles_.assign(static_cast<size_t>(tiles_x_ * tiles_y), {});
    for (int32_t idx : order_) {
        const Splat2D& s = splats_[static_cast<size_t>(idx)];
        if (s.radius <= 0) continue;
        const double x0 = std::floor(s.mean_x - s.radius), x1 = std::ceil(s.mean_x + s.radius);
        const double y0 = std::floor(s.mean_y - s.radius), y1 = std::ceil(s.mean_y + s.radius);
        if (!(x1 >= 0 && y1 >= 0 && x0 < width && y0 < height)) continue;
        const int tx0 = static_cast<int>(std::max(0.0, x0)) / ts;
        const int tx1 = static_cast<int>(std::min<double>(width - 1, x1)) / ts;
        const int ty0 = static_cast<int>(std::max(0.0, y0)) / ts;
        const int ty1 = static_cast<int>(std::min<double>(height - 1, y1)) / ts;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) tiles_[static_cast<size_t>(ty * tiles_x_ + tx)].push_back(idx);
    }

    Tensor image({3, height, width});
    auto out = image.mutable_data();
    Tensor trans, wsum;
    if (debug) {
        trans = Tensor({1, height, width});
        wsum = Tensor({1, height, width});
    }
    const size_t plane = static_cast<size_t>(width) * height;
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x_; ++tx) {
            const auto& cand = tiles_[static_cast<size_t>(ty * tiles_x_ + tx)];
            for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
                    float c[3] = {0.0f, 0.0f, 0.0f};
                    float weights = 0.0f;
                    const float t_final = blend_pixel(splats_, cand, static_cast<float>(x), static_cast<float>(y),
                                                      config_, [&](const Contribution& k) {
                                                          const auto& col = splats_[static_cast<size_t>(k.splat)].color;
                                                          const float w = k.alpha * k.transmittance;
                                                          for (int ch = 0; ch < 3; ++ch) c[ch] += col[ch] * w;
                                                          weights += w;
                                                      });
                    const size_t p = static_cast<size_t>(y) * width + x;
                    for (int ch = 0; ch < 3; ++ch) out[ch * plane + p] = c[ch] + t_final * background_[ch];
                    if (debug) {
                        trans.mutable_data()[p] = t_final;
                        wsum.mutable_data()[p] = weights;
                    }
                }
            }
        }
    }
    if (debug) {
        debug->transmittance = trans;
        debug->weight_sum = wsum;
    }
    has_forward_ = true;
    return image;
}

SplatGradients Rasterizer::backward(const Tensor& grad_image) const {
    if (!has_forward_) throw StateError("rasterizer backward called without a forward pass");
    if (grad_image.shape() != Shape{3, height_, width_})
        throw DimensionError("image gradient shape " + shape_str(grad_image.shape()) + " does not match render");
    const size_t n = splats_.size();
    SplatGradients g;
    g.mean.assign(n, {0.0, 0.0});
    g.cov.assign(n, {0.0, 0.0, 0.0});
    g.opacity.assign(n, 0.0);
    g.color.assign(n, {0.0, 0.0, 0.0});
    // Conic gradients are accumulated first and converted to covariance
    // gradients per splat at the end.
    std::vector<std::array<double, 3>> g_conic(n, {0.0, 0.0, 0.0});

    const int ts = config_.tile_size;
    const size_t plane = static_cast<size_t>(width_) * height_;
    const auto go = grad_image.data();
    std::vector<Contribution> list;
    const int tiles_y = (height_ + ts - 1) / ts;
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x_; ++tx) {
            const auto& cand = tiles_[static_cast<size_t>(ty * tiles_x_ + tx)];
            for (int y = ty * ts; y < std::min(height_, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(width_, (tx + 1) * ts); ++x) {
                    list.clear();
                    const float px = static_cast<float>(x), py = static_cast<float>(y);
                    const float t_final = blend_pixel(splats_, cand, px, py, config_,
                                                      [&](const Contribution& k) { list.push_back(k); });
                    const size_t p = static_cast<size_t>(y) * width_ + x;
                    const double gp[3] = {go[p], go[plane + p], go[2 * plane + p]};
                    if (gp[0] == 0.0 && gp[1] == 0.0 && gp[2] == 0.0) continue;
                    double back = 0.0;
                    for (int ch = 0; ch < 3; ++ch) back += double(t_final) * background_[ch] * gp[ch];
                    for (auto it = list.rbegin(); it != list.rend(); ++it) {
                        const auto idx = static_cast<size_t>(it->splat);
                        const Splat2D& s = splats_[idx];
                        const double a = it->alpha, t = it->transmittance;
                        double cg = 0.0;
                        for (int ch = 0; ch < 3; ++ch) {
                            g.color[idx][static_cast<size_t>(ch)] += a * t * gp[ch];
                            cg += s.color[static_cast<size_t>(ch)] * gp[ch];
                        }
                        const double d_alpha = t * cg - back / (1.0 - a);
                        back += a * t * cg;
                        if (it->capped) continue;
                        g.opacity[idx] += d_alpha * it->gauss;
                        const double d_power = d_alpha * a;
                        const double dx = double(px) - s.mean_x, dy = double(py) - s.mean_y;
                        g_conic[idx][0] += -0.5 * dx * dx * d_power;
                        g_conic[idx][1] += -dx * dy * d_power;
                        g_conic[idx][2] += -0.5 * dy * dy * d_power;
                        g.mean[idx][0] += (s.conic_a * dx + s.conic_b * dy) * d_power;
                        g.mean[idx][1] += (s.conic_c * dy + s.conic_b * dx) * d_power;
                    }
                }
            }
        }
    }
    for (size_t i = 0; i < n; ++i) {
        const Splat2D& s = splats_[i];
        const double det = double(s.cov_a) * s.cov_c - double(s.cov_b) * s.cov_b;
        Eigen::Matrix2d k;
        k << s.cov_c / det, -s.cov_b / det, -s.cov_b / det, s.cov_a / det;
        Eigen::Matrix2d gk;
        gk << g_conic[i][0], 0.5 * g_conic[i][1], 0.5 * g_conic[i][1], g_conic[i][2];
        const Eigen::Matrix2d gc = -k * gk * k;
        g.cov[i] = {gc(0, 0), gc(0, 1) + gc(1, 0), gc(1, 1)};
    }
    return g;
}

ImageRGB rasterize(const std::vector<Splat2D>& splats, const Camera& cam, const Eigen::Vector3f& background,
                   const RasterConfig& config, RasterDebug* debug) {
    Rasterizer r(config);
    return r.forward(splats, cam.width, cam.height, background, debug);
}

Tensor render(const GaussianCloud& cloud, const Camera& cam, const Eigen::Vector3f& background,
              const RasterConfig& config, RasterDebug* debug) {
    cam.validate();
    auto projected = std::make_shared<std::vector<Projected>>(project_full(cloud, cam, config));
    std::vector<Splat2D> splats;
    splats.reserve(projected->size());
    for (const auto& p : *projected) splats.push_back(p.splat);
    auto raster = std::make_shared<Rasterizer>(config);
    Tensor image = raster->forward(std::move(splats), cam.width, cam.height, background, debug);
    std::vector<float> data(image.data().begin(), image.data().end());

    const Eigen::Matrix3d w = cam.rotation_matrix();
    const double fx = cam.fx, fy = cam.fy;
    auto backward = [projected, raster, w, fx, fy, shape = image.shape()](std::span<const float> grad_out,
                                                                         std::span<float* const> grad_in) {
        const auto sg = raster->backward(Tensor(shape, std::vector<float>(grad_out.begin(), grad_out.end())));
        float* g_means = grad_in[0];
        float* g_quats = grad_in[1];
        float* g_scales = grad_in[2];
        float* g_logits = grad_in[3];
        float* g_colors = grad_in[4];
        for (size_t k = 0; k < projected->size(); ++k) {
            const Projected& p = (*projected)[k];
            const int64_t i = p.splat.source;
            if (g_colors)
                for (int ch = 0; ch < 3; ++ch) g_colors[i * 3 + ch] += static_cast<float>(sg.color[k][static_cast<size_t>(ch)]);
            if (g_logits) g_logits[i] += static_cast<float>(sg.opacity[k] * p.opacity * (1.0 - p.opacity));
            if (!g_means && !g_quats && !g_scales) continue;

            Eigen::Matrix2d g2;
            g2 << sg.cov[k][0], 0.5 * sg.cov[k][1], 0.5 * sg.cov[k][1], sg.cov[k][2];
            const Eigen::Matrix3d g_sigma = p.m.transpose() * g2 * p.m;

            if (g_means) {
                const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g2 * p.m * p.sigma;
                const Eigen::Matrix<double, 2, 3> g_j = g_m * w.transpose();
                const double tx = p.t_cam.x(), ty = p.t_cam.y(), tz = p.t_cam.z();
                Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
                g_t.z() += g_j(0, 0) * (-fx / (tz * tz)) + g_j(1, 1) * (-fy / (tz * tz));
                if (p.clamp_x) {
                    const double l = std::copysign(p.lim_x, tx);
                    g_t.z() += g_j(0, 2) * fx * l / (tz * tz);
                } else {
                    g_t.x() += g_j(0, 2) * (-fx / (tz * tz));
                    g_t.z() += g_j(0, 2) * 2.0 * fx * tx / (tz * tz * tz);
                }
                if (p.clamp_y) {
                    const double l = std::copysign(p.lim_y, ty);
                    g_t.z() += g_j(1, 2) * fy * l / (tz * tz);
                } else {
                    g_t.y() += g_j(1, 2) * (-fy / (tz * tz));
                    g_t.z() += g_j(1, 2) * 2.0 * fy * ty / (tz * tz * tz);
                }
                const double gu = sg.mean[k][0], gv = sg.mean[k][1];
                g_t.x() += gu * fx / tz;
                g_t.y() += gv * fy / tz;
                g_t.z() += -gu * fx * tx / (tz * tz) - gv * fy * ty / (tz * tz);
                const Eigen::Vector3d g_mu = w.transpose() * g_t;
                for (int d = 0; d < 3; ++d) g_means[i * 3 + d] += static_cast<float>(g_mu[d]);
            }
            if (g_quats || g_scales) {
                const Eigen::Matrix3d a = p.rot * p.scale.asDiagonal();
                const Eigen::Matrix3d g_a = 2.0 * g_sigma * a;
                if (g_scales) {
                    for (int d = 0; d < 3; ++d) {
                        const double g_s = g_a.col(d).dot(p.rot.col(d));
                        g_scales[i * 3 + d] += static_cast<float>(g_s * p.scale[d]);
                    }
                }
                if (g_quats) {
                    const Eigen::Matrix3d g_r = g_a * p.scale.asDiagonal();
                    const Eigen::Vector4d g_qu = quat_grad(p.q_unit, g_r);
                    const Eigen::Vector4d g_q = (g_qu - p.q_unit * p.q_unit.dot(g_qu)) / p.q_norm;
                    for (int d = 0; d < 4; ++d) g_quats[i * 4 + d] += static_cast<float>(g_q[d]);
                }
            }
        }
    };
    return make_result(image.shape(), std::move(data),
                       {cloud.means, cloud.quats, cloud.log_scales, cloud.opacity_logits, cloud.colors}, "render",
                       std::move(backward));
}

} // namespace wildsplat
