// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/synth/scene.hpp"

#include "wildsplat/tensor/ops.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wildsplat {

namespace {

constexpr double kPi = std::numbers::pi;
const Eigen::Vector3d kTarget(0.0, 0.0, 0.45);
const Eigen::Vector3d kUp(0.0, 0.0, 1.0);

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Eigen::Vector3d random_color(std::mt19937_64& rng, double lo, double hi) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

/// Flat disc Gaussian lying in the plane with normal `n`.
Gaussian surfel(const Eigen::Vector3d& center, const Eigen::Vector3d& n, double sigma, const Eigen::Vector3d& color) {
    Gaussian g;
    g.center = center;
    g.rotation = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), n.normalized());
    g.log_scale = Eigen::Vector3d(std::log(sigma), std::log(sigma), std::log(0.25 * sigma));
    g.opacity_logit = 3.0;
    g.color = color.cwiseMax(0.0).cwiseMin(1.0);
    return g;
}

void add_box(std::vector<Gaussian>& out, std::mt19937_64& rng) {
    const double size = uniform(rng, 0.8, 1.15);
    const Eigen::Vector3d center(uniform(rng, -1.0, -0.5), uniform(rng, -0.4, 0.5), 0.5 * size);
    const Eigen::Matrix3d yaw = Eigen::AngleAxisd(uniform(rng, -0.6, 0.6), kUp).toRotationMatrix();
    const Eigen::Vector3d base = random_color(rng, 0.25, 0.9);
    constexpr int n = 9;
    const double step = size / n;
    // Five visible faces (no bottom): normal axis and sign.
    const std::array<std::pair<int, double>, 5> faces{{{0, 1.0}, {0, -1.0}, {1, 1.0}, {1, -1.0}, {2, 1.0}}};
    for (const auto& [axis, sign] : faces) {
        const Eigen::Vector3d tint = base + 0.15 * Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Eigen::Vector3d local = Eigen::Vector3d::Zero();
                local(axis) = sign * 0.5 * size;
                local(ua) = (i + 0.5) * step - 0.5 * size;
                local(va) = (j + 0.5) * step - 0.5 * size;
                Eigen::Vector3d normal = Eigen::Vector3d::Zero();
                normal(axis) = sign;
                const bool checker = ((i / 3) + (j / 3)) % 2 == 0;
                out.push_back(surfel(center + yaw * local, yaw * normal, 0.6 * step, tint * (checker ? 1.2 : 0.7)));
            }
    }
}

void add_sphere(std::vector<Gaussian>& out, std::mt19937_64& rng) {
    const double r = uniform(rng, 0.45, 0.65);
    const Eigen::Vector3d center(uniform(rng, 0.4, 0.95), uniform(rng, -0.5, 0.4), r);
    const Eigen::Vector3d c1 = random_color(rng, 0.2, 0.95), c2 = random_color(rng, 0.1, 0.8);
    const int bands = 5 + static_cast<int>(uniform(rng, 0.0, 3.0));
    constexpr int n = 420;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const double spacing = std::sqrt(4.0 * kPi * r * r / n);
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / n;
        const double rho = std::sqrt(1.0 - z * z);
        const Eigen::Vector3d dir(rho * std::cos(golden * k), rho * std::sin(golden * k), z);
        const int band = static_cast<int>(std::floor((std::acos(z) / kPi) * bands));
        out.push_back(surfel(center + r * dir, dir, 0.6 * spacing, band % 2 == 0 ? c1 : c2));
    }
}

void add_ground(std::vector<Gaussian>& out, std::mt19937_64& rng) {
    const Eigen::Vector3d c1 = random_color(rng, 0.3, 0.7), c2 = random_color(rng, 0.15, 0.55);
    constexpr int n = 22;
    constexpr double half = 2.2, step = 2.0 * half / n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Eigen::Vector3d p(-half + (i + 0.5) * step, -half + (j + 0.5) * step, 0.0);
            const bool checker = ((i / 2) + (j / 2)) % 2 == 0;
            out.push_back(surfel(p, kUp, 0.6 * step, checker ? c1 : c2));
        }
}

Camera ring_camera(const SceneSpec& spec, double azimuth_deg, double height, double radius) {
    const double a = azimuth_deg * kPi / 180.0;
    const Eigen::Vector3d eye(radius * std::cos(a), radius * std::sin(a), height);
    return look_at(eye, kTarget, kUp, spec.focal, spec.image_size, spec.image_size);
}

ImageRGB render_clean(const GaussianCloud& cloud, const Camera& cam) {
    NoGradGuard guard;
    return quantize8(render(cloud, cam, scene_background()));
}

} // namespace

bool Appearance::is_identity() const {
    return gain == 1.0 && gamma == 1.0 && white_balance == std::array<double, 3>{1.0, 1.0, 1.0};
}

ImageRGB Appearance::apply(const ImageRGB& image) const {
    if (image.rank() != 3 || image.size(0) != 3) throw DimensionError("appearance expects an RGB image");
    if (is_identity()) return image.clone();
    const int64_t hw = image.size(1) * image.size(2);
    std::vector<float> out(image.data().begin(), image.data().end());
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < hw; ++i) {
            auto& v = out[static_cast<size_t>(c * hw + i)];
            v = static_cast<float>(std::clamp(gain * white_balance[static_cast<size_t>(c)] * std::pow(static_cast<double>(v), gamma), 0.0, 1.0));
        }
    return Tensor(image.shape(), std::move(out));
}

void SceneSpec::validate() const {
    if (n_train < 2 || n_test < 1) throw DomainError("scene needs at least 2 training and 1 test view");
    if (image_size <= 0 || image_size % 16 != 0) throw DomainError("image size must be a positive multiple of 16");
    if (focal <= 0.0 || ring_radius <= 0.0) throw DomainError("focal and ring radius must be positive");
    if (gain_range < 0.0 || gain_range >= 1.0 || gamma_range < 0.0 || gamma_range >= 1.0 || white_balance_range < 0.0 ||
        white_balance_range >= 1.0)
        throw DomainError("appearance ranges must be in [0, 1)");
    if (occluders < 0 || occluder_min_radius <= 0.0 || occluder_max_radius < occluder_min_radius)
        throw DomainError("invalid occluder parameters");
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Eigen::Vector3f scene_background() { return {0.62f, 0.72f, 0.85f}; }

GaussianCloud make_scene_cloud(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Gaussian> g;
    add_ground(g, rng);
    add_box(g, rng);
    add_sphere(g, rng);
    return GaussianCloud(g);
}

Appearance random_appearance(const SceneSpec& spec, std::mt19937_64& rng) {
    Appearance a;
    a.gain = uniform(rng, 1.0 - spec.gain_range, 1.0 + spec.gain_range);
    a.gamma = uniform(rng, 1.0 - spec.gamma_range, 1.0 + spec.gamma_range);
    for (auto& w : a.white_balance) w = uniform(rng, 1.0 - spec.white_balance_range, 1.0 + spec.white_balance_range);
    return a;
}

Mask add_occluders(ImageRGB& image, const SceneSpec& spec, std::mt19937_64& rng) {
    const int64_t h = image.size(1), w = image.size(2), hw = h * w;
    std::vector<float> mask(static_cast<size_t>(hw), 0.0f);
    std::vector<float> px(image.data().begin(), image.data().end());
    for (int k = 0; k < spec.occluders; ++k) {
        const double rx = uniform(rng, spec.occluder_min_radius, spec.occluder_max_radius);
        const double ry = uniform(rng, spec.occluder_min_radius, spec.occluder_max_radius);
        const double cx = uniform(rng, 0.15 * w, 0.85 * w), cy = uniform(rng, 0.25 * h, 0.95 * h);
        const double theta = uniform(rng, 0.0, kPi);
        // Saturated colors, far from the scene palette.
        std::array<float, 3> color{};
        const int hot = static_cast<int>(uniform(rng, 0.0, 3.0)) % 3;
        for (int c = 0; c < 3; ++c) color[static_cast<size_t>(c)] = static_cast<float>(c == hot ? uniform(rng, 0.85, 1.0) : uniform(rng, 0.0, 0.2));
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (dx * ct + dy * st) / rx, v = (-dx * st + dy * ct) / ry;
                if (u * u + v * v > 1.0) continue;
                mask[static_cast<size_t>(y * w + x)] = 1.0f;
                for (int c = 0; c < 3; ++c) px[static_cast<size_t>(c * hw + y * w + x)] = color[static_cast<size_t>(c)];
            }
    }
    image = quantize8(Tensor(image.shape(), std::move(px)));
    return Tensor({1, h, w}, std::move(mask));
}

SynthScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    SynthScene scene;
    scene.spec = spec;
    scene.gt_cloud = make_scene_cloud(spec.seed);
    std::mt19937_64 rng(spec.seed ^ 0x5eed5eedULL);
    int id = 0;
    for (int k = 0; k < spec.n_train; ++k) {
        SynthView v;
        v.id = id++;
        v.split = Split::Train;
        const double az = -90.0 + spec.arc_degrees * (static_cast<double>(k) / (spec.n_train - 1) - 0.5);
        v.camera = ring_camera(spec, az, spec.ring_height, spec.ring_radius);
        v.clean = render_clean(scene.gt_cloud, v.camera);
        if (k > 0) v.appearance = random_appearance(spec, rng);
        v.image = quantize8(v.appearance.apply(v.clean));
        v.mask = add_occluders(v.image, spec, rng);
        scene.views.push_back(std::move(v));
    }
    for (int j = 0; j < spec.n_test; ++j) {
        SynthView v;
        v.id = id++;
        v.split = Split::Test;
        const double az = -90.0 + spec.arc_degrees * ((j + 0.5) / spec.n_test - 0.5);
        const double height = spec.ring_height + (j % 2 == 0 ? 0.25 : -0.25);
        v.camera = ring_camera(spec, az, height, spec.ring_radius);
        v.clean = render_clean(scene.gt_cloud, v.camera);
        scene.views.push_back(std::move(v));
    }
    return scene;
}

std::vector<ImageRGB> prior_corpus(uint64_t first_seed, int scenes, int views_per_scene, const SceneSpec& spec) {
    spec.validate();
    std::vector<ImageRGB> out;
    for (int s = 0; s < scenes; ++s) {
        const uint64_t seed = first_seed + static_cast<uint64_t>(s);
        const GaussianCloud cloud = make_scene_cloud(seed);
        std::mt19937_64 rng(seed ^ 0xc0ffeeULL);
        for (int v = 0; v < views_per_scene; ++v) {
            const Camera cam = ring_camera(spec, uniform(rng, 0.0, 360.0), uniform(rng, 0.9, 2.4),
                                           uniform(rng, 0.85, 1.15) * spec.ring_radius);
            const ImageRGB clean = render_clean(cloud, cam);
            out.push_back(quantize8(random_appearance(spec, rng).apply(clean)));
        }
    }
    return out;
}

} // namespace wildsplat
