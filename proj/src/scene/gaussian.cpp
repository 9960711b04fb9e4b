// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/scene/gaussian.hpp"

#include "wildsplat/tensor/io.hpp"

#include <Eigen/LU>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace wildsplat {

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& wxyz) {
    const Eigen::Vector4d q = wxyz.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d build_covariance(const Gaussian& g) {
    const Eigen::Vector4d q(g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z());
    const Eigen::Matrix3d m = quat_to_matrix(q) * g.log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

double gaussian_influence(const Gaussian& g, const Eigen::Vector3d& x) {
    const Eigen::Matrix3d sigma = build_covariance(g);
    const double det = sigma.determinant();
    if (!(det > 1e-300) || !std::isfinite(det)) throw DegeneracyError("singular Gaussian covariance");
    const Eigen::Vector3d d = x - g.center;
    const double m = d.dot(sigma.ldlt().solve(d));
    return std::pow(2.0 * std::numbers::pi, -1.5) / std::sqrt(det) * std::exp(-0.5 * m);
}

GaussianCloud::GaussianCloud(const std::vector<Gaussian>& gaussians) {
    const auto n = static_cast<int64_t>(gaussians.size());
    means = Tensor({n, 3});
    quats = Tensor({n, 4});
    log_scales = Tensor({n, 3});
    opacity_logits = Tensor({n});
    colors = Tensor({n, 3});
    auto m = means.mutable_data();
    auto q = quats.mutable_data();
    auto s = log_scales.mutable_data();
    auto o = opacity_logits.mutable_data();
    auto c = colors.mutable_data();
    for (int64_t i = 0; i < n; ++i) {
        const auto& g = gaussians[static_cast<size_t>(i)];
        const auto rot = g.rotation.normalized();
        for (int k = 0; k < 3; ++k) {
            m[i * 3 + k] = static_cast<float>(g.center[k]);
            s[i * 3 + k] = static_cast<float>(g.log_scale[k]);
            c[i * 3 + k] = static_cast<float>(g.color[k]);
        }
        q[i * 4 + 0] = static_cast<float>(rot.w());
        q[i * 4 + 1] = static_cast<float>(rot.x());
        q[i * 4 + 2] = static_cast<float>(rot.y());
        q[i * 4 + 3] = static_cast<float>(rot.z());
        o[i] = static_cast<float>(g.opacity_logit);
    }
}

Gaussian GaussianCloud::gaussian(int64_t i) const {
    if (i < 0 || i >= size()) throw DimensionError("gaussian index out of range");
    Gaussian g;
    for (int k = 0; k < 3; ++k) {
        g.center[k] = means[i * 3 + k];
        g.log_scale[k] = log_scales[i * 3 + k];
        g.color[k] = colors[i * 3 + k];
    }
    g.rotation = Eigen::Quaterniond(quats[i * 4], quats[i * 4 + 1], quats[i * 4 + 2], quats[i * 4 + 3]);
    g.opacity_logit = opacity_logits[i];
    return g;
}

void GaussianCloud::set_requires_grad(bool value) {
    for (auto t : parameters()) t.set_requires_grad(value);
}

void GaussianCloud::project_parameters() {
    auto q = quats.mutable_data();
    for (int64_t i = 0; i < size(); ++i) {
        float* p = q.data() + i * 4;
        const double n = std::sqrt(double(p[0]) * p[0] + double(p[1]) * p[1] + double(p[2]) * p[2] + double(p[3]) * p[3]);
        if (n < 1e-12) {
            p[0] = 1.0f;
            p[1] = p[2] = p[3] = 0.0f;
            continue;
        }
        for (int k = 0; k < 4; ++k) p[k] = static_cast<float>(p[k] / n);
    }
    for (auto& v : colors.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
}

GaussianCloud GaussianCloud::clone() const {
    GaussianCloud out;
    out.means = means.clone();
    out.quats = quats.clone();
    out.log_scales = log_scales.clone();
    out.opacity_logits = opacity_logits.clone();
    out.colors = colors.clone();
    return out;
}

void GaussianCloud::validate() const {
    if (!means.defined() || size() == 0) throw ContractError("gaussian cloud is empty");
    const int64_t n = size();
    auto expect = [n](const Tensor& t, const Shape& shape, const char* name) {
        if (!t.defined() || t.shape() != shape)
            throw DimensionError(std::string(name) + " must have shape " + shape_str(shape));
    };
    expect(means, {n, 3}, "means");
    expect(quats, {n, 4}, "quats");
    expect(log_scales, {n, 3}, "log_scales");
    expect(opacity_logits, {n}, "opacity_logits");
    expect(colors, {n, 3}, "colors");
}

namespace {
constexpr const char* kAttributeFiles[] = {"means.sgsw", "quats.sgsw", "log_scales.sgsw", "opacity_logits.sgsw",
                                           "colors.sgsw"};
}

void save_cloud(const std::filesystem::path& dir, const GaussianCloud& cloud, int64_t iteration,
                const std::string& config_hash) {
    cloud.validate();
    std::filesystem::create_directories(dir);
    const auto params = cloud.parameters();
    for (size_t i = 0; i < params.size(); ++i) save_tensor(dir / kAttributeFiles[i], params[i]);
    std::ofstream out(dir / "manifest.txt");
    out << "points " << cloud.size() << "\niteration " << iteration << "\nconfig_hash " << config_hash << '\n';
    if (!out) throw IoError("failed writing cloud manifest in " + dir.string());
}

CloudCheckpoint load_cloud(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw IoError("missing cloud manifest in " + dir.string());
    CloudCheckpoint ck;
    int64_t points = -1;
    std::string key;
    while (in >> key) {
        if (key == "points") in >> points;
        else if (key == "iteration") in >> ck.iteration;
        else if (key == "config_hash") in >> ck.config_hash;
        else throw IoError("unknown cloud manifest key " + key);
    }
    Tensor* slots[] = {&ck.cloud.means, &ck.cloud.quats, &ck.cloud.log_scales, &ck.cloud.opacity_logits,
                       &ck.cloud.colors};
    for (size_t i = 0; i < 5; ++i) *slots[i] = load_tensor(dir / kAttributeFiles[i]);
    ck.cloud.validate();
    if (ck.cloud.size() != points) throw IoError("cloud manifest point count disagrees with tensors");
    return ck;
}

} // namespace wildsplat
