// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/scene/camera.hpp"
#include "wildsplat/scene/gaussian.hpp"
#include "wildsplat/scene/image.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace wildsplat;

namespace {

Eigen::Quaterniond random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("wildsplat_scene_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(BuildCovariance, AxisAlignedScales) {
    Gaussian g;
    g.log_scale = Eigen::Vector3d(std::log(1.0), std::log(2.0), std::log(3.0));
    const auto s = build_covariance(g);
    EXPECT_TRUE(s.isApprox(Eigen::Vector3d(1, 4, 9).asDiagonal().toDenseMatrix(), 1e-12));
}

TEST(BuildCovariance, QuarterTurnSwapsAxes) {
    Gaussian g;
    g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()));
    g.log_scale = Eigen::Vector3d(0.0, std::log(2.0), 0.0);
    const auto s = build_covariance(g);
    EXPECT_NEAR((s - Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(BuildCovariance, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int seed = 0; seed < 20; ++seed) {
        Gaussian g;
        g.rotation = random_quat(rng);
        g.log_scale = Eigen::Vector3d(u(rng), u(rng), u(rng));
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(build_covariance(g));
        std::vector<double> expected{std::exp(2 * g.log_scale[0]), std::exp(2 * g.log_scale[1]),
                                     std::exp(2 * g.log_scale[2])};
        std::sort(expected.begin(), expected.end());
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(es.eigenvalues()[k], expected[static_cast<size_t>(k)], 1e-5);
    }
}

TEST(BuildCovariance, RotationEquivariance) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int seed = 0; seed < 50; ++seed) {
        Gaussian g;
        g.rotation = random_quat(rng);
        g.log_scale = Eigen::Vector3d(u(rng), u(rng), u(rng));
        const Eigen::Quaterniond q = random_quat(rng);
        Gaussian h = g;
        h.rotation = q * g.rotation;
        const Eigen::Matrix3d rq = q.toRotationMatrix();
        const Eigen::Matrix3d sg = build_covariance(g);
        const Eigen::Matrix3d sh = build_covariance(h);
        EXPECT_LT((sh - rq * sg * rq.transpose()).cwiseAbs().maxCoeff(), 1e-10);

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eg(sg), eh(sh);
        EXPECT_LT((eg.eigenvalues() - eh.eigenvalues()).cwiseAbs().maxCoeff(), 1e-9);
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d rotated = rq * eg.eigenvectors().col(k);
            EXPECT_NEAR(std::abs(rotated.dot(eh.eigenvectors().col(k))), 1.0, 1e-6);
        }
    }
}

TEST(GaussianInfluence, PeakTailAndDenseOracle) {
    Gaussian g;
    EXPECT_NEAR(gaussian_influence(g, g.center), std::pow(2 * std::numbers::pi, -1.5), 1e-12);
    EXPECT_NEAR(gaussian_influence(g, g.center), 0.063494, 1e-6);
    EXPECT_LT(gaussian_influence(g, Eigen::Vector3d(50, 0, 0)), 1e-12);

    g.log_scale = Eigen::Vector3d(0.0, std::log(2.0), std::log(3.0));
    const Eigen::Vector3d x(1, 2, 3);
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    sigma.diagonal() << 1, 4, 9;
    const double oracle = std::pow(2 * std::numbers::pi, -1.5) / std::sqrt(sigma.determinant()) *
                          std::exp(-0.5 * x.transpose() * sigma.inverse() * x);
    EXPECT_NEAR(gaussian_influence(g, x), oracle, 1e-7);
}

TEST(GaussianInfluence, IntegratesToOneOverSixSigmaBox) {
    Gaussian g;
    const double sigma = 0.5;
    g.log_scale = Eigen::Vector3d::Constant(std::log(sigma));
    const int n = 48;
    const double half = 3 * sigma, h = 2 * half / n;
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Eigen::Vector3d x(-half + (i + 0.5) * h, -half + (j + 0.5) * h, -half + (k + 0.5) * h);
                total += gaussian_influence(g, x);
            }
    EXPECT_NEAR(total * h * h * h, 1.0, 0.02);
}

TEST(GaussianInfluence, UnderflowedScaleIsDegenerate) {
    Gaussian g;
    g.log_scale = Eigen::Vector3d(-400, 0, 0);
    EXPECT_THROW(gaussian_influence(g, Eigen::Vector3d::Zero()), DegeneracyError);
}

TEST(WorldToCamera, IdentityAndTranslation) {
    Camera cam;
    const Eigen::Vector3d p(0.3, -1.2, 4.0);
    EXPECT_EQ(cam.world_to_camera(p), p);
    cam.translation = Eigen::Vector3d(0, 0, 5);
    EXPECT_EQ(cam.world_to_camera(Eigen::Vector3d::Zero()), Eigen::Vector3d(0, 0, 5));
}

TEST(WorldToCamera, MatchesHomogeneousMatrixAndInverts) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    for (int seed = 0; seed < 50; ++seed) {
        Camera cam;
        cam.rotation = random_quat(rng);
        cam.translation = Eigen::Vector3d(n(rng), n(rng), n(rng));
        Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
        h.topLeftCorner<3, 3>() = cam.rotation.toRotationMatrix();
        h.topRightCorner<3, 1>() = cam.translation;
        const Eigen::Vector3d p(n(rng), n(rng), n(rng));
        const Eigen::Vector4d oracle = h * p.homogeneous();
        EXPECT_LT((cam.world_to_camera(p) - oracle.head<3>()).cwiseAbs().maxCoeff(), 1e-6);
        const auto back = inverse_pose(cam).world_to_camera(cam.world_to_camera(p));
        EXPECT_LT((back - p).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(Camera, LookAtCentersTarget) {
    const auto cam = look_at({3, -1, -4}, {0.2, 0.1, 0.3}, {0, -1, 0}, 120.0, 128, 96);
    const Eigen::Vector3d p = cam.world_to_camera({0.2, 0.1, 0.3});
    EXPECT_NEAR(p.x(), 0.0, 1e-9);
    EXPECT_NEAR(p.y(), 0.0, 1e-9);
    EXPECT_GT(p.z(), 0.0);
    EXPECT_LT((cam.center() - Eigen::Vector3d(3, -1, -4)).norm(), 1e-9);
}

TEST(Camera, ValidationRejectsBadIntrinsics) {
    Camera cam;
    EXPECT_NO_THROW(cam.validate());
    cam.fx = 0;
    EXPECT_THROW(cam.validate(), DomainError);
    cam = Camera{};
    cam.cx = 128;
    EXPECT_THROW(cam.validate(), DomainError);
}

TEST(Camera, TextFileRoundTrip) {
    std::mt19937_64 rng(3);
    std::vector<CameraRecord> cams;
    for (int i = 0; i < 4; ++i) {
        CameraRecord r;
        r.id = i * 2;
        r.camera.rotation = random_quat(rng);
        r.camera.translation = Eigen::Vector3d(i, -i, 0.5 * i);
        cams.push_back(r);
    }
    const auto path = scratch_dir("cams") / "cameras.txt";
    write_cameras(path, cams);
    const auto back = read_cameras(path);
    ASSERT_EQ(back.size(), cams.size());
    for (size_t i = 0; i < cams.size(); ++i) {
        EXPECT_EQ(back[i].id, cams[i].id);
        EXPECT_EQ(back[i].camera.rotation.coeffs(), cams[i].camera.rotation.coeffs());
        EXPECT_EQ(back[i].camera.translation, cams[i].camera.translation);
    }
}

TEST(GaussianCloud, ProjectionKeepsUnitQuaternionsAndColorRange) {
    std::mt19937_64 rng(4);
    GaussianCloud cloud(std::vector<Gaussian>(10));
    for (auto& v : cloud.quats.mutable_data()) v = std::normal_distribution<float>(0.0f, 2.0f)(rng);
    for (auto& v : cloud.colors.mutable_data()) v = std::normal_distribution<float>(0.5f, 1.0f)(rng);
    cloud.project_parameters();
    for (int64_t i = 0; i < cloud.size(); ++i) {
        double n = 0.0;
        for (int k = 0; k < 4; ++k) n += double(cloud.quats[i * 4 + k]) * cloud.quats[i * 4 + k];
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
    }
    for (float c : cloud.colors.data()) {
        EXPECT_GE(c, 0.0f);
        EXPECT_LE(c, 1.0f);
    }
}

TEST(GaussianCloud, CheckpointRoundTrip) {
    std::vector<Gaussian> gs(7);
    for (size_t i = 0; i < gs.size(); ++i) {
        gs[i].center = Eigen::Vector3d(double(i), 0.5, -1.0);
        gs[i].opacity_logit = 0.1 * double(i);
    }
    const GaussianCloud cloud(gs);
    const auto dir = scratch_dir("cloud");
    save_cloud(dir, cloud, 42, "abc123");
    const auto back = load_cloud(dir);
    EXPECT_EQ(back.iteration, 42);
    EXPECT_EQ(back.config_hash, "abc123");
    const auto a = cloud.parameters(), b = back.cloud.parameters();
    for (size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].shape(), b[i].shape());
        EXPECT_TRUE(std::equal(a[i].data().begin(), a[i].data().end(), b[i].data().begin()));
    }
}

TEST(GaussianCloud, ValidateRejectsMismatchedAttributes) {
    GaussianCloud cloud(std::vector<Gaussian>(3));
    cloud.colors = Tensor({2, 3});
    EXPECT_THROW(cloud.validate(), DimensionError);
    EXPECT_THROW(GaussianCloud().validate(), ContractError);
}

TEST(Image, PngRoundTripOfQuantizedValues) {
    std::mt19937_64 rng(12);
    const auto img = quantize8(Tensor::uniform({3, 9, 13}, rng, 0.0f, 1.0f));
    const auto dir = scratch_dir("png");
    write_png_rgb(dir / "a.png", img);
    const auto back = read_png_rgb(dir / "a.png");
    ASSERT_EQ(back.shape(), img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) EXPECT_EQ(back[i], img[i]);

    Tensor mask({1, 9, 13});
    for (int64_t i = 0; i < mask.numel(); i += 3) mask.mutable_data()[i] = 1.0f;
    write_mask_png(dir / "m.png", mask);
    const auto mback = read_mask_png(dir / "m.png");
    for (int64_t i = 0; i < mask.numel(); ++i) EXPECT_EQ(mback[i], mask[i]);
}

TEST(Image, ValidationChecksShapeRangeAndBinarity) {
    EXPECT_THROW(validate_image(Tensor({1, 4, 4})), DimensionError);
    EXPECT_THROW(validate_image(Tensor({3, 4, 4}, 1.5f)), DomainError);
    EXPECT_THROW(validate_image(Tensor({3, 4, 4}), 5, 4), DimensionError);
    EXPECT_THROW(validate_mask(Tensor({1, 4, 4}, 0.5f)), DomainError);
    EXPECT_NO_THROW(validate_mask(Tensor({1, 4, 4}, 1.0f)));
}
