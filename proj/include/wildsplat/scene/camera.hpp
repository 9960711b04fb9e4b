// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <vector>

namespace wildsplat {

/// Pinhole camera with a world-to-camera pose. Camera axes follow the OpenCV
/// convention: +x right, +y down, +z forward. Pixel centers sit at integer
/// coordinates.
struct Camera {
    /// World-to-camera rotation, (w, x, y, z) Hamilton convention.
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double fx = 100.0;
    double fy = 100.0;
    double cx = 64.0;
    double cy = 64.0;
    int width = 128;
    int height = 128;

    /// Throws DomainError when intrinsics or the rotation are invalid.
    void validate() const;

    Eigen::Matrix3d rotation_matrix() const { return rotation.normalized().toRotationMatrix(); }
    /// Camera center in world coordinates, -Rᵀ t.
    Eigen::Vector3d center() const;
    /// p_cam = R p + t.
    Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const;
};

/// Camera whose pose is the inverse rigid transform (camera-to-world).
Camera inverse_pose(const Camera& cam);

/// Camera at `eye` looking at `target`; `up` is the approximate world up.
Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up, double focal,
               int width, int height);

/// Returns the camera with the same intrinsics whose center is `c`.
Camera with_center(const Camera& cam, const Eigen::Vector3d& c);

struct CameraRecord {
    int id = 0;
    Camera camera;
};

/// One camera per line: `id qw qx qy qz tx ty tz fx fy cx cy w h`.
/// Lines starting with '#' are comments.
std::vector<CameraRecord> read_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, const std::vector<CameraRecord>& cams);

} // namespace wildsplat
