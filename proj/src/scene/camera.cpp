// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/scene/camera.hpp"

#include "wildsplat/tensor/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace wildsplat {

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DomainError("camera size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw DomainError("principal point outside the image");
    if (std::abs(rotation.norm() - 1.0) > 1e-5) throw DomainError("camera rotation is not a unit quaternion");
    if (!translation.allFinite()) throw DomainError("camera translation is not finite");
}

Eigen::Vector3d Camera::center() const { return -(rotation_matrix().transpose() * translation); }

Eigen::Vector3d Camera::world_to_camera(const Eigen::Vector3d& p) const { return rotation_matrix() * p + translation; }

Camera inverse_pose(const Camera& cam) {
    Camera inv = cam;
    inv.rotation = cam.rotation.normalized().conjugate();
    inv.translation = cam.center();
    return inv;
}

Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up, double focal,
               int width, int height) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    if (x.norm() < 1e-9) throw DomainError("look_at: up vector parallel to viewing direction");
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    Camera cam;
    cam.rotation = Eigen::Quaterniond(r).normalized();
    if (cam.rotation.w() < 0) cam.rotation.coeffs() *= -1.0;
    cam.translation = -(cam.rotation_matrix() * eye);
    cam.fx = cam.fy = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    return cam;
}

Camera with_center(const Camera& cam, const Eigen::Vector3d& c) {
    Camera out = cam;
    out.translation = -(cam.rotation_matrix() * c);
    return out;
}

std::vector<CameraRecord> read_cameras(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open camera file " + path.string());
    std::vector<CameraRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        CameraRecord rec;
        double qw, qx, qy, qz;
        auto& c = rec.camera;
        if (!(ss >> rec.id >> qw >> qx >> qy >> qz >> c.translation.x() >> c.translation.y() >> c.translation.z() >>
              c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height))
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed camera line");
        c.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
        c.validate();
        out.push_back(rec);
    }
    return out;
}

void write_cameras(const std::filesystem::path& path, const std::vector<CameraRecord>& cams) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write camera file " + path.string());
    out << "# id qw qx qy qz tx ty tz fx fy cx cy w h\n" << std::setprecision(17);
    for (const auto& rec : cams) {
        const auto& c = rec.camera;
        out << rec.id << ' ' << c.rotation.w() << ' ' << c.rotation.x() << ' ' << c.rotation.y() << ' '
            << c.rotation.z() << ' ' << c.translation.x() << ' ' << c.translation.y() << ' ' << c.translation.z()
            << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width << ' ' << c.height << '\n';
    }
    if (!out) throw IoError("failed writing camera file " + path.string());
}

} // namespace wildsplat
