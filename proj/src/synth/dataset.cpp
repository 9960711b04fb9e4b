// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/synth/dataset.hpp"

#include "wildsplat/occlusion/masks.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace wildsplat {

namespace {

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw IoError("unknown split '" + s + "'");
}

Mask zero_mask(const ImageRGB& image) { return Tensor({1, image.size(1), image.size(2)}, 0.0f); }

/// Pixel color at the projection of p in cam, or nothing when p is behind
/// the camera or outside the frame.
std::optional<Eigen::Vector3d> sample_color(const ImageRGB& image, const Camera& cam, const Eigen::Vector3d& p) {
    const Eigen::Vector3d c = cam.world_to_camera(p);
    if (c.z() <= 0.05) return std::nullopt;
    const auto x = static_cast<int64_t>(std::lround(cam.fx * c.x() / c.z() + cam.cx));
    const auto y = static_cast<int64_t>(std::lround(cam.fy * c.y() / c.z() + cam.cy));
    const int64_t h = image.size(1), w = image.size(2);
    if (x < 0 || y < 0 || x >= w || y >= h) return std::nullopt;
    const auto d = image.data();
    const auto hw = static_cast<size_t>(h * w), i = static_cast<size_t>(y * w + x);
    return Eigen::Vector3d(d[i], d[hw + i], d[2 * hw + i]);
}

} // namespace

std::vector<size_t> Dataset::indices(Split split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < views.size(); ++i)
        if (views[i].split == split) out.push_back(i);
    return out;
}

std::string view_name(int id) { return fmt::format("view_{:03d}", id); }

Dataset to_dataset(const SynthScene& scene) {
    Dataset ds;
    ds.gt_cloud = scene.gt_cloud.clone();
    for (const auto& v : scene.views) {
        ViewRecord r;
        r.id = v.id;
        r.name = view_name(v.id);
        r.split = v.split;
        r.camera = v.camera;
        r.clean = v.clean;
        if (v.split == Split::Train) {
            r.image = v.image;
            r.mask = v.mask;
        }
        ds.views.push_back(std::move(r));
    }
    return ds;
}

void write_dataset(const fs::path& dir, const SynthScene& scene) {
    for (const char* sub : {"images", "masks", "clean"}) fs::create_directories(dir / sub);
    std::vector<CameraRecord> cams;
    std::ofstream manifest(dir / "manifest.txt");
    std::ofstream appearance(dir / "appearance.txt");
    const auto& s = scene.spec;
    manifest << "seed " << s.seed << "\nn_train " << s.n_train << "\nn_test " << s.n_test << "\nimage_size "
             << s.image_size << "\nring_radius " << s.ring_radius << "\nring_height " << s.ring_height
             << "\narc_degrees " << s.arc_degrees << "\nfocal " << s.focal << "\ngain_range " << s.gain_range
             << "\ngamma_range " << s.gamma_range << "\nwhite_balance_range " << s.white_balance_range
             << "\noccluders " << s.occluders << "\noccluder_radius " << s.occluder_min_radius << ' '
             << s.occluder_max_radius << '\n';
    appearance << "# id gain gamma wb_r wb_g wb_b\n";
    appearance.precision(17);
    for (const auto& v : scene.views) {
        const std::string name = view_name(v.id);
        manifest << "view " << v.id << ' ' << split_name(v.split) << ' ' << name << '\n';
        cams.push_back({v.id, v.camera});
        write_png_rgb(dir / "clean" / (name + ".png"), v.clean);
        if (v.split == Split::Train) {
            write_png_rgb(dir / "images" / (name + ".png"), v.image);
            write_mask_png(dir / "masks" / (name + ".png"), v.mask);
            appearance << v.id << ' ' << v.appearance.gain << ' ' << v.appearance.gamma << ' '
                       << v.appearance.white_balance[0] << ' ' << v.appearance.white_balance[1] << ' '
                       << v.appearance.white_balance[2] << '\n';
        }
    }
    write_cameras(dir / "cameras.txt", cams);
    save_cloud(dir / "gt_cloud", scene.gt_cloud, 0, "synthetic");
    if (!manifest || !appearance) throw IoError("failed writing dataset metadata in " + dir.string());
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    if (!fs::exists(dir / "cameras.txt")) throw IoError("dataset has no cameras.txt: " + dir.string());
    std::map<int, Camera> cams;
    for (const auto& r : read_cameras(dir / "cameras.txt")) cams[r.id] = r.camera;

    std::vector<std::tuple<int, Split, std::string>> entries;
    if (fs::exists(dir / "manifest.txt")) {
        std::ifstream in(dir / "manifest.txt");
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string key;
            ls >> key;
            if (key != "view") continue;
            int id = 0;
            std::string split, name;
            if (!(ls >> id >> split >> name)) throw IoError("malformed manifest line: " + line);
            entries.emplace_back(id, parse_split(split), name);
        }
    } else {
        for (const auto& [id, cam] : cams) {
            const std::string name = view_name(id);
            if (fs::exists(dir / "images" / (name + ".png"))) entries.emplace_back(id, Split::Train, name);
            else if (fs::exists(dir / "clean" / (name + ".png"))) entries.emplace_back(id, Split::Test, name);
        }
    }
    if (entries.empty()) throw IoError("dataset lists no views: " + dir.string());

    Dataset ds;
    for (const auto& [id, split, name] : entries) {
        const auto it = cams.find(id);
        if (it == cams.end()) throw IoError("view " + std::to_string(id) + " has no camera");
        ViewRecord r;
        r.id = id;
        r.name = name;
        r.split = split;
        r.camera = it->second;
        const fs::path clean = dir / "clean" / (name + ".png");
        if (fs::exists(clean)) r.clean = read_png_rgb(clean);
        if (split == Split::Train) {
            r.image = read_png_rgb(dir / "images" / (name + ".png"));
            const fs::path mask = dir / "masks" / (name + ".png");
            r.mask = fs::exists(mask) ? read_mask_png(mask) : zero_mask(r.image);
            validate_mask(r.mask, r.image.size(1), r.image.size(2));
        } else if (!r.clean.defined()) {
            throw IoError("test view " + name + " has no clean reference image");
        }
        ds.views.push_back(std::move(r));
    }
    if (fs::exists(dir / "gt_cloud" / "manifest.txt")) ds.gt_cloud = load_cloud(dir / "gt_cloud").cloud;
    return ds;
}

DenseInit dense_init(const Dataset& dataset, const DenseInitOptions& options) {
    if (!dataset.gt_cloud) throw StateError("dense_init needs the ground-truth point provider (gt_cloud)");
    if (options.jitter < 0.0 || options.spurious_frac < 0.0) throw DomainError("jitter and spurious fraction must be nonnegative");
    const auto train = dataset.indices(Split::Train);
    if (train.empty()) throw DomainError("dense_init needs training views");
    std::mt19937_64 rng(options.seed);

    DenseInit out;
    for (size_t k : train) {
        const auto& v = dataset.views[k];
        out.filled.push_back(options.noise_fill ? mask_noise_fill(v.image, v.mask, rng) : v.image);
    }

    const Tensor& gt = dataset.gt_cloud->means;
    const int64_t n_gt = gt.size(0);
    std::vector<Eigen::Vector3d> points;
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e300), hi = Eigen::Vector3d::Constant(-1e300);
    for (int64_t i = 0; i < n_gt; ++i) {
        Eigen::Vector3d p(gt[3 * i], gt[3 * i + 1], gt[3 * i + 2]);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
        if (options.jitter > 0.0)
            for (int a = 0; a < 3; ++a) p(a) += options.jitter * normal(rng);
        points.push_back(p);
    }
    const auto n_spurious = static_cast<int64_t>(std::llround(options.spurious_frac * static_cast<double>(n_gt)));
    for (int64_t i = 0; i < n_spurious; ++i) {
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) p(a) = std::uniform_real_distribution<double>(lo(a), hi(a))(rng);
        points.push_back(p);
    }

    // Each point takes its color from the closest training camera that sees it.
    std::vector<Gaussian> gaussians(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        std::vector<std::pair<double, size_t>> order;
        for (size_t t = 0; t < train.size(); ++t)
            order.emplace_back((dataset.views[train[t]].camera.center() - points[i]).norm(), t);
        std::sort(order.begin(), order.end());
        Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
        for (const auto& [d, t] : order)
            if (auto c = sample_color(out.filled[t], dataset.views[train[t]].camera, points[i])) {
                color = *c;
                break;
            }
        auto& g = gaussians[i];
        g.center = points[i];
        g.color = color;
        g.opacity_logit = std::log(options.initial_opacity / (1.0 - options.initial_opacity));
    }
    for (size_t i = 0; i < points.size(); ++i) {
        std::array<double, 3> best{1e300, 1e300, 1e300};
        for (size_t j = 0; j < points.size(); ++j) {
            if (i == j) continue;
            const double d = (points[i] - points[j]).squaredNorm();
            if (d < best[2]) {
                best[2] = d;
                std::sort(best.begin(), best.end());
            }
        }
        double mean = 0.0;
        for (double d : best) mean += std::sqrt(d) / 3.0;
        gaussians[i].log_scale = Eigen::Vector3d::Constant(std::log(std::max(mean, 1e-4)));
    }
    out.cloud = GaussianCloud(gaussians);
    return out;
}

} // namespace wildsplat
