// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/diffusion/codec.hpp"

#include "wildsplat/tensor/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace wildsplat {

namespace {

void check_factor(const Tensor& x, int64_t factor) {
    if (x.rank() != 3) throw DimensionError("expected [C,H,W], got " + shape_str(x.shape()));
    if (factor <= 0) throw DomainError("space-to-depth factor must be positive");
}

Tensor to_tensor(Shape shape, const std::vector<double>& v) {
    std::vector<float> f(v.begin(), v.end());
    return Tensor(std::move(shape), std::move(f));
}

std::vector<double> from_tensor(const Tensor& t, size_t expected, const char* what) {
    if (static_cast<size_t>(t.numel()) != expected) throw IoError(std::string("codec tensor ") + what + " has wrong size");
    return {t.data().begin(), t.data().end()};
}

} // namespace

Tensor space_to_depth(const Tensor& x, int64_t f) {
    check_factor(x, f);
    const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
    if (h % f != 0 || w % f != 0) throw DimensionError("image " + shape_str(x.shape()) + " not divisible by " + std::to_string(f));
    const int64_t ho = h / f, wo = w / f;
    std::vector<float> out(static_cast<size_t>(x.numel()));
    const auto in = x.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < f; ++dy)
            for (int64_t dx = 0; dx < f; ++dx) {
                const int64_t oc = (ch * f + dy) * f + dx;
                for (int64_t y = 0; y < ho; ++y)
                    for (int64_t xx = 0; xx < wo; ++xx)
                        out[static_cast<size_t>((oc * ho + y) * wo + xx)] =
                            in[static_cast<size_t>((ch * h + y * f + dy) * w + xx * f + dx)];
            }
    return Tensor({c * f * f, ho, wo}, std::move(out));
}

Tensor depth_to_space(const Tensor& x, int64_t f) {
    check_factor(x, f);
    const int64_t cf = x.size(0), ho = x.size(1), wo = x.size(2);
    if (cf % (f * f) != 0) throw DimensionError("channels of " + shape_str(x.shape()) + " not divisible by factor squared");
    const int64_t c = cf / (f * f), h = ho * f, w = wo * f;
    std::vector<float> out(static_cast<size_t>(x.numel()));
    const auto in = x.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < f; ++dy)
            for (int64_t dx = 0; dx < f; ++dx) {
                const int64_t ic = (ch * f + dy) * f + dx;
                for (int64_t y = 0; y < ho; ++y)
                    for (int64_t xx = 0; xx < wo; ++xx)
                        out[static_cast<size_t>((ch * h + y * f + dy) * w + xx * f + dx)] =
                            in[static_cast<size_t>((ic * ho + y) * wo + xx)];
            }
    return Tensor({c, h, w}, std::move(out));
}

LatentCodec LatentCodec::fit(const std::vector<ImageRGB>& images, int64_t latent_channels) {
    if (images.empty()) throw DomainError("codec fit needs at least one image");
    const int64_t p = 3 * kPatch * kPatch;
    if (latent_channels <= 0 || latent_channels > p) throw DomainError("latent channels must be in [1, 48]");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(p, p);
    int64_t count = 0;
    for (const auto& img : images) {
        if (img.rank() != 3 || img.size(0) != 3) throw DimensionError("codec expects RGB images, got " + shape_str(img.shape()));
        const Tensor d = space_to_depth(img, kPatch);
        const int64_t sites = d.size(1) * d.size(2);
        const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(d.data().data(), p, sites);
        const Eigen::MatrixXd md = m.cast<double>();
        mean += md.rowwise().sum();
        second.noalias() += md * md.transpose();
        count += sites;
    }
    mean /= static_cast<double>(count);
    const Eigen::MatrixXd cov = second / static_cast<double>(count) - mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("codec eigendecomposition failed");

    LatentCodec codec;
    codec.patch_mean_.assign(mean.data(), mean.data() + p);
    for (int64_t l = 0; l < latent_channels; ++l) {
        // Eigen sorts ascending; take from the top and fix the sign so the
        // largest-magnitude component is positive.
        Eigen::VectorXd v = eig.eigenvectors().col(p - 1 - l);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        codec.basis_.insert(codec.basis_.end(), v.data(), v.data() + p);
        codec.latent_mean_.push_back(0.0);
        codec.latent_std_.push_back(std::sqrt(std::max(eig.eigenvalues()(p - 1 - l), 1e-12)));
    }
    // Stored at f32 so a saved and reloaded codec behaves bit-identically.
    for (auto* v : {&codec.patch_mean_, &codec.basis_, &codec.latent_mean_, &codec.latent_std_})
        for (auto& x : *v) x = static_cast<float>(x);
    return codec;
}

Tensor LatentCodec::encode(const ImageRGB& image) const {
    if (image.rank() != 3 || image.size(0) != 3) throw DimensionError("codec expects RGB images, got " + shape_str(image.shape()));
    const Tensor d = space_to_depth(image, kPatch);
    const int64_t p = patch_dim(), l_n = latent_channels(), sites = d.size(1) * d.size(2);
    const auto in = d.data();
    std::vector<float> out(static_cast<size_t>(l_n * sites));
    for (int64_t s = 0; s < sites; ++s)
        for (int64_t l = 0; l < l_n; ++l) {
            double acc = 0.0;
            for (int64_t k = 0; k < p; ++k)
                acc += basis_[static_cast<size_t>(l * p + k)] * (in[static_cast<size_t>(k * sites + s)] - patch_mean_[static_cast<size_t>(k)]);
            out[static_cast<size_t>(l * sites + s)] = static_cast<float>((acc - latent_mean_[static_cast<size_t>(l)]) / latent_std_[static_cast<size_t>(l)]);
        }
    return Tensor({l_n, d.size(1), d.size(2)}, std::move(out));
}

Tensor LatentCodec::decode(const Tensor& latent) const {
    const int64_t p = patch_dim(), l_n = latent_channels();
    if (latent.rank() != 3 || latent.size(0) != l_n)
        throw DimensionError("codec latent must be [" + std::to_string(l_n) + ",H,W], got " + shape_str(latent.shape()));
    const int64_t sites = latent.size(1) * latent.size(2);
    const auto in = latent.data();
    std::vector<float> out(static_cast<size_t>(p * sites));
    std::vector<double> z(static_cast<size_t>(l_n));
    for (int64_t s = 0; s < sites; ++s) {
        for (int64_t l = 0; l < l_n; ++l)
            z[static_cast<size_t>(l)] = in[static_cast<size_t>(l * sites + s)] * latent_std_[static_cast<size_t>(l)] + latent_mean_[static_cast<size_t>(l)];
        for (int64_t k = 0; k < p; ++k) {
            double acc = patch_mean_[static_cast<size_t>(k)];
            for (int64_t l = 0; l < l_n; ++l) acc += basis_[static_cast<size_t>(l * p + k)] * z[static_cast<size_t>(l)];
            out[static_cast<size_t>(k * sites + s)] = static_cast<float>(acc);
        }
    }
    return depth_to_space(Tensor({p, latent.size(1), latent.size(2)}, std::move(out)), kPatch);
}

ImageRGB LatentCodec::decode_image(const Tensor& latent) const {
    Tensor raw = decode(latent);
    for (auto& v : raw.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
    return raw;
}

void LatentCodec::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const int64_t p = patch_dim(), l = latent_channels();
    save_tensor(dir / "patch_mean.sgsw", to_tensor({p}, patch_mean_));
    save_tensor(dir / "basis.sgsw", to_tensor({l, p}, basis_));
    save_tensor(dir / "latent_mean.sgsw", to_tensor({l}, latent_mean_));
    save_tensor(dir / "latent_std.sgsw", to_tensor({l}, latent_std_));
}

LatentCodec LatentCodec::load(const std::filesystem::path& dir) {
    LatentCodec codec;
    const Tensor basis = load_tensor(dir / "basis.sgsw");
    if (basis.rank() != 2 || basis.size(1) != 3 * kPatch * kPatch) throw IoError("codec basis has wrong shape");
    const auto l = static_cast<size_t>(basis.size(0)), p = static_cast<size_t>(basis.size(1));
    codec.basis_ = from_tensor(basis, l * p, "basis");
    codec.patch_mean_ = from_tensor(load_tensor(dir / "patch_mean.sgsw"), p, "patch_mean");
    codec.latent_mean_ = from_tensor(load_tensor(dir / "latent_mean.sgsw"), l, "latent_mean");
    codec.latent_std_ = from_tensor(load_tensor(dir / "latent_std.sgsw"), l, "latent_std");
    return codec;
}

} // namespace wildsplat
