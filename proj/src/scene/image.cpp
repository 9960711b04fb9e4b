// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/scene/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace wildsplat {

namespace {

void check_size(const Tensor& t, int64_t channels, int64_t height, int64_t width, const char* what) {
    if (!t.defined() || t.rank() != 3 || t.size(0) != channels)
        throw DimensionError(std::string(what) + " must have shape [" + std::to_string(channels) + ",H,W]");
    if ((height > 0 && t.size(1) != height) || (width > 0 && t.size(2) != width))
        throw DimensionError(std::string(what) + " size " + shape_str(t.shape()) + " does not match camera");
}

uint8_t to_byte(float v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

std::vector<uint8_t> read_png(const std::filesystem::path& path, uint32_t format, int channels, int64_t& h,
                              int64_t& w) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    img.format = format;
    std::vector<uint8_t> buf(static_cast<size_t>(img.width) * img.height * channels);
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    h = img.height;
    w = img.width;
    return buf;
}

void write_png(const std::filesystem::path& path, uint32_t format, const std::vector<uint8_t>& buf, int64_t h,
               int64_t w) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = format;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
}

} // namespace

void validate_image(const ImageRGB& image, int64_t height, int64_t width) {
    check_size(image, 3, height, width, "image");
    const auto d = image.data();
    for (size_t i = 0; i < d.size(); ++i)
        if (!std::isfinite(d[i]) || d[i] < 0.0f || d[i] > 1.0f)
            throw DomainError("image value out of [0,1] at index " + std::to_string(i));
}

void validate_mask(const Mask& mask, int64_t height, int64_t width) {
    check_size(mask, 1, height, width, "mask");
    const auto d = mask.data();
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] != 0.0f && d[i] != 1.0f) throw DomainError("mask value not binary at index " + std::to_string(i));
}

ImageRGB read_png_rgb(const std::filesystem::path& path) {
    int64_t h = 0, w = 0;
    const auto buf = read_png(path, PNG_FORMAT_RGB, 3, h, w);
    Tensor out({3, h, w});
    auto d = out.mutable_data();
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                d[(c * h + y) * w + x] = buf[static_cast<size_t>((y * w + x) * 3 + c)] / 255.0f;
    return out;
}

void write_png_rgb(const std::filesystem::path& path, const ImageRGB& image) {
    check_size(image, 3, 0, 0, "image");
    const int64_t h = image.size(1), w = image.size(2);
    std::vector<uint8_t> buf(static_cast<size_t>(h * w * 3));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) buf[static_cast<size_t>((y * w + x) * 3 + c)] = to_byte(image[(c * h + y) * w + x]);
    write_png(path, PNG_FORMAT_RGB, buf, h, w);
}

Mask read_mask_png(const std::filesystem::path& path) {
    int64_t h = 0, w = 0;
    const auto buf = read_png(path, PNG_FORMAT_GRAY, 1, h, w);
    Tensor out({1, h, w});
    auto d = out.mutable_data();
    for (size_t i = 0; i < buf.size(); ++i) d[i] = buf[i] != 0 ? 1.0f : 0.0f;
    return out;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    validate_mask(mask);
    std::vector<uint8_t> buf(static_cast<size_t>(mask.numel()));
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data()[i] != 0.0f ? 255 : 0;
    write_png(path, PNG_FORMAT_GRAY, buf, mask.size(1), mask.size(2));
}

ImageRGB quantize8(const ImageRGB& image) {
    Tensor out(image.shape());
    auto d = out.mutable_data();
    for (int64_t i = 0; i < image.numel(); ++i) d[i] = to_byte(image[i]) / 255.0f;
    return out;
}

} // namespace wildsplat
