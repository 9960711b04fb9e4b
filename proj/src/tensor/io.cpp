// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/tensor/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace wildsplat {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
    if (!in) throw IoError("truncated tensor file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write("SGSW", 4);
    put_le<uint16_t>(out, kTensorFileVersion);
    put_le<uint16_t>(out, static_cast<uint16_t>(t.rank()));
    for (auto d : t.shape()) put_le<uint32_t>(out, static_cast<uint32_t>(d));
    for (float v : t.data()) put_le<float>(out, v);
    if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SGSW", 4) != 0) throw IoError("bad tensor file magic");
    const auto version = get_le<uint16_t>(in);
    if (version != kTensorFileVersion) throw IoError("unsupported tensor file version " + std::to_string(version));
    const auto rank = get_le<uint16_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<uint32_t>(in);
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = get_le<float>(in);
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_tensor(in);
}

} // namespace wildsplat
