// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <filesystem>
#include <iosfwd>

namespace wildsplat {

// Binary tensor file:
//   bytes 0..3   magic "SGSW"
//   u16          format version (1)
//   u16          rank
//   u32 x rank   dimensions
//   f32 x numel  payload, row-major
// All integers and floats are little-endian.
inline constexpr uint16_t kTensorFileVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

} // namespace wildsplat
