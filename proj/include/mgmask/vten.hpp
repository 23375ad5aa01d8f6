#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgmask/tensor.hpp"

namespace mgm {

// VTEN tensor container: "VTEN" magic, u32 LE version (=1), u32 LE ndim,
// ndim u32 LE extents, then product(extents) f32 LE values in row-major
// order. No padding, no trailing bytes. Values are widened to f64 on read
// and narrowed to f32 on write.

std::vector<std::uint8_t> encode_vten(const Tensor& t);
Tensor decode_vten(const std::vector<std::uint8_t>& bytes);

Tensor read_vten(const std::string& path);
void write_vten(const Tensor& t, const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mgm
