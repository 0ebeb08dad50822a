#pragma once

#include <iosfwd>
#include <string>

#include "vrl/tensor.hpp"

namespace vrl {

// Binary tensor format VRT1:
//   magic "VRT1", u32 LE version (=1), u8 dtype (0=f32, 1=f64), u8 rank,
//   rank x u64 LE dims, raw little-endian data.
inline constexpr uint32_t kVrt1Version = 1;

template <typename T>
void write_vrt1(std::ostream& os, const TensorT<T>& t);

// Throws std::runtime_error on bad magic, version, or dtype mismatch with T.
template <typename T>
TensorT<T> read_vrt1(std::istream& is);

// 0 = f32, 1 = f64; leaves the stream positioned where it was.
uint8_t peek_vrt1_dtype(std::istream& is);

template <typename T>
void write_vrt1_file(const std::string& path, const TensorT<T>& t);

template <typename T>
TensorT<T> read_vrt1_file(const std::string& path);

}  // namespace vrl
