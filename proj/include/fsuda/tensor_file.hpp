#ifndef FSUDA_TENSOR_FILE_HPP
#define FSUDA_TENSOR_FILE_HPP

#include "fsuda/tensor.hpp"

#include <cstdint>
#include <string>

namespace fsuda {

// Layout: "FSUD", u32 version, u32 rank, u32 extents, float32 values, then a
// CRC32 of every preceding byte. Little-endian throughout.
inline constexpr std::uint32_t kTensorFileVersion = 1;

std::uint32_t crc32_of(const std::string& bytes);

std::string encode_tensor_file(const Tensor<float>& t);
/// Throws with `what` in the message on bad magic, version, truncation or checksum.
Tensor<float> decode_tensor_file(const std::string& bytes, const std::string& what);

}  // namespace fsuda

#endif  // FSUDA_TENSOR_FILE_HPP
