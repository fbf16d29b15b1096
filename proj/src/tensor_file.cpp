#include "fsuda/tensor_file.hpp"

#include "fsuda/byte_io.hpp"

#include <zlib.h>

#include <stdexcept>

namespace fsuda {

std::uint32_t crc32_of(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string encode_tensor_file(const Tensor<float>& t) {
    std::string out = "FSUD";
    put_u32(out, kTensorFileVersion);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (Index e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (Index i = 0; i < t.size(); ++i) put_f32(out, t[i]);
    put_u32(out, crc32_of(out));
    return out;
}

Tensor<float> decode_tensor_file(const std::string& bytes, const std::string& what) {
    if (bytes.size() < 16) throw std::runtime_error(what + ": file too short");
    const std::string body = bytes.substr(0, bytes.size() - 4);
    ByteReader tail(bytes.substr(bytes.size() - 4), what);
    if (tail.u32() != crc32_of(body)) throw std::runtime_error(what + ": checksum mismatch");

    ByteReader in(body, what);
    if (in.take(4) != "FSUD") throw std::runtime_error(what + ": bad magic");
    if (const auto v = in.u32(); v != kTensorFileVersion)
        throw std::runtime_error(what + ": unsupported version " + std::to_string(v));
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw std::runtime_error(what + ": bad rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t e = in.u32();
        if (e == 0) throw std::runtime_error(what + ": zero extent");
        shape.push_back(e);
    }
    if (in.remaining() != static_cast<std::size_t>(shape_size(shape)) * 4)
        throw std::runtime_error(what + ": payload size does not match extents " + shape_string(shape));
    Tensor<float> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = in.f32();
    return t;
}

}  // namespace fsuda
