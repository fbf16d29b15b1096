#ifndef FSUDA_BYTE_IO_HPP
#define FSUDA_BYTE_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace fsuda {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Sequential little-endian reader over a byte string.
class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error(what_ + ": truncated at byte " + std::to_string(pos_));
    }
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace fsuda

#endif  // FSUDA_BYTE_IO_HPP
