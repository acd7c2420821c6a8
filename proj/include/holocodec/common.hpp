#ifndef HOLOCODEC_COMMON_HPP
#define HOLOCODEC_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace holocodec {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Error taxonomy. Every failure mode surfaces as one of these so the CLI can
// map them onto stable exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct CodingError : Error {
    using Error::Error;
};
struct CorruptStreamError : Error {
    using Error::Error;
};
struct RangeError : Error {
    using Error::Error;
};
struct SequencingError : Error {
    using Error::Error;
};
struct RegistryMissError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

using Rng = std::mt19937_64;

// Wraps an angle onto (-pi, pi].
inline double wrap_phase(double x) {
    double y = std::remainder(x, kTwoPi);
    if (y <= -kPi) y += kTwoPi;
    return y;
}

inline bool is_pow2(uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

inline int ilog2(uint64_t x) {
    int n = 0;
    while (x > 1) {
        x >>= 1;
        ++n;
    }
    return n;
}

// --- little-endian serialization helpers ---

inline void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Bounds-checked reader over a byte buffer. Throws CorruptStreamError with the
// offending offset instead of reading past the end.
class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& buf) : data_(buf.data()), size_(buf.size()) {}

    size_t pos() const { return pos_; }
    size_t remaining() const { return size_ - pos_; }

    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void bytes(uint8_t* dst, size_t n) {
        need(n);
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }
    void skip(size_t n) {
        need(n);
        pos_ += n;
    }

private:
    void need(size_t n) const {
        if (size_ - pos_ < n)
            throw CorruptStreamError("truncated stream at byte offset " + std::to_string(pos_));
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

inline uint32_t crc32_of(const uint8_t* data, size_t size) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt chunks; our buffers are far smaller than 4 GiB but chunk anyway.
    while (size > 0) {
        uInt n = size > 0x40000000u ? 0x40000000u : static_cast<uInt>(size);
        c = ::crc32(c, data, n);
        data += n;
        size -= n;
    }
    return static_cast<uint32_t>(c);
}

inline uint32_t crc32_of(const std::vector<uint8_t>& buf) { return crc32_of(buf.data(), buf.size()); }

// Worker cap shared by the parallel kernels. 0 means "hardware default".
inline int& max_threads() {
    static int n = 0;
    return n;
}

}  // namespace holocodec

#endif
