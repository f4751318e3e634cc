#pragma once

// Streaming FNV-1a (64-bit), used for checkpoint integrity and for cheap
// bit-level digests of parameter groups in tests.

#include <cstddef>
#include <cstdint>

namespace crvae {

struct Fnv1a64 {
    std::uint64_t state = 0xcbf29ce484222325ull;

    void update(const void* data, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ull;
        }
    }

    std::uint64_t digest() const { return state; }
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    Fnv1a64 h;
    h.update(data, len);
    return h.digest();
}

}  // namespace crvae
