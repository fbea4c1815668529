#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

namespace tosgp {

/// Incremental 64-bit FNV-1a. Used for content fingerprints and archive
/// checksums, not for anything security related.
class Fnv1a64 {
public:
    Fnv1a64& bytes(const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    Fnv1a64& text(std::string_view s) { return bytes(s.data(), s.size()); }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    Fnv1a64& value(const T& v) {
        return bytes(&v, sizeof(T));
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    Fnv1a64& values(std::span<const T> v) {
        value(v.size());
        return bytes(v.data(), v.size_bytes());
    }

    [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

    [[nodiscard]] std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace tosgp
