#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <string>

#include "tip/bytes.hpp"

namespace tip {

/// Deterministic RNG used everywhere randomness must be reproducible from a
/// seed (simulation, vectors, tests). Conversions to doubles are done by hand
/// so results do not depend on the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
    void fill(std::uint8_t* out, std::size_t n) {
        for (std::size_t i = 0; i < n; i += 8) {
            std::uint64_t v = next();
            for (std::size_t j = 0; j < 8 && i + j < n; ++j) out[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
        }
    }
    template <std::size_t N>
    std::array<std::uint8_t, N> bytes() {
        std::array<std::uint8_t, N> a{};
        fill(a.data(), N);
        return a;
    }

private:
    std::mt19937_64 engine_;
};

/// 256-bit identifier interpreted as a big-endian unsigned integer. Used for
/// node ids, DHT keys and XOR distances.
struct Key256 {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Key256&) const = default;

    Key256 operator^(const Key256& o) const {
        Key256 r;
        for (std::size_t i = 0; i < 32; ++i) r.bytes[i] = bytes[i] ^ o.bytes[i];
        return r;
    }
    bool is_zero() const {
        for (auto b : bytes)
            if (b) return false;
        return true;
    }
    /// Index of the highest set bit (255 = most significant), -1 for zero.
    int highest_bit() const {
        for (std::size_t i = 0; i < 32; ++i) {
            if (bytes[i]) {
                int top = 7;
                while (!(bytes[i] & (1u << top))) --top;
                return static_cast<int>((31 - i) * 8) + top;
            }
        }
        return -1;
    }
    bool bit(int index) const { return (bytes[31 - index / 8] >> (index % 8)) & 1u; }
    void set_bit(int index) { bytes[31 - index / 8] |= static_cast<std::uint8_t>(1u << (index % 8)); }

    static Key256 from(ByteView b);
    static Key256 from_uint(std::uint64_t v);
    static Key256 random(Rng& rng) {
        Key256 k;
        rng.fill(k.bytes.data(), 32);
        return k;
    }
    std::string hex() const { return to_hex(bytes); }
};

using NodeId = Key256;

struct KeyHash {
    std::size_t operator()(const Key256& k) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | k.bytes[i];
        return h;
    }
};

/// 128-bit transaction id (UUID v4 layout).
struct Uuid {
    std::array<std::uint8_t, 16> bytes{};

    auto operator<=>(const Uuid&) const = default;

    static Uuid v4(Rng& rng) {
        Uuid u;
        rng.fill(u.bytes.data(), 16);
        u.bytes[6] = static_cast<std::uint8_t>((u.bytes[6] & 0x0f) | 0x40);
        u.bytes[8] = static_cast<std::uint8_t>((u.bytes[8] & 0x3f) | 0x80);
        return u;
    }
    std::string hex() const { return to_hex(bytes); }
    std::string str() const;
};

struct UuidHash {
    std::size_t operator()(const Uuid& u) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | u.bytes[i];
        return h ^ u.bytes[15];
    }
};

}  // namespace tip
