#include "tip/bytes.hpp"

#include "tip/error.hpp"

namespace tip {

std::string to_hex(ByteView data) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

namespace {
int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
    while (!hex.empty() && (hex.back() == '\n' || hex.back() == '\r' || hex.back() == ' '))
        hex.remove_suffix(1);
    if (hex.size() % 2 != 0) throw Error(Errc::ConfigError, "hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error(Errc::ConfigError, "invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> array_from_hex(std::string_view hex) {
    Bytes b = from_hex(hex);
    if (b.size() != N) throw Error(Errc::ConfigError, "hex value has wrong length");
    std::array<std::uint8_t, N> out{};
    std::copy(b.begin(), b.end(), out.begin());
    return out;
}

template std::array<std::uint8_t, 16> array_from_hex<16>(std::string_view);
template std::array<std::uint8_t, 32> array_from_hex<32>(std::string_view);
template std::array<std::uint8_t, 64> array_from_hex<64>(std::string_view);

void append(Bytes& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

}  // namespace tip

#include "tip/ids.hpp"

namespace tip {

Key256 Key256::from(ByteView b) {
    if (b.size() != 32) throw Error(Errc::SchemaMismatch, "256-bit key must be 32 bytes");
    Key256 k;
    std::copy(b.begin(), b.end(), k.bytes.begin());
    return k;
}

Key256 Key256::from_uint(std::uint64_t v) {
    Key256 k;
    put_be64(k.bytes.data() + 24, v);
    return k;
}

std::string Uuid::str() const {
    std::string h = hex();
    return h.substr(0, 8) + "-" + h.substr(8, 4) + "-" + h.substr(12, 4) + "-" + h.substr(16, 4) + "-" +
           h.substr(20);
}

}  // namespace tip
