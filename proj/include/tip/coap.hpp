#pragma once

// Minimal CoAP (RFC 7252) framing: enough to carry TIP frames as the payload
// of a confirmable POST to /tip with Content-Format 42. No blockwise,
// observe or CoAP-level retransmission.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tip/bytes.hpp"
#include "tip/ids.hpp"

namespace tip::coap {

enum class Type : std::uint8_t { Confirmable = 0, NonConfirmable = 1, Acknowledgement = 2, Reset = 3 };

inline constexpr std::uint8_t kCodePost = 0x02;     // 0.02
inline constexpr std::uint8_t kCodeContent = 0x45;  // 2.05
inline constexpr std::uint16_t kOptionUriPath = 11;
inline constexpr std::uint16_t kOptionContentFormat = 12;
inline constexpr std::uint16_t kOctetStream = 42;
inline constexpr std::uint8_t kPayloadMarker = 0xFF;

struct Option {
    std::uint16_t number = 0;
    Bytes value;
    bool operator==(const Option&) const = default;
};

struct Message {
    std::uint8_t version = 1;
    Type type = Type::Confirmable;
    std::uint8_t code = kCodePost;
    std::uint16_t message_id = 0;
    Bytes token;                  // 0..8 bytes
    std::vector<Option> options;  // encoded in ascending number order
    Bytes payload;

    std::optional<Bytes> option(std::uint16_t number) const;
    bool operator==(const Message&) const = default;
};

/// Options are sorted (stable) by number and delta-encoded.
Bytes encode(const Message& m);
/// Throws Error(Errc::NotCoap) on framing errors.
Message decode(ByteView datagram);

Bytes encode_uint_option(std::uint32_t v);
std::uint32_t decode_uint_option(ByteView v);

/// CON POST /tip, Content-Format 42, random message id and 4-byte token.
Bytes wrap(ByteView tip_packet, Rng& rng);
/// Errors: NotCoap, WrongPath, WrongContentFormat, NoPayload.
Bytes unwrap(ByteView datagram);

}  // namespace tip::coap
