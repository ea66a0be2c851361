#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tip/bytes.hpp"
#include "tip/crypto.hpp"
#include "tip/error.hpp"
#include "tip/ids.hpp"

namespace tip::wire {

inline constexpr std::uint16_t kMagic = 0x5449;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 116;
inline constexpr std::size_t kDefaultMaxPayload = 64 * 1024;

// Table layout: offset / size of every header field.
namespace offset {
inline constexpr std::size_t kMagic = 0;
inline constexpr std::size_t kVersion = 2;
inline constexpr std::size_t kPacketType = 3;
inline constexpr std::size_t kTransactionId = 4;
inline constexpr std::size_t kPayloadLength = 20;
inline constexpr std::size_t kCapabilityHash = 24;
inline constexpr std::size_t kSequence = 28;
inline constexpr std::size_t kFlags = 32;
inline constexpr std::size_t kTimestamp = 36;
inline constexpr std::size_t kTtl = 44;
inline constexpr std::size_t kChecksum = 48;
inline constexpr std::size_t kSignature = 52;
}  // namespace offset

enum class PacketType : std::uint8_t {
    DiscoveryAnnounce = 0x00,
    DiscoveryQuery = 0x01,
    IntentRequest = 0x02,
    IntentProposal = 0x03,
    ContractAccept = 0x04,
    // 0x05 is reserved and rejected on decode.
    ContractSigned = 0x06,
    DataRequest = 0x07,
    DataResponse = 0x08,
};

std::string_view packet_type_name(PacketType t);
/// Throws Error(Errc::UnknownPacketType) for 0x05 and codes above 0x08.
PacketType packet_type_from_code(std::uint8_t code);

namespace flags {
inline constexpr std::uint32_t kRequiresAck = 0x01;
inline constexpr std::uint32_t kIsCompressed = 0x02;
inline constexpr std::uint32_t kIsEncrypted = 0x04;
inline constexpr std::uint32_t kHasAdapter = 0x08;
inline constexpr std::uint32_t kIsStreaming = 0x40;
}  // namespace flags

struct PacketHeader {
    std::uint16_t magic = kMagic;
    std::uint8_t version = kVersion;
    PacketType packet_type = PacketType::DiscoveryAnnounce;
    Uuid transaction_id;
    std::uint32_t payload_length = 0;
    std::uint32_t capability_hash = 0;
    std::uint32_t sequence_number = 0;
    std::uint32_t flags = 0;
    std::uint64_t timestamp_us = 0;
    std::uint32_t ttl_ms = 0;
    std::uint32_t checksum = 0;
    crypto::Signature signature{};

    bool operator==(const PacketHeader&) const = default;
};

using HeaderBytes = std::array<std::uint8_t, kHeaderSize>;

HeaderBytes encode_header(const PacketHeader& h);
/// Errors: TooShort, BadMagic, UnsupportedVersion, UnknownPacketType.
PacketHeader decode_header(ByteView b);

/// CRC-32/IEEE (reflected 0xEDB88320, init and final xor 0xFFFFFFFF).
std::uint32_t crc32(ByteView data);
std::uint32_t crc32_update(std::uint32_t state, ByteView data);  // state starts at 0xFFFFFFFF

/// CRC-32 of the UTF-8 capability id. Throws EmptyCapability.
std::uint32_t capability_hash(std::string_view capability_id);

struct TipPacket {
    PacketHeader header;
    Bytes payload;

    Bytes serialize() const;
};

/// Caller-chosen header fields for build_packet.
struct HeaderFields {
    PacketType packet_type = PacketType::DiscoveryAnnounce;
    Uuid transaction_id;
    std::uint32_t capability_hash = 0;
    std::uint32_t sequence_number = 0;
    std::uint32_t flags = 0;
    std::uint64_t timestamp_us = 0;
    std::uint32_t ttl_ms = 5000;
};

/// The header as it is bound into AEAD associated data: payload_length set,
/// checksum and signature zeroed.
HeaderBytes aad_header(const HeaderFields& fields, std::uint32_t payload_length);

/// The bytes covered by the signature: header bytes 0..51 with the checksum
/// field zeroed, followed by the payload.
Bytes signing_input(ByteView header, ByteView payload);
/// CRC over header bytes 0..47, 52..115 and the payload.
std::uint32_t packet_checksum(ByteView header, ByteView payload);

/// Sign with the checksum zeroed, then checksum over everything except the
/// checksum field. Throws PayloadTooLarge or CompressionUnsupported.
TipPacket build_packet(const HeaderFields& fields, ByteView payload, const crypto::SigningKey& key,
                       std::size_t max_payload = kDefaultMaxPayload);

struct ValidateOptions {
    std::size_t max_payload = kDefaultMaxPayload;
};

/// Header extraction, magic, checksum, signature, replay, expiry; first
/// failure wins. Throws the matching Errc.
TipPacket validate_packet(ByteView raw, const crypto::PublicKey& sender, std::uint64_t now_us,
                          crypto::ReplayCache& replay_cache, const ValidateOptions& opts = {});

/// Validation verdict without exceptions (for interop tooling).
Errc validate_verdict(ByteView raw, const crypto::PublicKey& sender, std::uint64_t now_us,
                      crypto::ReplayCache& replay_cache);

}  // namespace tip::wire
