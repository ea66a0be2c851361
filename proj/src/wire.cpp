#include "tip/wire.hpp"

#include <algorithm>

#include "tip/error.hpp"

namespace tip::wire {

namespace {

constexpr std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

constexpr auto kCrcTable = make_crc_table();

}  // namespace

std::string_view packet_type_name(PacketType t) {
    switch (t) {
        case PacketType::DiscoveryAnnounce: return "DISCOVERY_ANNOUNCE";
        case PacketType::DiscoveryQuery: return "DISCOVERY_QUERY";
        case PacketType::IntentRequest: return "INTENT_REQUEST";
        case PacketType::IntentProposal: return "INTENT_PROPOSAL";
        case PacketType::ContractAccept: return "CONTRACT_ACCEPT";
        case PacketType::ContractSigned: return "CONTRACT_SIGNED";
        case PacketType::DataRequest: return "DATA_REQUEST";
        case PacketType::DataResponse: return "DATA_RESPONSE";
    }
    return "UNKNOWN";
}

PacketType packet_type_from_code(std::uint8_t code) {
    if (code == 0x05 || code > 0x08)
        throw Error(Errc::UnknownPacketType, "unknown packet type 0x" + to_hex(ByteView(&code, 1)));
    return static_cast<PacketType>(code);
}

HeaderBytes encode_header(const PacketHeader& h) {
    HeaderBytes b{};
    put_be16(b.data() + offset::kMagic, h.magic);
    b[offset::kVersion] = h.version;
    b[offset::kPacketType] = static_cast<std::uint8_t>(h.packet_type);
    std::copy(h.transaction_id.bytes.begin(), h.transaction_id.bytes.end(), b.begin() + offset::kTransactionId);
    put_be32(b.data() + offset::kPayloadLength, h.payload_length);
    put_be32(b.data() + offset::kCapabilityHash, h.capability_hash);
    put_be32(b.data() + offset::kSequence, h.sequence_number);
    put_be32(b.data() + offset::kFlags, h.flags);
    put_be64(b.data() + offset::kTimestamp, h.timestamp_us);
    put_be32(b.data() + offset::kTtl, h.ttl_ms);
    put_be32(b.data() + offset::kChecksum, h.checksum);
    std::copy(h.signature.begin(), h.signature.end(), b.begin() + offset::kSignature);
    return b;
}

PacketHeader decode_header(ByteView b) {
    if (b.size() < kHeaderSize) throw Error(Errc::TooShort, "packet shorter than 116-byte header");
    PacketHeader h;
    h.magic = get_be16(b.data() + offset::kMagic);
    if (h.magic != kMagic) throw Error(Errc::BadMagic, "bad magic number");
    h.version = b[offset::kVersion];
    if (h.version != kVersion) throw Error(Errc::UnsupportedVersion, "unsupported protocol version");
    h.packet_type = packet_type_from_code(b[offset::kPacketType]);
    std::copy_n(b.begin() + offset::kTransactionId, 16, h.transaction_id.bytes.begin());
    h.payload_length = get_be32(b.data() + offset::kPayloadLength);
    h.capability_hash = get_be32(b.data() + offset::kCapabilityHash);
    h.sequence_number = get_be32(b.data() + offset::kSequence);
    h.flags = get_be32(b.data() + offset::kFlags);
    h.timestamp_us = get_be64(b.data() + offset::kTimestamp);
    h.ttl_ms = get_be32(b.data() + offset::kTtl);
    h.checksum = get_be32(b.data() + offset::kChecksum);
    std::copy_n(b.begin() + offset::kSignature, 64, h.signature.begin());
    return h;
}

std::uint32_t crc32_update(std::uint32_t state, ByteView data) {
    for (auto byte : data) state = kCrcTable[(state ^ byte) & 0xff] ^ (state >> 8);
    return state;
}

std::uint32_t crc32(ByteView data) { return crc32_update(0xFFFFFFFFu, data) ^ 0xFFFFFFFFu; }

std::uint32_t capability_hash(std::string_view capability_id) {
    if (capability_id.empty()) throw Error(Errc::EmptyCapability, "capability id is empty");
    return crc32(as_bytes(capability_id));
}

Bytes TipPacket::serialize() const {
    auto hb = encode_header(header);
    Bytes out(kHeaderSize + payload.size());
    std::copy(hb.begin(), hb.end(), out.begin());
    std::copy(payload.begin(), payload.end(), out.begin() + kHeaderSize);
    return out;
}

HeaderBytes aad_header(const HeaderFields& fields, std::uint32_t payload_length) {
    PacketHeader h;
    h.packet_type = fields.packet_type;
    h.transaction_id = fields.transaction_id;
    h.payload_length = payload_length;
    h.capability_hash = fields.capability_hash;
    h.sequence_number = fields.sequence_number;
    h.flags = fields.flags;
    h.timestamp_us = fields.timestamp_us;
    h.ttl_ms = fields.ttl_ms;
    return encode_header(h);
}

Bytes signing_input(ByteView header, ByteView payload) {
    Bytes msg(offset::kSignature + payload.size());
    std::copy(header.begin(), header.begin() + offset::kSignature, msg.begin());
    std::fill_n(msg.begin() + offset::kChecksum, 4, 0);
    std::copy(payload.begin(), payload.end(), msg.begin() + offset::kSignature);
    return msg;
}

std::uint32_t packet_checksum(ByteView header, ByteView payload) {
    std::uint32_t state = 0xFFFFFFFFu;
    state = crc32_update(state, header.subspan(0, offset::kChecksum));
    state = crc32_update(state, header.subspan(offset::kSignature, kHeaderSize - offset::kSignature));
    state = crc32_update(state, payload);
    return state ^ 0xFFFFFFFFu;
}

TipPacket build_packet(const HeaderFields& fields, ByteView payload, const crypto::SigningKey& key,
                       std::size_t max_payload) {
    if (payload.size() > max_payload)
        throw Error(Errc::PayloadTooLarge, "payload of " + std::to_string(payload.size()) + " bytes exceeds limit");
    if (fields.flags & flags::kIsCompressed)
        throw Error(Errc::CompressionUnsupported, "IS_COMPRESSED is not supported");

    TipPacket p;
    p.header.packet_type = fields.packet_type;
    p.header.transaction_id = fields.transaction_id;
    p.header.payload_length = static_cast<std::uint32_t>(payload.size());
    p.header.capability_hash = fields.capability_hash;
    p.header.sequence_number = fields.sequence_number;
    p.header.flags = fields.flags;
    p.header.timestamp_us = fields.timestamp_us;
    p.header.ttl_ms = fields.ttl_ms;
    p.payload.assign(payload.begin(), payload.end());

    auto hb = encode_header(p.header);  // checksum and signature still zero
    p.header.signature = crypto::sign(key, signing_input(hb, payload));
    std::copy(p.header.signature.begin(), p.header.signature.end(), hb.begin() + offset::kSignature);
    p.header.checksum = packet_checksum(hb, payload);
    return p;
}

TipPacket validate_packet(ByteView raw, const crypto::PublicKey& sender, std::uint64_t now_us,
                          crypto::ReplayCache& replay_cache, const ValidateOptions& opts) {
    // 1-2: header extraction and magic (decode_header checks both, in order).
    PacketHeader h = decode_header(raw);
    auto header = raw.subspan(0, kHeaderSize);
    auto payload = raw.subspan(kHeaderSize);
    if (h.payload_length > opts.max_payload) throw Error(Errc::PayloadTooLarge, "declared payload too large");
    if (payload.size() < h.payload_length) throw Error(Errc::TooShort, "payload shorter than declared length");
    if (payload.size() > h.payload_length) throw Error(Errc::LengthMismatch, "trailing bytes after payload");

    // 3: checksum over 0..47 || 52..115 || payload.
    if (packet_checksum(header, payload) != h.checksum)
        throw Error(Errc::ChecksumMismatch, "checksum mismatch");

    // 4: signature over 0..51 (checksum zeroed) || payload.
    if (!crypto::verify(sender, signing_input(header, payload), h.signature))
        throw Error(Errc::BadSignature, "signature verification failed");

    if (h.flags & flags::kIsCompressed)
        throw Error(Errc::CompressionUnsupported, "IS_COMPRESSED is not supported");

    // 5: replay window.
    if (!replay_cache.check(h.timestamp_us, h.sequence_number, now_us))
        throw Error(Errc::ReplayDetected, "replayed or stale packet");

    std::uint64_t expiry = h.timestamp_us + static_cast<std::uint64_t>(h.ttl_ms) * 1000;
    if (expiry < h.timestamp_us) expiry = UINT64_MAX;
    if (now_us > expiry) throw Error(Errc::Expired, "packet TTL expired");

    return TipPacket{h, Bytes(payload.begin(), payload.end())};
}

Errc validate_verdict(ByteView raw, const crypto::PublicKey& sender, std::uint64_t now_us,
                      crypto::ReplayCache& replay_cache) {
    try {
        validate_packet(raw, sender, now_us, replay_cache);
        return Errc::Ok;
    } catch (const Error& e) {
        return e.code();
    }
}

}  // namespace tip::wire
