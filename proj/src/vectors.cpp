#include "tip/vectors.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tip/coap.hpp"
#include "tip/payload.hpp"
#include "tip/transport.hpp"

namespace tip::vectors {

namespace {

constexpr std::uint64_t kBaseTime = net::kSimEpochUs;

crypto::Seed fixed_seed(std::uint8_t start) {
    crypto::Seed s{};
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::uint8_t>(start + i);
    return s;
}

Uuid fixed_txid(std::uint8_t n) {
    Uuid u;
    for (std::size_t i = 0; i < 16; ++i) u.bytes[i] = static_cast<std::uint8_t>(n * 16 + i);
    u.bytes[6] = static_cast<std::uint8_t>((u.bytes[6] & 0x0f) | 0x40);
    u.bytes[8] = static_cast<std::uint8_t>((u.bytes[8] & 0x3f) | 0x80);
    return u;
}

void refresh_checksum(Bytes& frame) {
    ByteView v(frame);
    std::uint32_t crc = wire::packet_checksum(v.subspan(0, wire::kHeaderSize), v.subspan(wire::kHeaderSize));
    put_be32(frame.data() + wire::offset::kChecksum, crc);
}

}  // namespace

VectorSet build() {
    VectorSet set;
    auto id = crypto::NodeIdentity::from_seed(fixed_seed(0x01));
    auto other = crypto::NodeIdentity::from_seed(fixed_seed(0x41));
    set.signer = id.public_key();
    set.wrong_signer = other.public_key();
    set.validate_now_us = kBaseTime + 1'000'000;
    Rng coap_rng(0x5449);

    NodeRecord rec;
    rec.node_id = id.node_id;
    rec.signing_public = id.public_key();
    rec.addresses = {"udp://192.0.2.10:5683"};
    Capability fill{"machine:fluid:fill", DataSchema::U16, "1.0.0", 0.995, 10.0};
    rec.capabilities = {fill};
    rec.availability = 0.99;
    const std::uint32_t fill_hash = wire::capability_hash(fill.id);

    std::uint32_t seq = 1000;
    std::uint8_t n = 0;
    auto add = [&](std::string name, wire::PacketType type, const payload::Message& msg, std::uint32_t flags,
                   std::uint32_t cap_hash) {
        wire::HeaderFields f;
        f.packet_type = type;
        f.transaction_id = fixed_txid(n++);
        f.capability_hash = cap_hash;
        f.sequence_number = seq++;
        f.flags = flags;
        f.timestamp_us = kBaseTime + n * 1000;
        f.ttl_ms = 5000;
        Bytes payload = payload::encode_payload(msg, id.public_key());
        auto p = wire::build_packet(f, payload, id.key);
        GoldenVector v;
        v.name = std::move(name);
        v.frame = p.serialize();
        v.header = p.header;
        set.vectors.push_back(std::move(v));
    };

    add("announce", wire::PacketType::DiscoveryAnnounce,
        payload::DiscoveryAnnounce{rec.node_id, rec.capabilities, rec.addresses, rec.signing_public, {}, {}}, 0, 0);
    add("query", wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{std::string(fill.id)}, 0, fill_hash);
    {
        payload::IntentRequest r;
        r.capability_id = fill.id;
        r.desired_schema = DataSchema::F32;
        r.params = cbor::canonical_map({{"liquid", "water"}, {"volume_ml", 500}});
        r.constraints = {{"max_latency_ms", 100.0}, {"min_precision", 0.99}};
        r.weights = {{"w_func", 0.25}, {"w_cost", 0.25}, {"w_trust", 0.25}, {"w_avail", 0.25}};
        add("intent_request", wire::PacketType::IntentRequest, r, 0, fill_hash);
    }
    auto eph = crypto::X25519Keypair::from_secret(fixed_seed(0x81));
    {
        payload::IntentProposal p;
        p.capability = fill;
        p.measured_rtt_ms = 2.0;
        p.availability = 0.99;
        p.adapter_required = true;
        p.ephemeral = crypto::sign_ephemeral(id.key, fixed_txid(n), eph.public_key);
        add("intent_proposal", wire::PacketType::IntentProposal, p, 0, fill_hash);
    }
    Bytes body = cbor::encode(cbor::Value(cbor::canonical_map({{0, "contract body"}})));
    add("contract_accept", wire::PacketType::ContractAccept,
        payload::ContractMessage{body, crypto::sign(id.key, body), crypto::sign_ephemeral(id.key, fixed_txid(n), eph.public_key), {}},
        wire::flags::kRequiresAck, fill_hash);
    add("contract_signed", wire::PacketType::ContractSigned,
        payload::ContractMessage{body, crypto::sign(id.key, body), {}, {}}, wire::flags::kRequiresAck, fill_hash);
    add("data_request", wire::PacketType::DataRequest,
        payload::DataRequest{fixed_txid(0x20), cbor::Value(cbor::canonical_map({{"volume_ml", 500}}))}, 0, fill_hash);
    add("data_response", wire::PacketType::DataResponse,
        payload::DataResponse{fixed_txid(0x20), cbor::Value(2500u), DataSchema::U16}, wire::flags::kHasAdapter,
        fill_hash);
    add("ack", wire::PacketType::DataResponse, payload::Ack{}, 0, 0);

    // Encrypted DATA_RESPONSE: fixed ephemeral pair, sealed under the
    // initiator->responder key of a session bound to the transaction id.
    {
        auto a = crypto::X25519Keypair::from_secret(fixed_seed(0x91));
        auto b = crypto::X25519Keypair::from_secret(fixed_seed(0xA1));
        wire::HeaderFields f;
        f.packet_type = wire::PacketType::DataResponse;
        f.transaction_id = fixed_txid(n++);
        f.capability_hash = fill_hash;
        f.sequence_number = seq++;
        f.flags = wire::flags::kIsEncrypted | wire::flags::kHasAdapter;
        f.timestamp_us = kBaseTime + n * 1000;
        f.ttl_ms = 5000;
        auto sender = crypto::make_session(crypto::Role::Initiator, a, b.public_key, f.transaction_id);
        set.session = crypto::make_session(crypto::Role::Responder, b, a.public_key, f.transaction_id);
        Bytes plain = payload::encode_payload(payload::DataResponse{fixed_txid(0x20), cbor::Value(2500u), DataSchema::U16},
                                              id.public_key());
        const auto sealed_len = static_cast<std::uint32_t>(plain.size() + crypto::kSealOverhead);
        auto aad = wire::aad_header(f, sealed_len);
        Bytes sealed = crypto::seal(sender, plain, aad);
        auto p = wire::build_packet(f, sealed, id.key);
        GoldenVector v;
        v.name = "data_response_encrypted";
        v.frame = p.serialize();
        v.header = p.header;
        v.encrypted = true;
        set.vectors.push_back(std::move(v));
    }

    // Broken variants derived from the data_request vector.
    const GoldenVector base = set.vectors[6];
    auto variant = [&](std::string name, Bytes frame, Errc expected, bool decodes) {
        GoldenVector v;
        v.name = std::move(name);
        v.frame = std::move(frame);
        v.expected = expected;
        v.header_decodes = decodes;
        if (decodes) v.header = wire::decode_header(v.frame);
        set.vectors.push_back(std::move(v));
    };
    variant("truncated", Bytes(base.frame.begin(), base.frame.begin() + 100), Errc::TooShort, false);
    {
        Bytes f = base.frame;
        f[0] = 0x00;
        variant("bad_magic", f, Errc::BadMagic, false);
    }
    {
        Bytes f = base.frame;
        f[wire::offset::kVersion] = 0x02;
        variant("bad_version", f, Errc::UnsupportedVersion, false);
    }
    {
        Bytes f = base.frame;
        f[wire::offset::kPacketType] = 0x05;
        variant("reserved_type", f, Errc::UnknownPacketType, false);
    }
    {
        Bytes f = base.frame;
        f.back() ^= 0x01;
        variant("bad_checksum", f, Errc::ChecksumMismatch, true);
    }
    {
        Bytes f = base.frame;
        f[wire::offset::kSignature + 5] ^= 0x80;
        refresh_checksum(f);
        variant("bad_signature", f, Errc::BadSignature, true);
    }
    {
        Bytes f = base.frame;
        f.push_back(0x00);
        variant("trailing_bytes", f, Errc::LengthMismatch, true);
    }
    auto rebuilt = [&](std::string name, std::uint64_t timestamp, std::uint32_t ttl_ms, Errc expected) {
        wire::HeaderFields f;
        f.packet_type = base.header.packet_type;
        f.transaction_id = base.header.transaction_id;
        f.capability_hash = base.header.capability_hash;
        f.sequence_number = seq++;
        f.timestamp_us = timestamp;
        f.ttl_ms = ttl_ms;
        ByteView bv(base.frame);
        auto p = wire::build_packet(f, bv.subspan(wire::kHeaderSize), id.key);
        variant(std::move(name), p.serialize(), expected, true);
    };
    rebuilt("stale", set.validate_now_us - 60'000'000, 120'000, Errc::ReplayDetected);
    rebuilt("expired", set.validate_now_us - 5'000, 1, Errc::Expired);

    for (auto& v : set.vectors) v.coap = coap::wrap(v.frame, coap_rng);
    return set;
}

std::string VectorSet::manifest_json() const {
    using nlohmann::ordered_json;
    ordered_json m;
    m["magic"] = "5449";
    m["version"] = wire::kVersion;
    m["header_size"] = wire::kHeaderSize;
    m["signer_public_key"] = to_hex(signer);
    m["wrong_public_key"] = to_hex(wrong_signer);
    m["validate_now_us"] = validate_now_us;
    ordered_json codes = ordered_json::object();
    for (int c = 0; c <= 9; ++c) codes[std::string(errc_name(static_cast<Errc>(c)))] = c;
    for (Errc c : {Errc::NotCoap, Errc::WrongPath, Errc::WrongContentFormat, Errc::NoPayload})
        codes[std::string(errc_name(c))] = static_cast<int>(c);
    m["error_codes"] = codes;
    ordered_json list = ordered_json::array();
    for (const auto& v : vectors) {
        ordered_json j;
        j["name"] = v.name;
        j["file"] = v.name + ".bin";
        j["coap_file"] = v.name + ".coap";
        j["size"] = v.frame.size();
        j["expected"] = std::string(errc_name(v.expected));
        j["expected_code"] = static_cast<int>(v.expected);
        j["encrypted"] = v.encrypted;
        if (v.header_decodes) {
            const auto& h = v.header;
            j["header"] = {{"magic", "5449"},
                           {"version", h.version},
                           {"packet_type", static_cast<int>(h.packet_type)},
                           {"transaction_id", h.transaction_id.hex()},
                           {"payload_length", h.payload_length},
                           {"capability_hash", h.capability_hash},
                           {"sequence_number", h.sequence_number},
                           {"flags", h.flags},
                           {"timestamp_us", h.timestamp_us},
                           {"ttl_ms", h.ttl_ms},
                           {"checksum", h.checksum},
                           {"signature", to_hex(h.signature)}};
        }
        list.push_back(j);
    }
    m["vectors"] = list;
    return m.dump(2) + "\n";
}

void write(const VectorSet& set, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + dir + ": " + ec.message());
    auto put = [&](const std::string& name, ByteView bytes) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, "cannot write " + (fs::path(dir) / name).string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(Errc::IoError, "write failed for " + name);
    };
    for (const auto& v : set.vectors) {
        put(v.name + ".bin", v.frame);
        put(v.name + ".coap", v.coap);
    }
    put("manifest.json", as_bytes(set.manifest_json()));
}

}  // namespace tip::vectors
