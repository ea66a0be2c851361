#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "oracles.hpp"
#include "json.hpp"
#include "tip/coap.hpp"
#include "tip/vectors.hpp"

using namespace tip;

namespace {

const std::uint64_t kNow = net::kSimEpochUs + 10'000'000;

wire::PacketHeader random_header(Rng& rng) {
    const std::uint8_t types[] = {0, 1, 2, 3, 4, 6, 7, 8};
    wire::PacketHeader h;
    h.packet_type = static_cast<wire::PacketType>(types[rng.below(8)]);
    h.transaction_id = Uuid::v4(rng);
    h.payload_length = static_cast<std::uint32_t>(rng.next());
    h.capability_hash = static_cast<std::uint32_t>(rng.next());
    h.sequence_number = static_cast<std::uint32_t>(rng.next());
    h.flags = static_cast<std::uint32_t>(rng.next());
    h.timestamp_us = rng.next();
    h.ttl_ms = static_cast<std::uint32_t>(rng.next());
    h.checksum = static_cast<std::uint32_t>(rng.next());
    rng.fill(h.signature.data(), h.signature.size());
    return h;
}

struct Fixture {
    crypto::NodeIdentity id = crypto::NodeIdentity::from_seed(crypto::Seed{1, 2, 3});
    crypto::NodeIdentity other = crypto::NodeIdentity::from_seed(crypto::Seed{9, 9, 9});

    wire::HeaderFields fields(std::uint32_t seq = 7) const {
        wire::HeaderFields f;
        f.packet_type = wire::PacketType::DataRequest;
        f.transaction_id.bytes[0] = 0xAB;
        f.sequence_number = seq;
        f.timestamp_us = kNow;
        f.ttl_ms = 5000;
        return f;
    }
    Bytes frame(const wire::HeaderFields& f, const Bytes& payload = Bytes{0xA1, 0x00, 0x01}) const {
        return wire::build_packet(f, payload, id.key).serialize();
    }
    Errc verdict(const Bytes& raw, std::uint64_t now = kNow) const {
        crypto::ReplayCache cache;
        return wire::validate_verdict(raw, id.public_key(), now, cache);
    }
};

void refresh_checksum(Bytes& frame) {
    ByteView v(frame);
    put_be32(frame.data() + wire::offset::kChecksum,
             wire::packet_checksum(v.subspan(0, wire::kHeaderSize), v.subspan(wire::kHeaderSize)));
}

}  // namespace

TEST_CASE("header roundtrip keeps every field at its fixed offset") {
    Rng rng(2024);
    for (int i = 0; i < 10'000; ++i) {
        auto h = random_header(rng);
        auto b = wire::encode_header(h);
        REQUIRE(b.size() == 116);
        REQUIRE(oracle::layout_matches(b.data(), h));
        REQUIRE(wire::decode_header(b) == h);
    }
}

TEST_CASE("decode rejects short, foreign and unknown headers") {
    wire::PacketHeader h;
    auto b = wire::encode_header(h);
    Bytes full(b.begin(), b.end());
    CHECK_THROWS_WITH_AS(wire::decode_header(ByteView(full).subspan(0, 115)), doctest::Contains(""), Error);
    auto code = [](ByteView v) {
        try {
            wire::decode_header(v);
            return Errc::Ok;
        } catch (const Error& e) {
            return e.code();
        }
    };
    CHECK(code(ByteView(full).subspan(0, 115)) == Errc::TooShort);
    CHECK(code(Bytes{}) == Errc::TooShort);
    Bytes m = full;
    m[1] = 0x48;
    CHECK(code(m) == Errc::BadMagic);
    m = full;
    m[2] = 2;
    CHECK(code(m) == Errc::UnsupportedVersion);
    for (int t : {5, 9, 0x30, 0xFF}) {
        m = full;
        m[3] = static_cast<std::uint8_t>(t);
        CHECK(code(m) == Errc::UnknownPacketType);
    }
    for (int t : {0, 1, 2, 3, 4, 6, 7, 8}) {
        m = full;
        m[3] = static_cast<std::uint8_t>(t);
        CHECK(code(m) == Errc::Ok);
    }
}

TEST_CASE("crc32 agrees with zlib") {
    Rng rng(5);
    CHECK(wire::crc32(as_bytes(std::string("123456789"))) == 0xCBF43926u);
    for (int i = 0; i < 500; ++i) {
        Bytes b(rng.below(2000));
        rng.fill(b.data(), b.size());
        REQUIRE(wire::crc32(b) == oracle::zlib_crc32(b));
        // incremental form over an arbitrary split
        std::size_t cut = b.empty() ? 0 : rng.below(b.size());
        ByteView v(b);
        auto st = wire::crc32_update(0xFFFFFFFFu, v.subspan(0, cut));
        st = wire::crc32_update(st, v.subspan(cut));
        REQUIRE((st ^ 0xFFFFFFFFu) == oracle::zlib_crc32(b));
    }
}

TEST_CASE("capability hash is the CRC32 of the id") {
    for (std::string id : {"machine:fluid:fill", "machine:capping:mechanical", "x"})
        CHECK(wire::capability_hash(id) == oracle::zlib_crc32(as_bytes(id)));
}

TEST_CASE("built packets validate and every single-bit flip is rejected") {
    Fixture fx;
    Rng rng(77);
    for (int p = 0; p < 200; ++p) {
        auto f = fx.fields(static_cast<std::uint32_t>(rng.next()));
        f.packet_type = static_cast<wire::PacketType>(std::array<int, 8>{0, 1, 2, 3, 4, 6, 7, 8}[rng.below(8)]);
        f.capability_hash = static_cast<std::uint32_t>(rng.next());
        f.flags = rng.below(2) ? wire::flags::kRequiresAck : 0;
        Bytes payload(rng.below(64));
        rng.fill(payload.data(), payload.size());
        auto raw = fx.frame(f, payload);
        REQUIRE(fx.verdict(raw) == Errc::Ok);
        for (std::size_t bit = 0; bit < raw.size() * 8; ++bit) {
            Bytes m = raw;
            m[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            REQUIRE_MESSAGE(fx.verdict(m) != Errc::Ok, "packet " << p << " bit " << bit);
        }
    }
}

TEST_CASE("validation reports the first failing stage") {
    Fixture fx;
    auto f = fx.fields();
    Bytes good = fx.frame(f);
    REQUIRE(fx.verdict(good) == Errc::Ok);

    SUBCASE("length checks precede the checksum") {
        Bytes trailing = good;
        trailing.push_back(0);
        CHECK(fx.verdict(trailing) == Errc::LengthMismatch);
        Bytes cut(good.begin(), good.end() - 1);
        CHECK(fx.verdict(cut) == Errc::TooShort);
        Bytes big = good;
        put_be32(big.data() + wire::offset::kPayloadLength, 70'000);
        big.back() ^= 1;  // a broken checksum too: size wins
        CHECK(fx.verdict(big) == Errc::PayloadTooLarge);
    }
    SUBCASE("checksum precedes signature") {
        Bytes b = good;
        b[wire::offset::kSignature] ^= 1;  // bad signature, stale checksum
        CHECK(fx.verdict(b) == Errc::ChecksumMismatch);
        refresh_checksum(b);
        CHECK(fx.verdict(b) == Errc::BadSignature);
    }
    SUBCASE("signature precedes replay and expiry") {
        auto stale = fx.fields();
        stale.timestamp_us = kNow - 120'000'000;
        stale.ttl_ms = 1;
        Bytes b = wire::build_packet(stale, Bytes{0xA0}, fx.other.key).serialize();  // wrong signer
        CHECK(fx.verdict(b) == Errc::BadSignature);
    }
    SUBCASE("compression is refused after authentication") {
        auto c = fx.fields();
        c.flags = wire::flags::kIsCompressed;
        // build_packet refuses the flag, so sign the frame by hand.
        auto clean = fx.fields();
        Bytes b = fx.frame(clean);
        put_be32(b.data() + wire::offset::kFlags, c.flags);
        auto h = wire::decode_header(b);
        Bytes hdr(b.begin(), b.begin() + 116);
        std::fill(hdr.begin() + wire::offset::kChecksum, hdr.end(), 0);
        auto sig = crypto::sign(fx.id.key, wire::signing_input(hdr, ByteView(b).subspan(116)));
        std::copy(sig.begin(), sig.end(), b.begin() + wire::offset::kSignature);
        refresh_checksum(b);
        (void)h;
        CHECK(fx.verdict(b) == Errc::CompressionUnsupported);
        CHECK_THROWS_AS(wire::build_packet(c, Bytes{}, fx.id.key), Error);
    }
    SUBCASE("replay precedes expiry") {
        auto s = fx.fields();
        s.timestamp_us = kNow - 40'000'000;
        s.ttl_ms = 1;
        CHECK(fx.verdict(fx.frame(s)) == Errc::ReplayDetected);
        s.timestamp_us = kNow - 10'000;
        CHECK(fx.verdict(fx.frame(s)) == Errc::Expired);
    }
    SUBCASE("a duplicate is caught by the shared cache") {
        crypto::ReplayCache cache;
        CHECK(wire::validate_verdict(good, fx.id.public_key(), kNow, cache) == Errc::Ok);
        CHECK(wire::validate_verdict(good, fx.id.public_key(), kNow, cache) == Errc::ReplayDetected);
    }
}

TEST_CASE("validate_packet throws the verdict and returns the parsed packet") {
    Fixture fx;
    Bytes payload{0xA1, 0x01, 0x02};
    auto raw = fx.frame(fx.fields(), payload);
    crypto::ReplayCache cache;
    auto p = wire::validate_packet(raw, fx.id.public_key(), kNow, cache);
    CHECK(p.payload == payload);
    CHECK(p.header.payload_length == 3);
    CHECK(p.serialize() == raw);
    try {
        wire::validate_packet(raw, fx.id.public_key(), kNow, cache);
        FAIL("duplicate accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ReplayDetected);
    }
}

TEST_CASE("golden vectors are stable and carry their expected verdicts") {
    auto a = vectors::build();
    auto b = vectors::build();
    REQUIRE(a.vectors.size() == b.vectors.size());
    std::set<int> types;
    for (std::size_t i = 0; i < a.vectors.size(); ++i) {
        const auto& v = a.vectors[i];
        CHECK(v.frame == b.vectors[i].frame);
        CHECK(v.coap == b.vectors[i].coap);
        CHECK(coap::unwrap(v.coap) == v.frame);
        crypto::ReplayCache cache;
        CHECK_MESSAGE(wire::validate_verdict(v.frame, a.signer, a.validate_now_us, cache) == v.expected, v.name);
        if (v.expected == Errc::Ok) {
            types.insert(static_cast<int>(v.header.packet_type));
            CHECK(oracle::layout_matches(v.frame.data(), v.header));
            crypto::ReplayCache c2;
            CHECK(wire::validate_verdict(v.frame, a.wrong_signer, a.validate_now_us, c2) == Errc::BadSignature);
        }
    }
    CHECK(types == std::set<int>{0, 1, 2, 3, 4, 6, 7, 8});
    CHECK(a.manifest_json() == b.manifest_json());
    auto m = nlohmann::json::parse(a.manifest_json());
    CHECK(m["magic"] == "5449");
    CHECK(m["header_size"] == 116);
    CHECK(m["error_codes"]["ReplayDetected"] == 7);
}

TEST_CASE("golden vector files match the manifest field by field") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tip_golden_roundtrip";
    fs::remove_all(dir);
    const auto set = vectors::build();
    vectors::write(set, dir.string());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return Bytes(std::istreambuf_iterator<char>(in), {});
    };
    std::ifstream mf(dir / "manifest.json");
    const auto m = nlohmann::json::parse(mf);
    REQUIRE(m["vectors"].size() == set.vectors.size());
    for (std::size_t i = 0; i < set.vectors.size(); ++i) {
        const auto& v = set.vectors[i];
        const auto& e = m["vectors"][i];
        INFO(v.name);
        CHECK(e["name"] == v.name);
        const Bytes bin = slurp(dir / e["file"].get<std::string>());
        CHECK(bin == v.frame);
        CHECK(slurp(dir / e["coap_file"].get<std::string>()) == v.coap);
        CHECK(e["size"] == bin.size());
        CHECK(e["expected"] == std::string(errc_name(v.expected)));
        CHECK(e["expected_code"] == static_cast<int>(v.expected));
        CHECK(m["error_codes"][std::string(errc_name(v.expected))] == static_cast<int>(v.expected));
        if (!v.header_decodes || bin.size() < 116) continue;
        // Header fields read straight from the file bytes, not via the decoder.
        const auto& h = e["header"];
        const std::uint8_t* b = bin.data();
        CHECK(h["magic"] == to_hex(ByteView(b, 2)));
        CHECK(h["version"] == b[2]);
        CHECK(h["packet_type"] == b[3]);
        CHECK(h["transaction_id"] == to_hex(ByteView(b + 4, 16)));
        CHECK(h["payload_length"] == oracle::be(b + 20, 4));
        CHECK(h["capability_hash"] == oracle::be(b + 24, 4));
        CHECK(h["sequence_number"] == oracle::be(b + 28, 4));
        CHECK(h["flags"] == oracle::be(b + 32, 4));
        CHECK(h["timestamp_us"] == oracle::be(b + 36, 8));
        CHECK(h["ttl_ms"] == oracle::be(b + 44, 4));
        CHECK(h["checksum"] == oracle::be(b + 48, 4));
        CHECK(h["signature"] == to_hex(ByteView(b + 52, 64)));
    }
    fs::remove_all(dir);
}

TEST_CASE("the encrypted golden vector opens with the published session") {
    auto set = vectors::build();
    auto it = std::find_if(set.vectors.begin(), set.vectors.end(), [](const auto& v) { return v.encrypted; });
    REQUIRE(it != set.vectors.end());
    CHECK((it->header.flags & wire::flags::kIsEncrypted) != 0);
    wire::HeaderFields f;
    f.packet_type = it->header.packet_type;
    f.transaction_id = it->header.transaction_id;
    f.capability_hash = it->header.capability_hash;
    f.sequence_number = it->header.sequence_number;
    f.flags = it->header.flags;
    f.timestamp_us = it->header.timestamp_us;
    f.ttl_ms = it->header.ttl_ms;
    ByteView sealed = ByteView(it->frame).subspan(116);
    auto aad = wire::aad_header(f, static_cast<std::uint32_t>(sealed.size()));
    auto plain = crypto::open(set.session, sealed, aad);
    auto msg = payload::decode_payload(wire::PacketType::DataResponse, plain);
    auto* r = std::get_if<payload::DataResponse>(&msg);
    REQUIRE(r);
    CHECK(r->value.as_uint() == 2500);
}

TEST_CASE("coap framing") {
    Rng rng(3);
    Bytes inner{1, 2, 3, 4};
    auto d = coap::wrap(inner, rng);
    auto m = coap::decode(d);
    CHECK(m.type == coap::Type::Confirmable);
    CHECK(m.code == coap::kCodePost);
    CHECK(m.token.size() == 4);
    CHECK(m.option(coap::kOptionUriPath) == Bytes{'t', 'i', 'p'});
    CHECK(coap::decode_uint_option(*m.option(coap::kOptionContentFormat)) == 42);
    CHECK(coap::encode(m) == d);
    CHECK(coap::unwrap(d) == inner);

    auto code_of = [](ByteView v) {
        try {
            coap::unwrap(v);
            return Errc::Ok;
        } catch (const Error& e) {
            return e.code();
        }
    };
    CHECK(code_of(Bytes{0x00}) == Errc::NotCoap);
    CHECK(code_of(Bytes{0x80, 0x02, 0, 1}) == Errc::NotCoap);  // version 2
    coap::Message wrong = m;
    wrong.options = {{coap::kOptionUriPath, {'x'}}, {coap::kOptionContentFormat, coap::encode_uint_option(42)}};
    CHECK(code_of(coap::encode(wrong)) == Errc::WrongPath);
    wrong.options = {{coap::kOptionUriPath, {'t', 'i', 'p'}}, {coap::kOptionContentFormat, coap::encode_uint_option(60)}};
    CHECK(code_of(coap::encode(wrong)) == Errc::WrongContentFormat);
    coap::Message empty = m;
    empty.payload.clear();
    CHECK(code_of(coap::encode(empty)) == Errc::NoPayload);

    // options with large deltas and lengths use the extended nibbles
    coap::Message big;
    big.options = {{2000, Bytes(300, 7)}, {13, Bytes(13, 1)}, {1, {}}};
    big.payload = {9};
    auto back = coap::decode(coap::encode(big));
    CHECK(back.options.size() == 3);
    CHECK(back.option(2000) == Bytes(300, 7));
    CHECK(back.option(13) == Bytes(13, 1));
}
