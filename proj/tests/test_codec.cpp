#include "doctest.h"
#include "tip/cbor.hpp"
#include "tip/payload.hpp"
#include "tip/toml_lite.hpp"

using namespace tip;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::Ok;
}

cbor::Value random_value(Rng& rng, int depth) {
    switch (depth <= 0 ? rng.below(6) : rng.below(8)) {
        case 0: return cbor::Value(rng.next() >> rng.below(64));
        case 1: return cbor::Value(-1 - static_cast<long long>(rng.next() >> (1 + rng.below(63))));
        case 2: return cbor::Value(rng.uniform01() * 1e6 - 5e5);
        case 3: {
            Bytes b(rng.below(40));
            rng.fill(b.data(), b.size());
            return cbor::Value(b);
        }
        case 4: return cbor::Value(std::string(rng.below(30), static_cast<char>('a' + rng.below(26))));
        case 5: return rng.below(3) == 0 ? cbor::Value() : cbor::Value(rng.below(2) == 0);
        case 6: {
            cbor::Array a;
            for (auto n = rng.below(5); n > 0; --n) a.push_back(random_value(rng, depth - 1));
            return cbor::Value(a);
        }
        default: {
            cbor::Map m;
            for (auto n = rng.below(5); n > 0; --n) m.emplace_back(cbor::Value(rng.below(1000)), random_value(rng, depth - 1));
            // duplicate keys are not canonical; keep the first of each
            cbor::Map uniq;
            for (auto& kv : m)
                if (std::none_of(uniq.begin(), uniq.end(), [&](const auto& u) { return u.first == kv.first; }))
                    uniq.push_back(kv);
            return cbor::Value(cbor::canonical_map(uniq));
        }
    }
}

}  // namespace

TEST_CASE("cbor encodes the RFC 8949 appendix examples") {
    struct Case {
        cbor::Value v;
        std::string hex;
    };
    std::vector<Case> cases = {
        {cbor::Value(0), "00"},
        {cbor::Value(23), "17"},
        {cbor::Value(24), "1818"},
        {cbor::Value(100), "1864"},
        {cbor::Value(1000), "1903e8"},
        {cbor::Value(1000000), "1a000f4240"},
        {cbor::Value(1000000000000ULL), "1b000000e8d4a51000"},
        {cbor::Value(18446744073709551615ULL), "1bffffffffffffffff"},
        {cbor::Value(-1), "20"},
        {cbor::Value(-10), "29"},
        {cbor::Value(-1000), "3903e7"},
        {cbor::Value(1.5), "fb3ff8000000000000"},
        {cbor::Value(false), "f4"},
        {cbor::Value(true), "f5"},
        {cbor::Value(), "f6"},
        {cbor::Value(Bytes{}), "40"},
        {cbor::Value(Bytes{1, 2, 3, 4}), "4401020304"},
        {cbor::Value(""), "60"},
        {cbor::Value("IETF"), "6449455446"},
        {cbor::Value(cbor::Array{1, 2, 3}), "83010203"},
        {cbor::Value(cbor::canonical_map({{1, 2}, {3, 4}})), "a201020304"},
    };
    for (const auto& c : cases) {
        CHECK_MESSAGE(to_hex(cbor::encode(c.v)) == c.hex, c.hex);
        CHECK(cbor::decode(from_hex(c.hex)) == c.v);
    }
}

TEST_CASE("canonical maps sort by encoded key bytes") {
    auto m = cbor::canonical_map({{"b", 1}, {10, 2}, {"a", 3}, {1, 4}, {-1, 5}, {"aa", 6}});
    std::vector<std::string> order;
    for (const auto& [k, v] : m) order.push_back(to_hex(cbor::encode(k)));
    CHECK(std::is_sorted(order.begin(), order.end()));
    CHECK(order.front() == "01");
    // decoding then re-encoding canonical bytes is the identity
    auto bytes = cbor::encode(cbor::Value(m));
    CHECK(cbor::encode(cbor::decode(bytes)) == bytes);
}

TEST_CASE("cbor roundtrips random values") {
    Rng rng(8949);
    for (int i = 0; i < 2000; ++i) {
        auto v = random_value(rng, 3);
        auto b = cbor::encode(v);
        REQUIRE(cbor::decode(b) == v);
        REQUIRE(cbor::encode(cbor::decode(b)) == b);
    }
}

TEST_CASE("cbor rejects malformed input") {
    for (std::string hex : {"", "18", "1903", "62 61", "9f01ff", "5f40ff", "c001", "0000", "a101", "fa"}) {
        std::string h = hex;
        h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
        CHECK_MESSAGE(code_of([&] { cbor::decode(from_hex(h)); }) == Errc::MalformedCbor, hex);
    }
    Bytes deep(70, 0x81);
    deep.push_back(0x00);
    CHECK(code_of([&] { cbor::decode(deep); }) == Errc::MalformedCbor);
    CHECK(code_of([] { cbor::Value(1).as_text(); }) == Errc::SchemaMismatch);
}

TEST_CASE("every payload type roundtrips") {
    Rng rng(1);
    auto id = crypto::NodeIdentity::generate(rng);
    Capability cap{"machine:fluid:fill", DataSchema::U16, "1.2.3", 0.995, 10.0};
    NodeRecord rec;
    rec.node_id = id.node_id;
    rec.signing_public = id.public_key();
    rec.addresses = {"udp://10.0.0.1:5683"};
    rec.capabilities = {cap};
    rec.availability = 0.97;
    auto eph = crypto::X25519Keypair::generate(rng);
    Uuid tx = Uuid::v4(rng);
    auto se = crypto::sign_ephemeral(id.key, tx, eph.public_key);

    payload::IntentRequest ir{"machine:fluid:fill", DataSchema::F32,
                              cbor::canonical_map({{"liquid", "water"}, {"volume_ml", 500}}),
                              {{"max_latency_ms", 100.0}},
                              {{"w_func", 0.25}, {"w_cost", 0.25}, {"w_trust", 0.25}, {"w_avail", 0.25}},
                              true};
    payload::IntentProposal ip{cap, 2.5, 0.99, true, se, std::nullopt};
    payload::IntentProposal rejected{cap, 0, 0, false, std::nullopt, std::string("busy")};
    Bytes body{1, 2, 3};
    payload::ContractMessage accept{body, crypto::sign(id.key, body), se, std::nullopt};
    payload::ContractMessage refuse{body, std::nullopt, std::nullopt, std::string("expired")};

    std::vector<std::pair<wire::PacketType, payload::Message>> cases = {
        {wire::PacketType::DiscoveryAnnounce,
         payload::DiscoveryAnnounce{rec.node_id, rec.capabilities, rec.addresses, rec.signing_public, {rec},
                                    {ProviderRecord::make(capability_key(cap.id), rec, id.key)}}},
        {wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{std::string("machine:fluid:fill")}},
        {wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{capability_key("k")}},
        {wire::PacketType::DiscoveryQuery, payload::DiscoveryQuery{}},
        {wire::PacketType::IntentRequest, ir},
        {wire::PacketType::IntentProposal, ip},
        {wire::PacketType::IntentProposal, rejected},
        {wire::PacketType::ContractAccept, accept},
        {wire::PacketType::ContractSigned, refuse},
        {wire::PacketType::DataRequest, payload::DataRequest{tx, cbor::Value(cbor::canonical_map({{"volume_ml", 500}}))}},
        {wire::PacketType::DataResponse, payload::DataResponse{tx, cbor::Value(2500u), DataSchema::U16}},
        {wire::PacketType::DataResponse, payload::DataResponse{tx, cbor::Value(1.5), std::nullopt}},
        {wire::PacketType::DataResponse, payload::Ack{}},
    };
    for (const auto& [type, msg] : cases) {
        auto bytes = payload::encode_payload(msg, id.public_key());
        auto back = payload::decode_payload(type, bytes);
        CHECK_MESSAGE(back == msg, wire::packet_type_name(type));
        CHECK(payload::peek_sender_key(bytes) == id.public_key());
        CHECK(payload::encode_payload(back, id.public_key()) == bytes);
        CHECK_FALSE(payload::peek_sender_key(payload::encode_payload(msg)).has_value());
    }
}

TEST_CASE("payload decoding refuses the wrong shape") {
    CHECK(code_of([] { payload::decode_payload(wire::PacketType::IntentRequest, Bytes{0xFF}); }) == Errc::MalformedCbor);
    auto text = cbor::encode(cbor::Value("hello"));
    CHECK(code_of([&] { payload::decode_payload(wire::PacketType::IntentRequest, text); }) == Errc::SchemaMismatch);
    auto empty = cbor::encode(cbor::Value(cbor::Map{}));
    CHECK(code_of([&] { payload::decode_payload(wire::PacketType::IntentProposal, empty); }) == Errc::SchemaMismatch);
}

TEST_CASE("toml subset") {
    auto t = toml::parse(R"(# comment
title = "demo"   # trailing comment
[adapter]
id = 'raw\path'
formula = "x * 1.8 + 32"
esc = "tab\tq\"ué"
n = -42
f = 2.5e3
flag = true
list = [1, 2.5, "three", [4]]
inline = { a = 1, b.c = "d" }
server.port = 5683

[[node]]
name = "a"
[[node]]
name = "b"
)");
    CHECK(*toml::get_string(t, "title") == "demo");
    const auto* a = toml::find_table(t, "adapter");
    REQUIRE(a);
    CHECK(*toml::get_string(*a, "id") == "raw\\path");
    CHECK(*toml::get_string(*a, "esc") == "tab\tq\"u\xc3\xa9");
    CHECK(*toml::get_integer(*a, "n") == -42);
    CHECK(*toml::get_number(*a, "f") == 2500.0);
    CHECK(*toml::get_bool(*a, "flag"));
    CHECK(toml::find(*a, "list")->as_array().size() == 4);
    CHECK(*toml::get_string(*toml::find_table(*a, "inline.b"), "c") == "d");
    CHECK(*toml::get_integer(*a, "server.port") == 5683);
    CHECK(toml::find(t, "node")->as_array().size() == 2);
    CHECK(*toml::get_string(toml::find(t, "node")->as_array()[1].as_table(), "name") == "b");
    CHECK(toml::find(*a, "formula")->line == 5);
}

TEST_CASE("toml errors name the line") {
    auto msg = [](const char* src) {
        try {
            toml::parse(src);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::TomlSyntax);
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    CHECK(msg("a = 1\nb = \n") .find("line 2") != std::string::npos);
    CHECK(msg("a = \"open\n").find("line 1") != std::string::npos);
    CHECK(msg("a = 1\na = 2\n").find("line 2") != std::string::npos);
    CHECK(msg("[t]\nx = 1\n[t]\n").find("line 3") != std::string::npos);
    CHECK(msg("x = [1, 2\n") != "accepted");
}
