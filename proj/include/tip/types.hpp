#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tip/cbor.hpp"
#include "tip/crypto.hpp"
#include "tip/ids.hpp"

namespace tip {

enum class DataSchema : std::uint8_t { U16 = 0, U32 = 1, I32 = 2, F32 = 3, F64 = 4, CborMap = 5 };

std::string_view schema_name(DataSchema s);  // "u16", "u32", ..., "cbor_map"
/// Accepts the lower-case names; throws Error(Errc::UnknownSchema).
DataSchema schema_from_name(std::string_view name);
DataSchema schema_from_code(std::uint64_t code);  // UnknownSchema
bool is_integer_schema(DataSchema s);

/// A provider-advertised service: id, schema, version, precision, rate.
struct Capability {
    std::string id;
    DataSchema schema = DataSchema::F32;
    std::string version = "1.0.0";
    double precision = 1.0;  // [0, 1]
    double rate_hz = 0.0;

    void check() const;  // EmptyCapability / SchemaMismatch on precision
    cbor::Value to_cbor() const;
    static Capability from_cbor(const cbor::Value& v);
    bool operator==(const Capability&) const = default;
};

struct NodeRecord {
    NodeId node_id;
    crypto::PublicKey signing_public{};
    std::vector<std::string> addresses;
    std::vector<Capability> capabilities;
    double availability = 1.0;  // advertised, [0, 1]
    std::uint64_t last_seen = 0;  // local bookkeeping, not serialized

    bool self_consistent() const { return node_id == crypto::node_id_for(signing_public); }
    const Capability* find_capability(std::string_view id) const;
    std::string primary_address() const { return addresses.empty() ? std::string() : addresses.front(); }

    cbor::Value to_cbor() const;
    static NodeRecord from_cbor(const cbor::Value& v);
};

/// A DHT value: "provider P serves the capability whose key is K", signed by P.
struct ProviderRecord {
    Key256 key;
    NodeRecord provider;
    crypto::Signature signature{};

    static ProviderRecord make(const Key256& key, const NodeRecord& provider, const crypto::SigningKey& signer);
    bool verify() const;

    cbor::Value to_cbor() const;
    static ProviderRecord from_cbor(const cbor::Value& v);
};

/// DHT key for a capability: SHA-256 of its UTF-8 id.
Key256 capability_key(std::string_view capability_id);

}  // namespace tip
