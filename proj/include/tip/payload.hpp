#pragma once

// CBOR payload schemas per packet type. All maps use small integer keys.
// Key 15 is reserved in every map for the sender's Ed25519 public key, used
// by receivers that have not yet learned the sender's key.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tip/cbor.hpp"
#include "tip/crypto.hpp"
#include "tip/types.hpp"
#include "tip/wire.hpp"

namespace tip::payload {

inline constexpr std::uint64_t kSenderKeyField = 15;

/// DISCOVERY_ANNOUNCE. Also used for FIND_NODE replies (contacts/providers)
/// and STORE requests (providers).
struct DiscoveryAnnounce {
    NodeId node_id;
    std::vector<Capability> capabilities;
    std::vector<std::string> addresses;
    std::optional<crypto::PublicKey> signing_public;  // 3
    std::vector<NodeRecord> contacts;                 // 4
    std::vector<ProviderRecord> providers;            // 5
    bool operator==(const DiscoveryAnnounce& o) const;
};

/// DISCOVERY_QUERY. The target is a capability id (local browse), a 256-bit
/// key (FIND_NODE) or absent (ping).
struct DiscoveryQuery {
    std::variant<std::monostate, std::string, Key256> target;
    bool operator==(const DiscoveryQuery&) const = default;
};

struct IntentRequest {
    std::string capability_id;
    DataSchema desired_schema = DataSchema::F32;
    cbor::Map params;                                   // text -> any
    std::vector<std::pair<std::string, double>> constraints;
    std::vector<std::pair<std::string, double>> weights;
    bool wants_streaming = false;                       // 5
    bool operator==(const IntentRequest& o) const;
};

struct IntentProposal {
    Capability capability;
    double measured_rtt_ms = 0.0;
    double availability = 1.0;
    bool adapter_required = false;
    std::optional<crypto::SignedEphemeral> ephemeral;  // 4
    std::optional<std::string> reject_reason;          // 5
    bool operator==(const IntentProposal& o) const;
};

struct ContractMessage {  // CONTRACT_ACCEPT and CONTRACT_SIGNED
    Bytes body;
    std::optional<crypto::Signature> signature;
    std::optional<crypto::SignedEphemeral> ephemeral;  // ACCEPT: key 2
    std::optional<std::string> reject_reason;          // SIGNED: key 2
    bool operator==(const ContractMessage& o) const;
};

struct DataRequest {
    Uuid contract_id;
    cbor::Value params;
    bool operator==(const DataRequest&) const = default;
};

struct DataResponse {
    Uuid contract_id;
    cbor::Value value;
    std::optional<DataSchema> schema;  // 2: provider's native schema of `value`
    bool operator==(const DataResponse&) const = default;
};

/// Empty DATA_RESPONSE payload acknowledging a REQUIRES_ACK packet.
struct Ack {
    bool operator==(const Ack&) const = default;
};

using Message = std::variant<DiscoveryAnnounce, DiscoveryQuery, IntentRequest, IntentProposal, ContractMessage,
                             DataRequest, DataResponse, Ack>;

/// Canonical encoding. `sender_key` adds field 15.
Bytes encode_payload(const Message& msg, const std::optional<crypto::PublicKey>& sender_key = std::nullopt);
/// Errors: MalformedCbor (bad bytes), SchemaMismatch (wrong shape for type).
Message decode_payload(wire::PacketType type, ByteView bytes);

/// Extracts field 15 without interpreting the rest; nullopt when absent or
/// when the payload is not a CBOR map.
std::optional<crypto::PublicKey> peek_sender_key(ByteView bytes);

}  // namespace tip::payload
