#pragma once

// DNS-SD service records for local-link capability announcement. On the
// simulated bus records travel inside a signed CBOR envelope; the DNS wire
// codec is used by the optional OS multicast backend.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tip/crypto.hpp"
#include "tip/types.hpp"

namespace tip::dnssd {

inline constexpr std::string_view kServiceType = "_tip._udp.local";

struct ServiceInstance {
    std::string instance;  // "<node id prefix>._tip._udp.local"
    std::string host;      // "<node id prefix>.local"
    std::uint16_t port = 0;
    std::vector<std::pair<std::string, std::string>> txt;

    std::optional<std::string> txt_value(std::string_view key) const;
    bool operator==(const ServiceInstance&) const = default;
};

/// One instance per advertised capability. TXT: cap, schema, ver, sec=1.
std::vector<ServiceInstance> service_instances(const NodeRecord& node);

struct Announcement {
    NodeRecord node;
    std::vector<ServiceInstance> services;
};

/// Signed bus message announcing `node`.
Bytes encode_announcement(const NodeRecord& node, const crypto::SigningKey& key);
/// nullopt unless the message is a well-formed announcement whose
/// signature verifies against the embedded, self-consistent node record.
std::optional<Announcement> decode_announcement(ByteView bytes);

Bytes encode_query(const std::string& capability_id);
std::optional<std::string> decode_query(ByteView bytes);

/// DNS response carrying PTR, SRV and TXT answers for each instance.
Bytes encode_dns_response(const std::vector<ServiceInstance>& services, std::uint32_t ttl_s = 120);
/// Inverse of encode_dns_response; follows compression pointers. Throws
/// Error(Errc::MalformedDns).
std::vector<ServiceInstance> decode_dns_response(ByteView message);

}  // namespace tip::dnssd
