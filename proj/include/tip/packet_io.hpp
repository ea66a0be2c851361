#pragma once

// Per-node packet layer: builds and validates TIP packets, keeps per-peer
// replay caches, matches responses to requests by transaction id, and runs
// the REQUIRES_ACK retransmission policy.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "tip/crypto.hpp"
#include "tip/payload.hpp"
#include "tip/transport.hpp"
#include "tip/wire.hpp"

namespace tip {

struct NodeConfig {
    std::size_t k = 20;
    std::size_t alpha = 3;
    std::uint64_t skew_us = crypto::ReplayCache::kDefaultSkewUs;
    std::size_t lru_capacity = crypto::ReplayCache::kDefaultCapacity;
    double lambda = 9.6e-7;
    std::uint64_t cache_ttl_us = 60'000'000;
    std::uint64_t rpc_timeout_us = 500'000;
    std::uint32_t packet_ttl_ms = 5000;
    std::size_t max_payload = wire::kDefaultMaxPayload;
    bool early_cancel = true;
    std::uint64_t local_grace_us = 10'000;
    std::uint64_t discovery_timeout_us = 1'000'000;
    std::uint64_t announce_interval_us = 15'000'000;  // 0 disables periodic announce/republish
    std::uint64_t contract_lifetime_us = 600'000'000;
    std::uint64_t ack_timeout_us = 250'000;
    int ack_retries = 2;
    std::uint64_t data_timeout_us = 1'000'000;
    int heal_threshold = 3;
    std::string link_group = "link0";
};

namespace io {

struct SendOptions {
    std::optional<Uuid> transaction_id;  // fresh v4 when absent
    std::uint32_t flags = 0;
    std::uint32_t capability_hash = 0;
    crypto::SessionKeys* session = nullptr;  // seal the payload (sets IS_ENCRYPTED)
};

struct Inbound {
    std::string from;
    wire::TipPacket packet;
    crypto::PublicKey sender_key{};
    NodeId sender_id;
    payload::Message message;
    std::uint64_t received_us = 0;

    wire::PacketType type() const { return packet.header.packet_type; }
    const Uuid& txid() const { return packet.header.transaction_id; }
    bool has_flag(std::uint32_t f) const { return (packet.header.flags & f) != 0; }
};

struct Counters {
    std::uint64_t sent = 0;
    std::uint64_t received = 0;
    std::uint64_t rejected = 0;
    std::uint64_t retransmits = 0;
    std::uint64_t find_node_sent = 0;
    std::uint64_t unknown_sender = 0;
};

class PacketIo {
public:
    using Handler = std::function<void(const Inbound&)>;
    /// Called with nullptr on timeout.
    using ResponseFn = std::function<void(const Inbound*)>;
    /// Opens an encrypted payload from `peer`; nullopt when no session fits.
    using Decryptor = std::function<std::optional<Bytes>(const NodeId& peer, const wire::TipPacket& packet)>;
    using RawHandler = std::function<void(const std::string& from, ByteView datagram)>;

    PacketIo(net::Transport& transport, const crypto::NodeIdentity& identity, const NodeConfig& config,
             std::uint64_t seed);
    PacketIo(const PacketIo&) = delete;
    PacketIo& operator=(const PacketIo&) = delete;
    ~PacketIo();

    const crypto::NodeIdentity& identity() const { return identity_; }
    const NodeConfig& config() const { return config_; }
    net::Transport& transport() { return transport_; }
    std::uint64_t now() const { return transport_.now_us(); }
    Rng& rng() { return rng_; }

    void on(wire::PacketType type, Handler h) { handlers_[type] = std::move(h); }
    void on_raw(RawHandler h) { raw_handler_ = std::move(h); }
    void set_decryptor(Decryptor d) { decryptor_ = std::move(d); }
    /// Every successfully validated packet is reported here first.
    void on_any(Handler h) { observer_ = std::move(h); }

    /// Fire-and-forget. Returns the transaction id used.
    Uuid send(const std::string& to, wire::PacketType type, const payload::Message& msg, SendOptions opts = {});

    /// Sends and waits for the first non-ack packet from `to` carrying the
    /// same transaction id. `accept_ack` makes a bare ack count as the reply.
    Uuid request(const std::string& to, wire::PacketType type, const payload::Message& msg, ResponseFn on_reply,
                 std::uint64_t timeout_us, SendOptions opts = {}, bool accept_ack = false);

    /// REQUIRES_ACK delivery: up to `ack_retries` retransmissions spaced by
    /// `ack_timeout_us`, each rebuilt with a fresh sequence number and
    /// timestamp. `done(true)` on ack, `done(false)` once retries run out.
    Uuid send_reliable(const std::string& to, wire::PacketType type, const payload::Message& msg,
                       std::function<void(bool)> done = {}, SendOptions opts = {});

    void cancel_request(const Uuid& txid);

    /// Peer directory: address <-> static key, filled from validated traffic
    /// and discovery records.
    void learn_peer(const std::string& address, const crypto::PublicKey& key);
    std::optional<crypto::PublicKey> key_for(const std::string& address) const;
    std::optional<std::string> address_for(const NodeId& id) const;

    const Counters& counters() const { return counters_; }
    Counters& counters() { return counters_; }

private:
    struct Pending {
        std::string peer;
        ResponseFn fn;
        net::TimerId timer = 0;
        bool accept_ack = false;
    };
    struct Reliable {
        std::string peer;
        wire::PacketType type;
        payload::Message message;  // re-encoded per attempt: the header, and so the AAD, changes
        SendOptions opts;
        int attempts_left = 0;
        net::TimerId timer = 0;
        std::function<void(bool)> done;
    };

    wire::TipPacket make_packet(wire::PacketType type, const Uuid& txid, const payload::Message& msg,
                                const SendOptions& opts);
    void transmit(const std::string& to, wire::PacketType type, const Uuid& txid, const payload::Message& msg,
                  const SendOptions& opts);
    void arm_retransmit(const Uuid& txid);
    void receive(const std::string& from, ByteView datagram);
    void send_ack(const std::string& to, const Uuid& txid);

    net::Transport& transport_;
    crypto::NodeIdentity identity_;
    NodeConfig config_;
    Rng rng_;
    std::uint32_t sequence_;
    std::map<NodeId, crypto::ReplayCache> replay_;
    std::map<std::string, crypto::PublicKey> keys_by_address_;
    std::map<NodeId, std::string> address_by_id_;
    std::map<wire::PacketType, Handler> handlers_;
    RawHandler raw_handler_;
    Handler observer_;
    Decryptor decryptor_;
    std::map<Uuid, Pending> pending_;
    std::map<Uuid, Reliable> reliable_;
    Counters counters_;
    std::shared_ptr<bool> alive_;
};

}  // namespace io
}  // namespace tip
