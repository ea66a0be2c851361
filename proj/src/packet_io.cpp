#include "tip/packet_io.hpp"

#include "tip/error.hpp"

namespace tip::io {

PacketIo::PacketIo(net::Transport& transport, const crypto::NodeIdentity& identity, const NodeConfig& config,
                   std::uint64_t seed)
    : transport_(transport),
      identity_(identity),
      config_(config),
      rng_(seed),
      sequence_(static_cast<std::uint32_t>(rng_.next())),
      alive_(std::make_shared<bool>(true)) {
    transport_.set_receiver([this](const std::string& from, ByteView d) { receive(from, d); });
}

PacketIo::~PacketIo() {
    transport_.set_receiver({});
    for (auto& [id, p] : pending_) transport_.cancel(p.timer);
    for (auto& [id, r] : reliable_) transport_.cancel(r.timer);
}

wire::TipPacket PacketIo::make_packet(wire::PacketType type, const Uuid& txid, const payload::Message& msg,
                                      const SendOptions& opts) {
    wire::HeaderFields f;
    f.packet_type = type;
    f.transaction_id = txid;
    f.capability_hash = opts.capability_hash;
    f.sequence_number = ++sequence_;
    f.flags = opts.flags;
    f.timestamp_us = now();
    f.ttl_ms = config_.packet_ttl_ms;
    Bytes body;
    if (opts.session) {
        f.flags |= wire::flags::kIsEncrypted;
        Bytes plain = payload::encode_payload(msg);
        auto aad = wire::aad_header(f, static_cast<std::uint32_t>(plain.size() + crypto::kSealOverhead));
        body = crypto::seal(*opts.session, plain, aad);
    } else {
        body = payload::encode_payload(msg, identity_.public_key());
    }
    return wire::build_packet(f, body, identity_.key, config_.max_payload);
}

void PacketIo::transmit(const std::string& to, wire::PacketType type, const Uuid& txid, const payload::Message& msg,
                        const SendOptions& opts) {
    auto packet = make_packet(type, txid, msg, opts);
    if (type == wire::PacketType::DiscoveryQuery) {
        if (auto* q = std::get_if<payload::DiscoveryQuery>(&msg); q && std::holds_alternative<Key256>(q->target))
            ++counters_.find_node_sent;
    }
    ++counters_.sent;
    transport_.send(to, packet.serialize());
}

Uuid PacketIo::send(const std::string& to, wire::PacketType type, const payload::Message& msg, SendOptions opts) {
    Uuid txid = opts.transaction_id ? *opts.transaction_id : Uuid::v4(rng_);
    transmit(to, type, txid, msg, opts);
    return txid;
}

Uuid PacketIo::request(const std::string& to, wire::PacketType type, const payload::Message& msg, ResponseFn on_reply,
                       std::uint64_t timeout_us, SendOptions opts, bool accept_ack) {
    Uuid txid = opts.transaction_id ? *opts.transaction_id : Uuid::v4(rng_);
    opts.transaction_id = txid;
    std::weak_ptr<bool> alive = alive_;
    Pending p;
    p.peer = to;
    p.fn = std::move(on_reply);
    p.accept_ack = accept_ack;
    p.timer = transport_.schedule(timeout_us, [this, alive, txid] {
        if (alive.expired()) return;
        auto it = pending_.find(txid);
        if (it == pending_.end()) return;
        auto fn = std::move(it->second.fn);
        pending_.erase(it);
        fn(nullptr);
    });
    pending_[txid] = std::move(p);
    if (accept_ack) opts.flags |= wire::flags::kRequiresAck;
    transmit(to, type, txid, msg, opts);
    return txid;
}

Uuid PacketIo::send_reliable(const std::string& to, wire::PacketType type, const payload::Message& msg,
                             std::function<void(bool)> done, SendOptions opts) {
    Uuid txid = opts.transaction_id ? *opts.transaction_id : Uuid::v4(rng_);
    opts.transaction_id = txid;
    opts.flags |= wire::flags::kRequiresAck;
    if (auto old = reliable_.find(txid); old != reliable_.end()) {
        // A newer reliable send on the same transaction supersedes the old one.
        transport_.cancel(old->second.timer);
        reliable_.erase(old);
    }
    Reliable r{to, type, msg, opts, config_.ack_retries, 0, std::move(done)};
    reliable_.emplace(txid, std::move(r));
    transmit(to, type, txid, msg, opts);
    arm_retransmit(txid);
    return txid;
}

void PacketIo::arm_retransmit(const Uuid& txid) {
    std::weak_ptr<bool> alive = alive_;
    reliable_.at(txid).timer = transport_.schedule(config_.ack_timeout_us, [this, alive, txid] {
        if (alive.expired()) return;
        auto it = reliable_.find(txid);
        if (it == reliable_.end()) return;
        auto& r = it->second;
        if (r.attempts_left == 0) {
            auto done = std::move(r.done);
            reliable_.erase(it);
            if (done) done(false);
            return;
        }
        --r.attempts_left;
        ++counters_.retransmits;
        transmit(r.peer, r.type, txid, r.message, r.opts);
        arm_retransmit(txid);
    });
}

void PacketIo::cancel_request(const Uuid& txid) {
    if (auto it = pending_.find(txid); it != pending_.end()) {
        transport_.cancel(it->second.timer);
        pending_.erase(it);
    }
}

void PacketIo::learn_peer(const std::string& address, const crypto::PublicKey& key) {
    keys_by_address_[address] = key;
    address_by_id_[crypto::node_id_for(key)] = address;
}

std::optional<crypto::PublicKey> PacketIo::key_for(const std::string& address) const {
    auto it = keys_by_address_.find(address);
    if (it == keys_by_address_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> PacketIo::address_for(const NodeId& id) const {
    auto it = address_by_id_.find(id);
    if (it == address_by_id_.end()) return std::nullopt;
    return it->second;
}

void PacketIo::send_ack(const std::string& to, const Uuid& txid) {
    SendOptions o;
    o.transaction_id = txid;
    transmit(to, wire::PacketType::DataResponse, txid, payload::Ack{}, o);
}

void PacketIo::receive(const std::string& from, ByteView datagram) {
    if (datagram.size() < 2 || datagram[0] != 0x54 || datagram[1] != 0x49) {
        if (raw_handler_) raw_handler_(from, datagram);
        return;
    }
    wire::PacketHeader header;
    try {
        header = wire::decode_header(datagram);
    } catch (const Error&) {
        ++counters_.rejected;
        return;
    }

    // Plaintext payloads carry the sender's key; sealed ones rely on the
    // directory entry learned during negotiation.
    std::optional<crypto::PublicKey> key;
    if (!(header.flags & wire::flags::kIsEncrypted) &&
        datagram.size() >= wire::kHeaderSize + header.payload_length)
        key = payload::peek_sender_key(datagram.subspan(wire::kHeaderSize, header.payload_length));
    if (!key) key = key_for(from);
    if (!key) {
        ++counters_.unknown_sender;
        return;
    }

    Inbound in;
    in.from = from;
    in.sender_key = *key;
    in.sender_id = crypto::node_id_for(*key);
    in.received_us = now();
    auto [cache, fresh] = replay_.try_emplace(in.sender_id, config_.skew_us, config_.lru_capacity);
    try {
        wire::ValidateOptions vo;
        vo.max_payload = config_.max_payload;
        in.packet = wire::validate_packet(datagram, *key, in.received_us, cache->second, vo);
    } catch (const Error&) {
        ++counters_.rejected;
        return;
    }
    learn_peer(from, *key);

    Bytes plain;
    if (in.packet.header.flags & wire::flags::kIsEncrypted) {
        std::optional<Bytes> opened;
        if (decryptor_) opened = decryptor_(in.sender_id, in.packet);
        if (!opened) {
            ++counters_.rejected;
            return;
        }
        plain = std::move(*opened);
    } else {
        plain = in.packet.payload;
    }
    try {
        in.message = payload::decode_payload(in.type(), plain);
    } catch (const Error&) {
        ++counters_.rejected;
        return;
    }
    ++counters_.received;

    bool is_ack = std::holds_alternative<payload::Ack>(in.message);
    if (!is_ack && in.has_flag(wire::flags::kRequiresAck)) send_ack(from, in.txid());
    if (observer_) observer_(in);

    if (is_ack) {
        if (auto it = reliable_.find(in.txid()); it != reliable_.end() && it->second.peer == from) {
            transport_.cancel(it->second.timer);
            auto done = std::move(it->second.done);
            reliable_.erase(it);
            if (done) done(true);
        }
        if (auto it = pending_.find(in.txid()); it != pending_.end() && it->second.peer == from && it->second.accept_ack) {
            transport_.cancel(it->second.timer);
            auto fn = std::move(it->second.fn);
            pending_.erase(it);
            fn(&in);
        }
        return;
    }
    if (auto it = pending_.find(in.txid()); it != pending_.end() && it->second.peer == from) {
        transport_.cancel(it->second.timer);
        auto fn = std::move(it->second.fn);
        pending_.erase(it);
        fn(&in);
        return;
    }
    if (auto h = handlers_.find(in.type()); h != handlers_.end()) h->second(in);
}

}  // namespace tip::io
