#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <list>
#include <optional>
#include <unordered_map>
#include <utility>

#include "tip/bytes.hpp"
#include "tip/ids.hpp"

namespace tip::cbor {
struct Value;
}

namespace tip::crypto {

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;
using Seed = std::array<std::uint8_t, 32>;
using Digest = std::array<std::uint8_t, 32>;
using X25519Key = std::array<std::uint8_t, 32>;
using AeadKey = std::array<std::uint8_t, 32>;

constexpr std::size_t kAeadTagSize = 16;
constexpr std::size_t kSealOverhead = 8 + kAeadTagSize;

/// Ed25519 key pair derived from a 32-byte seed.
struct SigningKey {
    Seed seed{};
    std::array<std::uint8_t, 64> secret{};
    PublicKey public_key{};

    static SigningKey from_seed(const Seed& seed);
    static SigningKey generate(Rng& rng) { return from_seed(rng.bytes<32>()); }
};

Digest sha256(ByteView data);

/// node_id = SHA-256(signing public key).
NodeId node_id_for(const PublicKey& pub);

struct NodeIdentity {
    SigningKey key;
    NodeId node_id;

    static NodeIdentity from_seed(const Seed& seed);
    static NodeIdentity generate(Rng& rng) { return from_seed(rng.bytes<32>()); }
    const PublicKey& public_key() const { return key.public_key; }
};

Signature sign(const SigningKey& key, ByteView msg);
/// Never throws; false on any mismatch.
bool verify(const PublicKey& pub, ByteView msg, const Signature& sig);

std::array<std::uint8_t, 32> hmac_sha256(ByteView key, ByteView msg);
/// RFC 5869 extract-then-expand.
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

struct X25519Keypair {
    X25519Key secret{};
    X25519Key public_key{};

    static X25519Keypair from_secret(const X25519Key& secret);
    static X25519Keypair generate(Rng& rng) { return from_secret(rng.bytes<32>()); }
};

X25519Key x25519(const X25519Key& scalar, const X25519Key& point);

/// ECDH; throws Error(Errc::LowOrderPoint) when the result is all zero.
X25519Key derive_shared(const X25519Key& local_private, const X25519Key& remote_public);

enum class Role { Initiator, Responder };

struct SessionKeys {
    X25519Key local_ephemeral_private{};
    X25519Key local_ephemeral_public{};
    X25519Key shared_secret{};
    AeadKey send_key{};
    AeadKey recv_key{};
    std::uint64_t send_nonce_counter = 0;
};

inline constexpr std::string_view kSessionInfo = "tip-session-v1";

/// HKDF-SHA256(shared, salt = transaction id, info = "tip-session-v1"),
/// 64 bytes: first half keys initiator->responder, second half the reverse.
SessionKeys make_session(Role role, const X25519Keypair& local, const X25519Key& remote_public,
                         const Uuid& transaction_id);

/// ChaCha20-Poly1305 (IETF). Output = counter(8, BE) || ciphertext || tag.
/// Nonce = 4 zero bytes || counter (BE). Increments send_nonce_counter.
Bytes seal(SessionKeys& session, ByteView plaintext, ByteView aad);
/// Throws Error(Errc::AuthFailure) on any tag or framing mismatch.
Bytes open(const SessionKeys& session, ByteView sealed, ByteView aad);

/// Sliding-window replay protection: skew bound plus an LRU of 64-bit nonce
/// digests. Single-writer.
class ReplayCache {
public:
    static constexpr std::uint64_t kDefaultSkewUs = 30'000'000;
    static constexpr std::size_t kDefaultCapacity = 4096;

    explicit ReplayCache(std::uint64_t skew_window_us = kDefaultSkewUs,
                         std::size_t lru_capacity = kDefaultCapacity);

    /// Accepts (true) at most once per (timestamp, sequence) inside the window.
    bool check(std::uint64_t timestamp_us, std::uint32_t sequence, std::uint64_t now_us);

    std::size_t size() const { return order_.size(); }
    std::uint64_t skew_window_us() const { return skew_; }
    std::size_t capacity() const { return capacity_; }

    static std::uint64_t nonce_digest(std::uint64_t timestamp_us, std::uint32_t sequence);

private:
    std::uint64_t skew_;
    std::size_t capacity_;
    std::list<std::uint64_t> order_;  // front = most recently used
    std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> index_;
};

inline bool check_replay(ReplayCache& cache, std::uint64_t timestamp_us, std::uint32_t sequence,
                         std::uint64_t now_us) {
    return cache.check(timestamp_us, sequence, now_us);
}

/// Ephemeral X25519 key authenticated by the sender's static Ed25519 key.
/// The signature covers "tip-eph-v1" || transaction id || ephemeral key.
struct SignedEphemeral {
    X25519Key ephemeral_public{};
    Signature signature{};

    cbor::Value to_cbor() const;
    static SignedEphemeral from_cbor(const cbor::Value& v);
};

SignedEphemeral sign_ephemeral(const SigningKey& key, const Uuid& transaction_id,
                               const X25519Key& ephemeral_public);
bool verify_ephemeral(const PublicKey& signer, const Uuid& transaction_id, const SignedEphemeral& e);

/// Verifies the peer's signed ephemeral (BadSignature) and derives keys.
SessionKeys accept_ephemeral(Role role, const X25519Keypair& local, const SignedEphemeral& remote,
                             const PublicKey& remote_static, const Uuid& transaction_id);

/// Message carrier for the two-message handshake. Returns the bytes as they
/// arrive at the other side, or nullopt if nothing arrives.
using HandshakeChannel =
    std::function<std::optional<Bytes>(bool initiator_to_responder, Bytes message)>;

struct HandshakeResult {
    SessionKeys initiator;
    SessionKeys responder;
};

/// Runs both sides of the signed-ephemeral exchange through `channel`.
/// Throws BadSignature or Timeout.
HandshakeResult handshake(const NodeIdentity& initiator, const NodeIdentity& responder,
                          const Uuid& transaction_id, Rng& rng, const HandshakeChannel& channel);

}  // namespace tip::crypto
