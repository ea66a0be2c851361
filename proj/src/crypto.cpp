#include "tip/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <mutex>

#include "tip/cbor.hpp"
#include "tip/error.hpp"

namespace tip::crypto {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw Error(Errc::IoError, "libsodium initialisation failed");
    });
}

constexpr std::string_view kEphemeralContext = "tip-eph-v1";

Bytes ephemeral_transcript(const Uuid& txid, const X25519Key& eph) {
    Bytes msg(kEphemeralContext.begin(), kEphemeralContext.end());
    msg.insert(msg.end(), txid.bytes.begin(), txid.bytes.end());
    msg.insert(msg.end(), eph.begin(), eph.end());
    return msg;
}

}  // namespace

SigningKey SigningKey::from_seed(const Seed& seed) {
    ensure_sodium();
    SigningKey k;
    k.seed = seed;
    crypto_sign_ed25519_seed_keypair(k.public_key.data(), k.secret.data(), seed.data());
    return k;
}

Digest sha256(ByteView data) {
    ensure_sodium();
    Digest d{};
    crypto_hash_sha256(d.data(), data.data(), data.size());
    return d;
}

NodeId node_id_for(const PublicKey& pub) {
    NodeId id;
    id.bytes = sha256(pub);
    return id;
}

NodeIdentity NodeIdentity::from_seed(const Seed& seed) {
    NodeIdentity id;
    id.key = SigningKey::from_seed(seed);
    id.node_id = node_id_for(id.key.public_key);
    return id;
}

Signature sign(const SigningKey& key, ByteView msg) {
    ensure_sodium();
    Signature sig{};
    crypto_sign_ed25519_detached(sig.data(), nullptr, msg.data(), msg.size(), key.secret.data());
    return sig;
}

bool verify(const PublicKey& pub, ByteView msg, const Signature& sig) {
    ensure_sodium();
    return crypto_sign_ed25519_verify_detached(sig.data(), msg.data(), msg.size(), pub.data()) == 0;
}

std::array<std::uint8_t, 32> hmac_sha256(ByteView key, ByteView msg) {
    ensure_sodium();
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, key.data(), key.size());
    crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
    std::array<std::uint8_t, 32> out{};
    crypto_auth_hmacsha256_final(&st, out.data());
    return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
    if (length > 255 * 32) throw Error(Errc::ConfigError, "HKDF output too long");
    std::array<std::uint8_t, 32> zero_salt{};
    auto prk = hmac_sha256(salt.empty() ? ByteView(zero_salt) : salt, ikm);
    Bytes out;
    out.reserve(length);
    Bytes block;
    for (std::uint8_t counter = 1; out.size() < length; ++counter) {
        Bytes input = block;
        input.insert(input.end(), info.begin(), info.end());
        input.push_back(counter);
        auto t = hmac_sha256(prk, input);
        block.assign(t.begin(), t.end());
        std::size_t take = std::min<std::size_t>(32, length - out.size());
        out.insert(out.end(), t.begin(), t.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

X25519Keypair X25519Keypair::from_secret(const X25519Key& secret) {
    ensure_sodium();
    X25519Keypair kp;
    kp.secret = secret;
    crypto_scalarmult_base(kp.public_key.data(), secret.data());
    return kp;
}

X25519Key x25519(const X25519Key& scalar, const X25519Key& point) {
    ensure_sodium();
    X25519Key out{};
    if (crypto_scalarmult(out.data(), scalar.data(), point.data()) != 0) {
        throw Error(Errc::LowOrderPoint, "X25519 produced the all-zero shared secret");
    }
    return out;
}

X25519Key derive_shared(const X25519Key& local_private, const X25519Key& remote_public) {
    X25519Key s = x25519(local_private, remote_public);
    if (std::all_of(s.begin(), s.end(), [](std::uint8_t b) { return b == 0; }))
        throw Error(Errc::LowOrderPoint, "X25519 produced the all-zero shared secret");
    return s;
}

SessionKeys make_session(Role role, const X25519Keypair& local, const X25519Key& remote_public,
                         const Uuid& transaction_id) {
    SessionKeys s;
    s.local_ephemeral_private = local.secret;
    s.local_ephemeral_public = local.public_key;
    s.shared_secret = derive_shared(local.secret, remote_public);
    Bytes okm = hkdf_sha256(s.shared_secret, transaction_id.bytes, as_bytes(kSessionInfo), 64);
    AeadKey forward{}, backward{};
    std::copy(okm.begin(), okm.begin() + 32, forward.begin());
    std::copy(okm.begin() + 32, okm.end(), backward.begin());
    if (role == Role::Initiator) {
        s.send_key = forward;
        s.recv_key = backward;
    } else {
        s.send_key = backward;
        s.recv_key = forward;
    }
    return s;
}

Bytes seal(SessionKeys& session, ByteView plaintext, ByteView aad) {
    ensure_sodium();
    std::uint64_t counter = session.send_nonce_counter++;
    std::array<std::uint8_t, crypto_aead_chacha20poly1305_IETF_NPUBBYTES> nonce{};
    put_be64(nonce.data() + 4, counter);
    Bytes out(8 + plaintext.size() + kAeadTagSize);
    put_be64(out.data(), counter);
    unsigned long long clen = 0;
    crypto_aead_chacha20poly1305_ietf_encrypt(out.data() + 8, &clen, plaintext.data(), plaintext.size(),
                                              aad.data(), aad.size(), nullptr, nonce.data(),
                                              session.send_key.data());
    out.resize(8 + clen);
    return out;
}

Bytes open(const SessionKeys& session, ByteView sealed, ByteView aad) {
    ensure_sodium();
    if (sealed.size() < kSealOverhead) throw Error(Errc::AuthFailure, "sealed payload too short");
    std::array<std::uint8_t, crypto_aead_chacha20poly1305_IETF_NPUBBYTES> nonce{};
    std::copy(sealed.begin(), sealed.begin() + 8, nonce.begin() + 4);
    Bytes out(sealed.size() - kSealOverhead);
    unsigned long long mlen = 0;
    if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr, sealed.data() + 8,
                                                  sealed.size() - 8, aad.data(), aad.size(),
                                                  nonce.data(), session.recv_key.data()) != 0) {
        throw Error(Errc::AuthFailure, "AEAD authentication failed");
    }
    out.resize(mlen);
    return out;
}

ReplayCache::ReplayCache(std::uint64_t skew_window_us, std::size_t lru_capacity)
    : skew_(skew_window_us), capacity_(lru_capacity == 0 ? 1 : lru_capacity) {}

std::uint64_t ReplayCache::nonce_digest(std::uint64_t timestamp_us, std::uint32_t sequence) {
    std::uint64_t mixed = static_cast<std::uint64_t>(sequence) ^ timestamp_us;
    std::array<std::uint8_t, 8> buf{};
    put_be64(buf.data(), mixed);
    Digest d = sha256(buf);
    return get_be64(d.data());
}

bool ReplayCache::check(std::uint64_t timestamp_us, std::uint32_t sequence, std::uint64_t now_us) {
    std::uint64_t skew = now_us > timestamp_us ? now_us - timestamp_us : timestamp_us - now_us;
    if (skew > skew_) return false;
    std::uint64_t digest = nonce_digest(timestamp_us, sequence);
    if (auto it = index_.find(digest); it != index_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        return false;
    }
    order_.push_front(digest);
    index_[digest] = order_.begin();
    if (order_.size() > capacity_) {
        index_.erase(order_.back());
        order_.pop_back();
    }
    return true;
}

cbor::Value SignedEphemeral::to_cbor() const {
    return cbor::Value(cbor::Map{{0, ByteView(ephemeral_public)}, {1, ByteView(signature)}});
}

SignedEphemeral SignedEphemeral::from_cbor(const cbor::Value& v) {
    SignedEphemeral e;
    const Bytes& pub = v.at(0).as_bytes();
    const Bytes& sig = v.at(1).as_bytes();
    if (pub.size() != 32 || sig.size() != 64)
        throw Error(Errc::SchemaMismatch, "signed ephemeral has wrong field sizes");
    std::copy(pub.begin(), pub.end(), e.ephemeral_public.begin());
    std::copy(sig.begin(), sig.end(), e.signature.begin());
    return e;
}

SignedEphemeral sign_ephemeral(const SigningKey& key, const Uuid& transaction_id,
                               const X25519Key& ephemeral_public) {
    SignedEphemeral e;
    e.ephemeral_public = ephemeral_public;
    e.signature = sign(key, ephemeral_transcript(transaction_id, ephemeral_public));
    return e;
}

bool verify_ephemeral(const PublicKey& signer, const Uuid& transaction_id, const SignedEphemeral& e) {
    return verify(signer, ephemeral_transcript(transaction_id, e.ephemeral_public), e.signature);
}

SessionKeys accept_ephemeral(Role role, const X25519Keypair& local, const SignedEphemeral& remote,
                             const PublicKey& remote_static, const Uuid& transaction_id) {
    if (!verify_ephemeral(remote_static, transaction_id, remote))
        throw Error(Errc::BadSignature, "ephemeral key signature invalid");
    return make_session(role, local, remote.ephemeral_public, transaction_id);
}

HandshakeResult handshake(const NodeIdentity& initiator, const NodeIdentity& responder,
                          const Uuid& transaction_id, Rng& rng, const HandshakeChannel& channel) {
    auto init_eph = X25519Keypair::generate(rng);
    auto msg1 = cbor::encode(sign_ephemeral(initiator.key, transaction_id, init_eph.public_key).to_cbor());
    auto arrived1 = channel(true, std::move(msg1));
    if (!arrived1) throw Error(Errc::Timeout, "handshake: responder did not receive message 1");

    auto resp_eph = X25519Keypair::generate(rng);
    auto remote1 = SignedEphemeral::from_cbor(cbor::decode(*arrived1));
    HandshakeResult r;
    r.responder = accept_ephemeral(Role::Responder, resp_eph, remote1, initiator.public_key(), transaction_id);

    auto msg2 = cbor::encode(sign_ephemeral(responder.key, transaction_id, resp_eph.public_key).to_cbor());
    auto arrived2 = channel(false, std::move(msg2));
    if (!arrived2) throw Error(Errc::Timeout, "handshake: responder silent");
    auto remote2 = SignedEphemeral::from_cbor(cbor::decode(*arrived2));
    r.initiator = accept_ephemeral(Role::Initiator, init_eph, remote2, responder.public_key(), transaction_id);
    return r;
}

}  // namespace tip::crypto
