#include "tip/payload.hpp"

#include <algorithm>

#include "tip/error.hpp"

namespace tip {

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> fixed_bytes(const cbor::Value& v, const char* what) {
    const Bytes& b = v.as_bytes();
    if (b.size() != N)
        throw Error(Errc::SchemaMismatch, std::string(what) + " must be " + std::to_string(N) + " bytes");
    std::array<std::uint8_t, N> out{};
    std::copy(b.begin(), b.end(), out.begin());
    return out;
}

}  // namespace

std::string_view schema_name(DataSchema s) {
    switch (s) {
        case DataSchema::U16: return "u16";
        case DataSchema::U32: return "u32";
        case DataSchema::I32: return "i32";
        case DataSchema::F32: return "f32";
        case DataSchema::F64: return "f64";
        case DataSchema::CborMap: return "cbor_map";
    }
    return "?";
}

DataSchema schema_from_name(std::string_view name) {
    for (std::uint8_t c = 0; c <= 5; ++c) {
        auto s = static_cast<DataSchema>(c);
        if (schema_name(s) == name) return s;
    }
    throw Error(Errc::UnknownSchema, "unknown schema '" + std::string(name) + "'");
}

DataSchema schema_from_code(std::uint64_t code) {
    if (code > 5) throw Error(Errc::UnknownSchema, "unknown schema code " + std::to_string(code));
    return static_cast<DataSchema>(code);
}

bool is_integer_schema(DataSchema s) {
    return s == DataSchema::U16 || s == DataSchema::U32 || s == DataSchema::I32;
}

void Capability::check() const {
    if (id.empty()) throw Error(Errc::EmptyCapability, "capability id is empty");
    if (!(precision >= 0.0 && precision <= 1.0))
        throw Error(Errc::SchemaMismatch, "capability precision outside [0, 1]");
    if (!(rate_hz >= 0.0)) throw Error(Errc::SchemaMismatch, "capability rate is negative");
}

cbor::Value Capability::to_cbor() const {
    return cbor::Value(cbor::Map{{0, id},
                                 {1, static_cast<unsigned>(schema)},
                                 {2, version},
                                 {3, precision},
                                 {4, rate_hz}});
}

Capability Capability::from_cbor(const cbor::Value& v) {
    Capability c;
    c.id = v.at(0).as_text();
    c.schema = schema_from_code(v.at(1).as_uint());
    c.version = v.at(2).as_text();
    c.precision = v.at(3).as_double();
    c.rate_hz = v.at(4).as_double();
    return c;
}

const Capability* NodeRecord::find_capability(std::string_view id) const {
    for (const auto& c : capabilities)
        if (c.id == id) return &c;
    return nullptr;
}

cbor::Value NodeRecord::to_cbor() const {
    cbor::Array addrs(addresses.begin(), addresses.end());
    cbor::Array caps;
    for (const auto& c : capabilities) caps.push_back(c.to_cbor());
    return cbor::Value(cbor::Map{{0, ByteView(node_id.bytes)},
                                 {1, ByteView(signing_public)},
                                 {2, std::move(addrs)},
                                 {3, std::move(caps)},
                                 {4, availability}});
}

NodeRecord NodeRecord::from_cbor(const cbor::Value& v) {
    NodeRecord r;
    r.node_id = Key256::from(v.at(0).as_bytes());
    r.signing_public = fixed_bytes<32>(v.at(1), "signing key");
    for (const auto& a : v.at(2).as_array()) r.addresses.push_back(a.as_text());
    for (const auto& c : v.at(3).as_array()) r.capabilities.push_back(Capability::from_cbor(c));
    if (const auto* av = v.find(4)) r.availability = av->as_double();
    return r;
}

namespace {

Bytes provider_signing_input(const Key256& key, const NodeRecord& provider) {
    static constexpr std::string_view kContext = "tip-provider-v1";
    Bytes msg(kContext.begin(), kContext.end());
    msg.insert(msg.end(), key.bytes.begin(), key.bytes.end());
    cbor::encode_into(msg, provider.to_cbor());
    return msg;
}

}  // namespace

ProviderRecord ProviderRecord::make(const Key256& key, const NodeRecord& provider,
                                    const crypto::SigningKey& signer) {
    ProviderRecord r{key, provider, {}};
    r.signature = crypto::sign(signer, provider_signing_input(key, provider));
    return r;
}

bool ProviderRecord::verify() const {
    return provider.self_consistent() &&
           crypto::verify(provider.signing_public, provider_signing_input(key, provider), signature);
}

cbor::Value ProviderRecord::to_cbor() const {
    return cbor::Value(cbor::Map{{0, ByteView(key.bytes)}, {1, provider.to_cbor()}, {2, ByteView(signature)}});
}

ProviderRecord ProviderRecord::from_cbor(const cbor::Value& v) {
    ProviderRecord r;
    r.key = Key256::from(v.at(0).as_bytes());
    r.provider = NodeRecord::from_cbor(v.at(1));
    r.signature = fixed_bytes<64>(v.at(2), "provider signature");
    return r;
}

Key256 capability_key(std::string_view capability_id) {
    Key256 k;
    k.bytes = crypto::sha256(as_bytes(capability_id));
    return k;
}

}  // namespace tip

namespace tip::payload {

namespace {

using cbor::Map;
using cbor::Value;

template <std::size_t N>
std::array<std::uint8_t, N> fixed(const Value& v, const char* what) {
    return fixed_bytes<N>(v, what);
}

Map number_map(const std::vector<std::pair<std::string, double>>& entries) {
    Map m;
    for (const auto& [k, v] : entries) m.emplace_back(k, v);
    return m;
}

std::vector<std::pair<std::string, double>> read_number_map(const Value& v) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [k, val] : v.as_map()) out.emplace_back(k.as_text(), val.as_double());
    std::sort(out.begin(), out.end());
    return out;
}

Uuid read_uuid(const Value& v) {
    Uuid u;
    u.bytes = fixed<16>(v, "contract id");
    return u;
}

struct EncodeVisitor {
    Map operator()(const DiscoveryAnnounce& m) const {
        Map out;
        out.emplace_back(0, ByteView(m.node_id.bytes));
        cbor::Array caps;
        for (const auto& c : m.capabilities) caps.push_back(c.to_cbor());
        out.emplace_back(1, std::move(caps));
        out.emplace_back(2, cbor::Array(m.addresses.begin(), m.addresses.end()));
        if (m.signing_public) out.emplace_back(3, ByteView(*m.signing_public));
        if (!m.contacts.empty()) {
            cbor::Array contacts;
            for (const auto& c : m.contacts) contacts.push_back(c.to_cbor());
            out.emplace_back(4, std::move(contacts));
        }
        if (!m.providers.empty()) {
            cbor::Array providers;
            for (const auto& p : m.providers) providers.push_back(p.to_cbor());
            out.emplace_back(5, std::move(providers));
        }
        return out;
    }
    Map operator()(const DiscoveryQuery& m) const {
        Map out;
        if (auto* s = std::get_if<std::string>(&m.target)) out.emplace_back(0, *s);
        if (auto* k = std::get_if<Key256>(&m.target)) out.emplace_back(0, ByteView(k->bytes));
        return out;
    }
    Map operator()(const IntentRequest& m) const {
        Map out{{0, m.capability_id},
                {1, static_cast<unsigned>(m.desired_schema)},
                {2, m.params},
                {3, number_map(m.constraints)},
                {4, number_map(m.weights)}};
        if (m.wants_streaming) out.emplace_back(5, true);
        return out;
    }
    Map operator()(const IntentProposal& m) const {
        Map out{{0, m.capability.to_cbor()}, {1, m.measured_rtt_ms}, {2, m.availability}, {3, m.adapter_required}};
        if (m.ephemeral) out.emplace_back(4, m.ephemeral->to_cbor());
        if (m.reject_reason) out.emplace_back(5, *m.reject_reason);
        return out;
    }
    Map operator()(const ContractMessage& m) const {
        Map out{{0, m.body}};
        if (m.signature) out.emplace_back(1, ByteView(*m.signature));
        if (m.ephemeral) out.emplace_back(2, m.ephemeral->to_cbor());
        if (m.reject_reason) out.emplace_back(2, *m.reject_reason);
        return out;
    }
    Map operator()(const DataRequest& m) const {
        return Map{{0, ByteView(m.contract_id.bytes)}, {2, m.params}};
    }
    Map operator()(const DataResponse& m) const {
        Map out{{0, ByteView(m.contract_id.bytes)}, {1, m.value}};
        if (m.schema) out.emplace_back(2, static_cast<unsigned>(*m.schema));
        return out;
    }
    Map operator()(const Ack&) const { return {}; }
};

Message decode_map(wire::PacketType type, const Value& v) {
    using wire::PacketType;
    if (!v.is_map()) throw Error(Errc::SchemaMismatch, "payload is not a CBOR map");
    switch (type) {
        case PacketType::DiscoveryAnnounce: {
            DiscoveryAnnounce m;
            m.node_id = Key256::from(v.at(0).as_bytes());
            for (const auto& c : v.at(1).as_array()) m.capabilities.push_back(Capability::from_cbor(c));
            for (const auto& a : v.at(2).as_array()) m.addresses.push_back(a.as_text());
            if (const auto* k = v.find(3)) m.signing_public = fixed<32>(*k, "signing key");
            if (const auto* cs = v.find(4))
                for (const auto& c : cs->as_array()) m.contacts.push_back(NodeRecord::from_cbor(c));
            if (const auto* ps = v.find(5))
                for (const auto& p : ps->as_array()) m.providers.push_back(ProviderRecord::from_cbor(p));
            return m;
        }
        case PacketType::DiscoveryQuery: {
            DiscoveryQuery m;
            if (const auto* t = v.find(0)) {
                if (t->is_text())
                    m.target = t->as_text();
                else
                    m.target = Key256::from(t->as_bytes());
            }
            return m;
        }
        case PacketType::IntentRequest: {
            IntentRequest m;
            m.capability_id = v.at(0).as_text();
            m.desired_schema = schema_from_code(v.at(1).as_uint());
            m.params = v.at(2).as_map();
            for (const auto& [k, _] : m.params) (void)k.as_text();
            m.constraints = read_number_map(v.at(3));
            m.weights = read_number_map(v.at(4));
            if (const auto* s = v.find(5)) m.wants_streaming = s->as_bool();
            return m;
        }
        case PacketType::IntentProposal: {
            IntentProposal m;
            m.capability = Capability::from_cbor(v.at(0));
            m.measured_rtt_ms = v.at(1).as_double();
            m.availability = v.at(2).as_double();
            m.adapter_required = v.at(3).as_bool();
            if (const auto* e = v.find(4)) m.ephemeral = crypto::SignedEphemeral::from_cbor(*e);
            if (const auto* r = v.find(5)) m.reject_reason = r->as_text();
            return m;
        }
        case PacketType::ContractAccept:
        case PacketType::ContractSigned: {
            ContractMessage m;
            m.body = v.at(0).as_bytes();
            if (const auto* s = v.find(1)) m.signature = fixed<64>(*s, "contract signature");
            if (const auto* extra = v.find(2)) {
                if (type == PacketType::ContractAccept)
                    m.ephemeral = crypto::SignedEphemeral::from_cbor(*extra);
                else
                    m.reject_reason = extra->as_text();
            }
            return m;
        }
        case PacketType::DataRequest: {
            DataRequest m;
            m.contract_id = read_uuid(v.at(0));
            if (const auto* p = v.find(2)) m.params = *p;
            return m;
        }
        case PacketType::DataResponse: {
            DataResponse m;
            m.contract_id = read_uuid(v.at(0));
            m.value = v.at(1);
            if (const auto* s = v.find(2)) m.schema = schema_from_code(s->as_uint());
            return m;
        }
    }
    throw Error(Errc::UnknownPacketType, "unknown packet type");
}

}  // namespace

bool DiscoveryAnnounce::operator==(const DiscoveryAnnounce& o) const {
    return encode_payload(*this) == encode_payload(o);
}
bool IntentRequest::operator==(const IntentRequest& o) const {
    return encode_payload(*this) == encode_payload(o);
}
bool IntentProposal::operator==(const IntentProposal& o) const {
    return encode_payload(*this) == encode_payload(o);
}
bool ContractMessage::operator==(const ContractMessage& o) const {
    return encode_payload(*this) == encode_payload(o);
}

Bytes encode_payload(const Message& msg, const std::optional<crypto::PublicKey>& sender_key) {
    if (std::holds_alternative<Ack>(msg) && !sender_key) return {};
    Map m = std::visit(EncodeVisitor{}, msg);
    if (sender_key) m.emplace_back(kSenderKeyField, ByteView(*sender_key));
    return cbor::encode(Value(std::move(m)));
}

Message decode_payload(wire::PacketType type, ByteView bytes) {
    if (type == wire::PacketType::DataResponse) {
        if (bytes.empty()) return Ack{};
        Value v = cbor::decode(bytes);
        if (v.is_map() && v.find(0) == nullptr) return Ack{};
        return decode_map(type, v);
    }
    return decode_map(type, cbor::decode(bytes));
}

std::optional<crypto::PublicKey> peek_sender_key(ByteView bytes) {
    if (bytes.empty()) return std::nullopt;
    try {
        Value v = cbor::decode(bytes);
        const Value* k = v.find(kSenderKeyField);
        if (!k || !k->is_bytes() || k->as_bytes().size() != 32) return std::nullopt;
        return fixed<32>(*k, "sender key");
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace tip::payload
