#include "tip/dnssd.hpp"

#include <algorithm>
#include <map>

#include "tip/cbor.hpp"
#include "tip/error.hpp"

namespace tip::dnssd {

namespace {

constexpr std::string_view kSignDomain = "tip-mdns-v1";
constexpr std::uint64_t kKindAnnounce = 1;
constexpr std::uint64_t kKindQuery = 2;

constexpr std::uint16_t kTypeTxt = 16;
constexpr std::uint16_t kTypePtr = 12;
constexpr std::uint16_t kTypeSrv = 33;
constexpr std::uint16_t kClassIn = 1;
constexpr std::uint16_t kCacheFlush = 0x8000;

std::uint16_t port_of(const std::string& address) {
    auto colon = address.rfind(':');
    if (colon == std::string::npos || address.rfind("udp://", 0) != 0) return 0;
    try {
        return static_cast<std::uint16_t>(std::stoul(address.substr(colon + 1)));
    } catch (const std::exception&) {
        return 0;
    }
}

cbor::Value services_to_cbor(const std::vector<ServiceInstance>& services) {
    cbor::Array arr;
    for (const auto& s : services) {
        cbor::Map txt;
        for (const auto& [k, v] : s.txt) txt.emplace_back(cbor::Value(k), cbor::Value(v));
        arr.push_back(cbor::canonical_map({{cbor::Value(0), cbor::Value(s.instance)},
                                           {cbor::Value(1), cbor::Value(s.host)},
                                           {cbor::Value(2), cbor::Value(std::uint64_t{s.port})},
                                           {cbor::Value(3), cbor::canonical_map(std::move(txt))}}));
    }
    return cbor::Value(std::move(arr));
}

std::vector<ServiceInstance> services_from_cbor(const cbor::Value& v) {
    std::vector<ServiceInstance> out;
    for (const auto& item : v.as_array()) {
        ServiceInstance s;
        s.instance = item.at(0).as_text();
        s.host = item.at(1).as_text();
        s.port = static_cast<std::uint16_t>(item.at(2).as_uint());
        for (const auto& [k, val] : item.at(3).as_map()) s.txt.emplace_back(k.as_text(), val.as_text());
        // The canonical map reorders keys; restore the conventional TXT order.
        auto rank = [](const std::string& key) {
            static const std::string order[] = {"cap", "schema", "ver", "sec"};
            return static_cast<std::size_t>(std::find(std::begin(order), std::end(order), key) - std::begin(order));
        };
        std::stable_sort(s.txt.begin(), s.txt.end(),
                         [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
        out.push_back(std::move(s));
    }
    return out;
}

Bytes signed_body(const cbor::Value& node, const cbor::Value& services) {
    auto domain = as_bytes(kSignDomain);
    Bytes msg(domain.begin(), domain.end());
    append(msg, cbor::encode(cbor::canonical_map(
                    {{cbor::Value(0), cbor::Value(kKindAnnounce)}, {cbor::Value(1), node}, {cbor::Value(2), services}})));
    return msg;
}

// --- DNS wire ---------------------------------------------------------------

void put_name(Bytes& out, const std::string& name) {
    std::size_t start = 0;
    while (start < name.size()) {
        auto dot = name.find('.', start);
        if (dot == std::string::npos) dot = name.size();
        std::size_t len = dot - start;
        if (len == 0 || len > 63) throw Error(Errc::MalformedDns, "bad DNS label in " + name);
        out.push_back(static_cast<std::uint8_t>(len));
        out.insert(out.end(), name.begin() + static_cast<std::ptrdiff_t>(start),
                   name.begin() + static_cast<std::ptrdiff_t>(dot));
        start = dot + 1;
    }
    out.push_back(0);
}

void put16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& out, std::uint32_t v) {
    put16(out, static_cast<std::uint16_t>(v >> 16));
    put16(out, static_cast<std::uint16_t>(v));
}

void put_record(Bytes& out, const std::string& name, std::uint16_t type, std::uint16_t cls, std::uint32_t ttl,
                const Bytes& rdata) {
    put_name(out, name);
    put16(out, type);
    put16(out, cls);
    put32(out, ttl);
    put16(out, static_cast<std::uint16_t>(rdata.size()));
    append(out, rdata);
}

[[noreturn]] void malformed(const char* why) { throw Error(Errc::MalformedDns, std::string("malformed DNS: ") + why); }

struct Reader {
    ByteView m;
    std::size_t pos = 0;

    std::uint16_t u16() {
        if (pos + 2 > m.size()) malformed("truncated");
        std::uint16_t v = static_cast<std::uint16_t>(m[pos] << 8 | m[pos + 1]);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t hi = u16();
        return hi << 16 | u16();
    }
    std::string name() { return name_at(pos, 0, true); }

    std::string name_at(std::size_t& p, int depth, bool advance) {
        if (depth > 16) malformed("compression loop");
        std::string out;
        std::size_t cur = p;
        for (;;) {
            if (cur >= m.size()) malformed("truncated name");
            std::uint8_t len = m[cur];
            if ((len & 0xC0) == 0xC0) {
                if (cur + 1 >= m.size()) malformed("truncated pointer");
                std::size_t target = static_cast<std::size_t>((len & 0x3F) << 8 | m[cur + 1]);
                if (target >= cur) malformed("forward pointer");
                std::string rest = name_at(target, depth + 1, false);
                if (!out.empty() && !rest.empty()) out += '.';
                out += rest;
                cur += 2;
                break;
            }
            if (len & 0xC0) malformed("reserved label type");
            ++cur;
            if (len == 0) break;
            if (cur + len > m.size()) malformed("truncated label");
            if (!out.empty()) out += '.';
            out.append(reinterpret_cast<const char*>(m.data() + cur), len);
            cur += len;
        }
        if (advance) p = cur;
        return out;
    }
};

}  // namespace

std::optional<std::string> ServiceInstance::txt_value(std::string_view key) const {
    for (const auto& [k, v] : txt)
        if (k == key) return v;
    return std::nullopt;
}

std::vector<ServiceInstance> service_instances(const NodeRecord& node) {
    std::string prefix = to_hex(ByteView(node.node_id.bytes.data(), 8));
    std::uint16_t port = port_of(node.primary_address());
    std::vector<ServiceInstance> out;
    for (std::size_t i = 0; i < node.capabilities.size(); ++i) {
        const auto& c = node.capabilities[i];
        ServiceInstance s;
        s.instance = (i == 0 ? prefix : prefix + "-" + std::to_string(i)) + "." + std::string(kServiceType);
        s.host = prefix + ".local";
        s.port = port;
        s.txt = {{"cap", c.id},
                 {"schema", std::to_string(static_cast<int>(c.schema))},
                 {"ver", c.version},
                 {"sec", "1"}};
        out.push_back(std::move(s));
    }
    return out;
}

Bytes encode_announcement(const NodeRecord& node, const crypto::SigningKey& key) {
    cbor::Value n = node.to_cbor();
    cbor::Value s = services_to_cbor(service_instances(node));
    auto sig = crypto::sign(key, signed_body(n, s));
    return cbor::encode(cbor::canonical_map({{cbor::Value(0), cbor::Value(kKindAnnounce)},
                                             {cbor::Value(1), n},
                                             {cbor::Value(2), s},
                                             {cbor::Value(3), cbor::Value(Bytes(sig.begin(), sig.end()))}}));
}

std::optional<Announcement> decode_announcement(ByteView bytes) {
    try {
        cbor::Value v = cbor::decode(bytes);
        if (!v.is_map() || v.at(0).as_uint() != kKindAnnounce) return std::nullopt;
        const Bytes& sig_bytes = v.at(3).as_bytes();
        if (sig_bytes.size() != 64) return std::nullopt;
        crypto::Signature sig;
        std::copy(sig_bytes.begin(), sig_bytes.end(), sig.begin());
        Announcement a;
        a.node = NodeRecord::from_cbor(v.at(1));
        a.services = services_from_cbor(v.at(2));
        if (!a.node.self_consistent()) return std::nullopt;
        if (!crypto::verify(a.node.signing_public, signed_body(v.at(1), v.at(2)), sig)) return std::nullopt;
        return a;
    } catch (const Error&) {
        return std::nullopt;
    }
}

Bytes encode_query(const std::string& capability_id) {
    return cbor::encode(
        cbor::canonical_map({{cbor::Value(0), cbor::Value(kKindQuery)}, {cbor::Value(1), cbor::Value(capability_id)}}));
}

std::optional<std::string> decode_query(ByteView bytes) {
    try {
        cbor::Value v = cbor::decode(bytes);
        if (!v.is_map() || v.at(0).as_uint() != kKindQuery) return std::nullopt;
        return v.at(1).as_text();
    } catch (const Error&) {
        return std::nullopt;
    }
}

Bytes encode_dns_response(const std::vector<ServiceInstance>& services, std::uint32_t ttl_s) {
    Bytes out;
    put16(out, 0);       // id
    put16(out, 0x8400);  // response, authoritative
    put16(out, 0);       // questions
    put16(out, static_cast<std::uint16_t>(services.size() * 3));
    put16(out, 0);
    put16(out, 0);
    for (const auto& s : services) {
        Bytes ptr;
        put_name(ptr, s.instance);
        put_record(out, std::string(kServiceType), kTypePtr, kClassIn, ttl_s, ptr);

        Bytes srv;
        put16(srv, 0);  // priority
        put16(srv, 0);  // weight
        put16(srv, s.port);
        put_name(srv, s.host);
        put_record(out, s.instance, kTypeSrv, kClassIn | kCacheFlush, ttl_s, srv);

        Bytes txt;
        for (const auto& [k, v] : s.txt) {
            std::string entry = k + "=" + v;
            if (entry.size() > 255) throw Error(Errc::MalformedDns, "TXT entry longer than 255 bytes");
            txt.push_back(static_cast<std::uint8_t>(entry.size()));
            append(txt, as_bytes(entry));
        }
        put_record(out, s.instance, kTypeTxt, kClassIn | kCacheFlush, ttl_s, txt);
    }
    return out;
}

std::vector<ServiceInstance> decode_dns_response(ByteView message) {
    Reader r{message};
    r.u16();
    std::uint16_t flags = r.u16();
    if (!(flags & 0x8000)) malformed("not a response");
    std::uint16_t qd = r.u16(), an = r.u16(), ns = r.u16(), ar = r.u16();
    for (int i = 0; i < qd; ++i) {
        r.name();
        r.u16();
        r.u16();
    }
    std::vector<std::string> order;
    std::map<std::string, ServiceInstance> by_name;
    int records = an + ns + ar;
    for (int i = 0; i < records; ++i) {
        std::string name = r.name();
        std::uint16_t type = r.u16();
        r.u16();
        r.u32();
        std::uint16_t len = r.u16();
        if (r.pos + len > message.size()) malformed("truncated rdata");
        std::size_t end = r.pos + len;
        auto instance_for = [&](const std::string& n) -> ServiceInstance& {
            auto [it, fresh] = by_name.try_emplace(n);
            if (fresh) {
                it->second.instance = n;
                order.push_back(n);
            }
            return it->second;
        };
        if (type == kTypePtr && name == kServiceType) {
            instance_for(r.name());
        } else if (type == kTypeSrv) {
            auto& s = instance_for(name);
            r.u16();
            r.u16();
            s.port = r.u16();
            s.host = r.name();
        } else if (type == kTypeTxt) {
            auto& s = instance_for(name);
            s.txt.clear();
            while (r.pos < end) {
                std::size_t n = message[r.pos++];
                if (r.pos + n > end) malformed("TXT string overruns rdata");
                std::string entry(reinterpret_cast<const char*>(message.data() + r.pos), n);
                r.pos += n;
                auto eq = entry.find('=');
                if (eq == std::string::npos)
                    s.txt.emplace_back(entry, "");
                else
                    s.txt.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
            }
        }
        if (r.pos > end) malformed("rdata overrun");
        r.pos = end;
    }
    std::vector<ServiceInstance> out;
    for (const auto& n : order) out.push_back(by_name[n]);
    return out;
}

}  // namespace tip::dnssd
