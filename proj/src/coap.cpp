#include "tip/coap.hpp"

#include <algorithm>

#include "tip/error.hpp"

namespace tip::coap {

namespace {

[[noreturn]] void not_coap(const std::string& why) { throw Error(Errc::NotCoap, "not a CoAP message: " + why); }

// Option delta/length nibble with its extended bytes.
void put_nibble_ext(std::uint32_t value, std::uint8_t& nibble, Bytes& ext) {
    if (value < 13) {
        nibble = static_cast<std::uint8_t>(value);
    } else if (value < 269) {
        nibble = 13;
        ext.push_back(static_cast<std::uint8_t>(value - 13));
    } else {
        nibble = 14;
        std::uint32_t v = value - 269;
        ext.push_back(static_cast<std::uint8_t>(v >> 8));
        ext.push_back(static_cast<std::uint8_t>(v));
    }
}

}  // namespace

std::optional<Bytes> Message::option(std::uint16_t number) const {
    for (const auto& o : options)
        if (o.number == number) return o.value;
    return std::nullopt;
}

Bytes encode_uint_option(std::uint32_t v) {
    Bytes out;
    for (int shift = 24; shift >= 0; shift -= 8) {
        auto b = static_cast<std::uint8_t>(v >> shift);
        if (!out.empty() || b != 0) out.push_back(b);
    }
    return out;
}

std::uint32_t decode_uint_option(ByteView v) {
    std::uint32_t out = 0;
    for (auto b : v) out = (out << 8) | b;
    return out;
}

Bytes encode(const Message& m) {
    if (m.token.size() > 8) throw Error(Errc::NotCoap, "token longer than 8 bytes");
    Bytes out;
    out.push_back(static_cast<std::uint8_t>((m.version & 0x3) << 6 | (static_cast<std::uint8_t>(m.type) & 0x3) << 4 |
                                            (m.token.size() & 0xF)));
    out.push_back(m.code);
    out.push_back(static_cast<std::uint8_t>(m.message_id >> 8));
    out.push_back(static_cast<std::uint8_t>(m.message_id));
    out.insert(out.end(), m.token.begin(), m.token.end());

    std::vector<Option> opts = m.options;
    std::stable_sort(opts.begin(), opts.end(), [](const Option& a, const Option& b) { return a.number < b.number; });
    std::uint16_t last = 0;
    for (const auto& o : opts) {
        Bytes ext;
        std::uint8_t delta_nibble = 0, len_nibble = 0;
        put_nibble_ext(o.number - last, delta_nibble, ext);
        put_nibble_ext(static_cast<std::uint32_t>(o.value.size()), len_nibble, ext);
        out.push_back(static_cast<std::uint8_t>(delta_nibble << 4 | len_nibble));
        out.insert(out.end(), ext.begin(), ext.end());
        out.insert(out.end(), o.value.begin(), o.value.end());
        last = o.number;
    }
    if (!m.payload.empty()) {
        out.push_back(kPayloadMarker);
        out.insert(out.end(), m.payload.begin(), m.payload.end());
    }
    return out;
}

Message decode(ByteView d) {
    if (d.size() < 4) not_coap("shorter than the 4-byte header");
    Message m;
    m.version = d[0] >> 6;
    if (m.version != 1) not_coap("version is not 1");
    m.type = static_cast<Type>((d[0] >> 4) & 0x3);
    std::size_t tkl = d[0] & 0xF;
    if (tkl > 8) not_coap("token length above 8");
    m.code = d[1];
    m.message_id = static_cast<std::uint16_t>(d[2] << 8 | d[3]);
    std::size_t pos = 4;
    if (d.size() < pos + tkl) not_coap("truncated token");
    m.token.assign(d.begin() + 4, d.begin() + 4 + static_cast<std::ptrdiff_t>(tkl));
    pos += tkl;

    std::uint32_t number = 0;
    auto read_ext = [&](std::uint8_t nibble) -> std::uint32_t {
        if (nibble < 13) return nibble;
        if (nibble == 13) {
            if (pos >= d.size()) not_coap("truncated option");
            return 13u + d[pos++];
        }
        if (nibble == 14) {
            if (pos + 1 >= d.size()) not_coap("truncated option");
            std::uint32_t v = (static_cast<std::uint32_t>(d[pos]) << 8) | d[pos + 1];
            pos += 2;
            return 269u + v;
        }
        not_coap("reserved option nibble 15");
    };
    while (pos < d.size()) {
        if (d[pos] == kPayloadMarker) {
            ++pos;
            if (pos == d.size()) not_coap("payload marker followed by empty payload");
            m.payload.assign(d.begin() + static_cast<std::ptrdiff_t>(pos), d.end());
            return m;
        }
        std::uint8_t head = d[pos++];
        std::uint32_t delta = read_ext(head >> 4);
        std::uint32_t len = read_ext(head & 0xF);
        number += delta;
        if (number > 0xFFFF) not_coap("option number overflow");
        if (pos + len > d.size()) not_coap("truncated option value");
        m.options.push_back(Option{static_cast<std::uint16_t>(number),
                                   Bytes(d.begin() + static_cast<std::ptrdiff_t>(pos),
                                         d.begin() + static_cast<std::ptrdiff_t>(pos + len))});
        pos += len;
    }
    return m;
}

Bytes wrap(ByteView tip_packet, Rng& rng) {
    Message m;
    m.type = Type::Confirmable;
    m.code = kCodePost;
    m.message_id = static_cast<std::uint16_t>(rng.next());
    auto token = rng.bytes<4>();
    m.token.assign(token.begin(), token.end());
    m.options.push_back(Option{kOptionUriPath, Bytes{'t', 'i', 'p'}});
    m.options.push_back(Option{kOptionContentFormat, encode_uint_option(kOctetStream)});
    m.payload.assign(tip_packet.begin(), tip_packet.end());
    return encode(m);
}

Bytes unwrap(ByteView datagram) {
    Message m = decode(datagram);
    if (m.code != kCodePost && m.code != kCodeContent) not_coap("unexpected method/response code");
    std::string path;
    int segments = 0;
    for (const auto& o : m.options) {
        if (o.number != kOptionUriPath) continue;
        ++segments;
        path.assign(o.value.begin(), o.value.end());
    }
    if (segments != 1 || path != "tip") throw Error(Errc::WrongPath, "Uri-Path is not /tip");
    auto cf = m.option(kOptionContentFormat);
    if (!cf || decode_uint_option(*cf) != kOctetStream)
        throw Error(Errc::WrongContentFormat, "Content-Format is not application/octet-stream (42)");
    if (m.payload.empty()) throw Error(Errc::NoPayload, "CoAP message carries no payload");
    return m.payload;
}

}  // namespace tip::coap
