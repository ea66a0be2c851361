#pragma once

// Golden wire vectors: fixed keys and seeds, one packet per type plus
// encrypted, CoAP-wrapped and deliberately broken variants, and a JSON
// manifest listing every expected header field and verdict.

#include <string>
#include <vector>

#include "tip/error.hpp"
#include "tip/wire.hpp"

namespace tip::vectors {

struct GoldenVector {
    std::string name;
    Bytes frame;  // raw TIP bytes
    Bytes coap;   // the same frame as a CoAP POST /tip
    Errc expected = Errc::Ok;
    bool header_decodes = true;  // header fields below are meaningful
    wire::PacketHeader header;
    bool encrypted = false;
};

struct VectorSet {
    crypto::PublicKey signer{};
    crypto::PublicKey wrong_signer{};
    std::uint64_t validate_now_us = 0;
    crypto::SessionKeys session;  // opens the encrypted vector (responder view)
    std::vector<GoldenVector> vectors;

    std::string manifest_json() const;
};

/// Deterministic: every call returns byte-identical vectors.
VectorSet build();

/// Writes <name>.bin, <name>.coap and manifest.json into `dir` (created if
/// needed). Throws IoError.
void write(const VectorSet& set, const std::string& dir);

}  // namespace tip::vectors
