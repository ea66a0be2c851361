#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tip {

/// Error codes shared by every module. The numeric values of the wire
/// validation codes (1..9) are stable; the edge client and the golden-vector
/// manifest refer to them by number.
enum class Errc : int {
    Ok = 0,
    // wire_codec
    TooShort = 1,
    BadMagic = 2,
    UnsupportedVersion = 3,
    UnknownPacketType = 4,
    ChecksumMismatch = 5,
    BadSignature = 6,
    ReplayDetected = 7,
    Expired = 8,
    LengthMismatch = 9,
    PayloadTooLarge = 10,
    CompressionUnsupported = 11,
    EmptyCapability = 12,
    SchemaMismatch = 13,
    MalformedCbor = 14,
    // crypto_envelope
    LowOrderPoint = 20,
    AuthFailure = 21,
    Timeout = 22,
    // discovery
    SelfReference = 30,
    NotFound = 31,
    NoPeers = 32,
    MalformedDns = 33,
    // negotiation
    NegativeRtt = 40,
    ClockRegression = 41,
    CapabilityMismatch = 42,
    NoCandidates = 43,
    NotReciprocal = 44,
    NonPositiveEntry = 45,
    InvalidWeights = 46,
    // adapter_compiler
    TomlSyntax = 50,
    MissingField = 51,
    UnknownSchema = 52,
    LexError = 53,
    UnexpectedToken = 54,
    UnknownIdentifier = 55,
    TrailingInput = 56,
    DepthExceeded = 57,
    Trap = 58,
    TargetOverflow = 59,
    MalformedResult = 60,
    NoAdapter = 61,
    DuplicateAdapter = 62,
    InvalidModule = 63,
    // orchestrator
    NoProviders = 70,
    AllCandidatesRejected = 71,
    ProposalTimeout = 72,
    ContractRejected = 73,
    ContractExpired = 74,
    TranslationError = 75,
    NoAlternateProvider = 76,
    DuplicateCapabilityId = 77,
    IllegalTransition = 78,
    ProviderError = 79,
    SessionNotActive = 80,
    // transport
    NotCoap = 90,
    WrongPath = 91,
    WrongContentFormat = 92,
    NoPayload = 93,
    UnknownNode = 94,
    BindFailure = 95,
    OversizedDatagram = 96,
    // fieldbus_demo
    MissingRegister = 100,
    InvalidValveState = 101,
    ScenarioAssertionFailure = 102,
    // cli / config
    ConfigError = 110,
    IoError = 111,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    explicit Error(Errc code) : Error(code, std::string(errc_name(code))) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace tip
