#include "tip/error.hpp"

namespace tip {

std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::Ok: return "Ok";
        case Errc::TooShort: return "TooShort";
        case Errc::BadMagic: return "BadMagic";
        case Errc::UnsupportedVersion: return "UnsupportedVersion";
        case Errc::UnknownPacketType: return "UnknownPacketType";
        case Errc::ChecksumMismatch: return "ChecksumMismatch";
        case Errc::BadSignature: return "BadSignature";
        case Errc::ReplayDetected: return "ReplayDetected";
        case Errc::Expired: return "Expired";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::PayloadTooLarge: return "PayloadTooLarge";
        case Errc::CompressionUnsupported: return "CompressionUnsupported";
        case Errc::EmptyCapability: return "EmptyCapability";
        case Errc::SchemaMismatch: return "SchemaMismatch";
        case Errc::MalformedCbor: return "MalformedCbor";
        case Errc::LowOrderPoint: return "LowOrderPoint";
        case Errc::AuthFailure: return "AuthFailure";
        case Errc::Timeout: return "Timeout";
        case Errc::SelfReference: return "SelfReference";
        case Errc::NotFound: return "NotFound";
        case Errc::NoPeers: return "NoPeers";
        case Errc::MalformedDns: return "MalformedDns";
        case Errc::NegativeRtt: return "NegativeRtt";
        case Errc::ClockRegression: return "ClockRegression";
        case Errc::CapabilityMismatch: return "CapabilityMismatch";
        case Errc::NoCandidates: return "NoCandidates";
        case Errc::NotReciprocal: return "NotReciprocal";
        case Errc::NonPositiveEntry: return "NonPositiveEntry";
        case Errc::InvalidWeights: return "InvalidWeights";
        case Errc::TomlSyntax: return "TomlSyntax";
        case Errc::MissingField: return "MissingField";
        case Errc::UnknownSchema: return "UnknownSchema";
        case Errc::LexError: return "LexError";
        case Errc::UnexpectedToken: return "UnexpectedToken";
        case Errc::UnknownIdentifier: return "UnknownIdentifier";
        case Errc::TrailingInput: return "TrailingInput";
        case Errc::DepthExceeded: return "DepthExceeded";
        case Errc::Trap: return "Trap";
        case Errc::TargetOverflow: return "TargetOverflow";
        case Errc::MalformedResult: return "MalformedResult";
        case Errc::NoAdapter: return "NoAdapter";
        case Errc::DuplicateAdapter: return "DuplicateAdapter";
        case Errc::InvalidModule: return "InvalidModule";
        case Errc::NoProviders: return "NoProviders";
        case Errc::AllCandidatesRejected: return "AllCandidatesRejected";
        case Errc::ProposalTimeout: return "ProposalTimeout";
        case Errc::ContractRejected: return "ContractRejected";
        case Errc::ContractExpired: return "ContractExpired";
        case Errc::TranslationError: return "TranslationError";
        case Errc::NoAlternateProvider: return "NoAlternateProvider";
        case Errc::DuplicateCapabilityId: return "DuplicateCapabilityId";
        case Errc::IllegalTransition: return "IllegalTransition";
        case Errc::ProviderError: return "ProviderError";
        case Errc::SessionNotActive: return "SessionNotActive";
        case Errc::NotCoap: return "NotCoap";
        case Errc::WrongPath: return "WrongPath";
        case Errc::WrongContentFormat: return "WrongContentFormat";
        case Errc::NoPayload: return "NoPayload";
        case Errc::UnknownNode: return "UnknownNode";
        case Errc::BindFailure: return "BindFailure";
        case Errc::OversizedDatagram: return "OversizedDatagram";
        case Errc::MissingRegister: return "MissingRegister";
        case Errc::InvalidValveState: return "InvalidValveState";
        case Errc::ScenarioAssertionFailure: return "ScenarioAssertionFailure";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace tip
