"""Python access to the TIP core: wire codec, signatures, scoring, adapters,
the fieldbus mapping, golden vectors and the scenario simulator."""

from ._tip import (  # noqa: F401
    HEADER_SIZE,
    MAGIC,
    VERSION,
    Identity,
    TipError,
    ahp_weights,
    build_packet,
    capability_hash,
    compile_adapter,
    confidence,
    crc32,
    decay_reputation,
    decode_header,
    encode_header,
    error_name,
    factory_script,
    golden_vectors,
    map_registers,
    proximity_utility,
    run_adapter,
    run_scenario,
    validate,
    verify,
)


def error_code(exc):
    """(name, numeric code) carried by a TipError."""
    name, code, _ = exc.args
    return name, code
