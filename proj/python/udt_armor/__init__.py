"""udt-armor: authenticated UDT-style transport primitives."""

from ._core import (
    decode_packet_kind,
    digest_length,
    encode_data_packet,
    identity_blob,
    internet_checksum,
    next_sequence,
    open_datagram,
    password_valid,
    pseudo_header_bytes,
    run_scenario,
    seal_datagram,
    sequence_offset,
)

__all__ = [
    "decode_packet_kind",
    "digest_length",
    "encode_data_packet",
    "identity_blob",
    "internet_checksum",
    "next_sequence",
    "open_datagram",
    "password_valid",
    "pseudo_header_bytes",
    "run_scenario",
    "seal_datagram",
    "sequence_offset",
]
