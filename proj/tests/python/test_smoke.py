"""Smoke tests for the python bindings.

Run with the built extension on the path, e.g.:
    cp build/_core*.so python/udt_armor/ && PYTHONPATH=python pytest tests/python
"""

import pytest

import udt_armor as ua

KEY16 = bytes(range(16))


def test_internet_checksum_known_value():
    # 0x0001 + 0x0203 = 0x0204 -> complement 0xFDFB
    assert ua.internet_checksum(bytes([0, 1, 2, 3])) == 0xFDFB
    # odd length pads with a zero byte
    assert ua.internet_checksum(b"\x12") == ua.internet_checksum(b"\x12\x00")


def test_digest_lengths():
    assert ua.digest_length("md5") == 16
    assert ua.digest_length("sha1") == 20
    assert ua.digest_length("sha256") == 32
    with pytest.raises(ValueError):
        ua.digest_length("rot13")


def test_seal_and_open_round_trip():
    packet = ua.encode_data_packet(
        sequence=5,
        boundary="solo",
        in_order=True,
        message_number=1,
        timestamp=0,
        dest_socket_id=9,
        payload=b"hello",
    )
    sealed = ua.seal_datagram(packet, "sha256", "pw", KEY16, "10.0.0.1", "10.0.0.2")
    assert len(sealed) == len(packet) + 2 + 32

    opened = ua.open_datagram(sealed, "sha256", "pw", KEY16, "10.0.0.1", "10.0.0.2")
    assert opened == packet

    # a single flipped bit must be rejected
    tampered = bytearray(sealed)
    tampered[18] ^= 1
    assert ua.open_datagram(bytes(tampered), "sha256", "pw", KEY16,
                            "10.0.0.1", "10.0.0.2") is None

    # so must the wrong key and the wrong address
    assert ua.open_datagram(sealed, "sha256", "nope", KEY16,
                            "10.0.0.1", "10.0.0.2") is None
    assert ua.open_datagram(sealed, "sha256", "pw", KEY16,
                            "10.0.0.3", "10.0.0.2") is None


def test_packet_kind_and_sequence_helpers():
    packet = ua.encode_data_packet(0, "solo", False, 0, 0, 0, b"")
    assert ua.decode_packet_kind(packet) == "data"
    assert ua.next_sequence(2**31 - 1) == 0
    assert ua.sequence_offset(2**31 - 1, 0) == 1


def test_identity_blob_sizes():
    blob = ua.identity_blob("alice", 1000, bytes(16), "md5", "pw")
    assert len(blob) == 48
    blob = ua.identity_blob("alice", 1000, bytes(16), "sha256", "pw")
    assert len(blob) == 64


def test_password_rules():
    assert ua.password_valid("K" * 80)
    assert not ua.password_valid("a" * 129)
    assert not ua.password_valid("bad\x07")


def test_pseudo_header_layout():
    ph = ua.pseudo_header_bytes("192.168.0.1", "10.0.0.2", 0x1234)
    assert ph == bytes([192, 168, 0, 1, 10, 0, 0, 2, 0, 17, 0x12, 0x34])


def test_run_scenario_end_to_end():
    ok, report_json, why = ua.run_scenario(
        "name = py-smoke\n"
        "seed = 3\n"
        "payload_bytes = 65536\n"
        "password = python-smoke-key\n"
        "expect_transfer_ok = true\n"
        "expect_accepted_max = 0\n"
        "inject_count = 200\n"
    )
    assert ok, why
    import json

    report = json.loads(report_json)
    assert report["transfer_ok"] is True
    assert report["injected"] == 200
    assert report["accepted_by_receiver"] == 0
