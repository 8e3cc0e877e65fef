import random

from hypothesis import given, settings
from hypothesis import strategies as st

import pytest

from ghsim import fieldbus as fb
from ghsim.plc import SlavePlc
from ghsim.scenario import default_scenario
from ghsim.simkernel import EventLog, SimClock


def crc16_bitwise_reference(data: bytes) -> int:
    # independent bit-by-bit CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF,
    # no reflection, no final xor)
    crc = 0xFFFF
    for byte in data:
        for bit in range(7, -1, -1):
            msb = (crc >> 15) & 1
            inbit = (byte >> bit) & 1
            crc = (crc << 1) & 0xFFFF
            if msb ^ inbit:
                crc ^= 0x1021
    return crc


def test_crc_published_check_value():
    assert fb.crc16_ccitt_false(b"123456789") == 0x29B1
    assert crc16_bitwise_reference(b"123456789") == 0x29B1


@given(st.binary(min_size=0, max_size=64))
def test_crc_matches_bitwise_reference(data):
    assert fb.crc16_ccitt_false(data) == crc16_bitwise_reference(data)


def test_empty_payload_ack_is_nine_bytes():
    wire = fb.encode_frame(fb.GwMessage(fb.MSG_ACK, 7))
    assert len(wire) == 9
    assert wire[0] == 0x7E


@given(st.integers(0, 0xFFFF), st.sampled_from([fb.MSG_TELEMETRY, fb.MSG_ACK, fb.MSG_NACK]),
       st.binary(min_size=0, max_size=200))
def test_frame_round_trip(seq, msg_type, payload):
    msg = fb.GwMessage(msg_type, seq, payload)
    assert fb.decode_frame(fb.encode_frame(msg)) == msg


def test_single_bit_corruption_always_rejected():
    msg = fb.GwMessage(fb.MSG_TELEMETRY, 5, b"greenhouse")
    wire = fb.encode_frame(msg)
    for bit in range(len(wire) * 8):
        corrupted = bytearray(wire)
        corrupted[bit // 8] ^= 1 << (bit % 8)
        try:
            fb.decode_frame(bytes(corrupted))
        except fb.FrameError:
            continue
        raise AssertionError(f"flip of bit {bit} was accepted")


def test_truncated_frame_rejected():
    wire = fb.encode_frame(fb.GwMessage(fb.MSG_ACK, 1))
    with pytest.raises(fb.TruncatedFrame):
        fb.decode_frame(wire[:5])


def test_bad_sof_rejected():
    wire = bytearray(fb.encode_frame(fb.GwMessage(fb.MSG_ACK, 1)))
    wire[0] = 0x55
    with pytest.raises(fb.BadSof):
        fb.decode_frame(bytes(wire))


def test_oversize_payload_rejected():
    with pytest.raises(fb.FrameError):
        fb.encode_frame(fb.GwMessage(fb.MSG_TELEMETRY, 0, b"x" * 1025))


def test_telemetry_scaling_examples():
    payload = fb.encode_telemetry([
        {"node_id": 1, "kind": "soil_moisture", "value": 120.0, "age": 3},
    ])
    assert payload[2:4] == (1200).to_bytes(2, "big", signed=True)  # 0.1 scale
    entry = fb.decode_telemetry(payload)[0]
    assert entry["value"] == 120.0 and entry["age"] == 3


def test_telemetry_age_saturates_at_u16():
    payload = fb.encode_telemetry([
        {"node_id": 1, "kind": "soil_moisture", "value": 0.0, "age": 70000},
    ])
    assert fb.decode_telemetry(payload)[0]["age"] == 65535


def test_telemetry_block_round_trip_within_quantum():
    rng = random.Random(11)
    from ghsim import sensors
    block = []
    for node in range(1, 7):
        for k in sensors.ALL_KINDS[:4]:
            block.append({"node_id": node, "kind": k.name,
                          "value": round(rng.uniform(k.lo, min(k.hi, 3000)), 3),
                          "age": rng.randrange(0, 5000)})
    decoded = fb.decode_telemetry(fb.encode_telemetry(block))
    assert len(decoded) == len(block)
    by_key = {(e["node_id"], e["kind"]): e for e in decoded}
    for e in block:
        got = by_key[(e["node_id"], e["kind"])]
        assert abs(got["value"] - e["value"]) <= fb.VALUE_SCALE / 2 + 1e-12
        assert got["age"] == e["age"]


def test_output_word_bit_map():
    # nibble bit i = listed field i, LSB first:
    # addr1 [pump, feed, irrigation, lamp]; addr2 [mains_close, -, -, watchdog]
    assert fb.BIT_PUMP == 0b0000_0001
    assert fb.BIT_FEED_VALVE == 0b0000_0010
    assert fb.BIT_IRRIGATION_VALVE == 0b0000_0100
    assert fb.BIT_LAMP == 0b0000_1000
    assert fb.BIT_MAINS_CLOSE == 0b0001_0000
    assert fb.BIT_WATCHDOG == 0b1000_0000
    word = fb.BIT_PUMP | fb.BIT_IRRIGATION_VALVE
    assert word == 0b0101


def make_slave():
    sc = default_scenario()
    clock = SimClock()
    return SlavePlc(sc, EventLog(clock), sc.fieldbus.watchdog_timeout)


def test_input_word_mirrors_output_when_healthy():
    slave = make_slave()
    link = fb.AsiLink(slave)
    word = fb.BIT_PUMP | fb.BIT_FEED_VALVE | fb.BIT_WATCHDOG
    assert link.cyclic_exchange(word, 1.0) == word


def test_bus_fault_skips_exchange():
    slave = make_slave()
    link = fb.AsiLink(slave)
    link.fault_active = True
    assert link.cyclic_exchange(fb.BIT_PUMP, 1.0) is None
    assert link.skipped == 1


def test_watchdog_deenergizes_after_timeout():
    slave = make_slave()
    link = fb.AsiLink(slave)
    toggle = 0
    # healthy cycles with alternating toggle
    for t in range(1, 5):
        toggle ^= 1
        link.cyclic_exchange(fb.BIT_PUMP | (fb.BIT_WATCHDOG if toggle else 0), float(t))
        slave.tick(float(t), solar=0.0)
    assert slave.actuator_states()["pump"] is True
    # bus fault: exchanges stop; outputs must drop by T + timeout + one cycle
    link.fault_active = True
    for t in range(5, 12):
        link.cyclic_exchange(fb.BIT_PUMP, float(t))
        slave.tick(float(t), solar=0.0)
        if t <= 4 + 3:  # watchdog_timeout = 3 s
            continue
        assert slave.actuator_states()["pump"] is False
    assert slave.watchdog_expired


def test_frame_stream_decoder_reassembles_chunks():
    msgs = [fb.GwMessage(fb.MSG_TELEMETRY, i, bytes([i] * i)) for i in range(5)]
    wire = b"".join(fb.encode_frame(m) for m in msgs)
    dec = fb.FrameStreamDecoder()
    out = []
    for i in range(0, len(wire), 3):
        out += dec.feed(wire[i:i + 3])
    assert out == msgs


def test_frame_stream_decoder_skips_garbage_and_bad_crc():
    good = fb.encode_frame(fb.GwMessage(fb.MSG_ACK, 9))
    bad = bytearray(fb.encode_frame(fb.GwMessage(fb.MSG_ACK, 10)))
    bad[-1] ^= 0xFF
    dec = fb.FrameStreamDecoder()
    out = dec.feed(b"\x00\x11" + bytes(bad) + good)
    assert out == [fb.GwMessage(fb.MSG_ACK, 9)]
    assert dec.bad_frames == 1


def test_mpi_retransmits_then_gives_up_under_corruption():
    from ghsim.simkernel import RngHub
    link = fb.MpiLink(retransmit_limit=3, corrupt_rng=RngHub(1).stream("mpi-corrupt"))
    block = [{"node_id": 1, "kind": "soil_moisture", "value": 50.0, "age": 0}]
    assert link.push_telemetry(block, 900.0) is True
    link.corrupt_active = True
    assert link.push_telemetry(block, 1800.0) is False
    assert link.blocks_lost == 1
    assert link.retransmits == 3
    assert link.last_block_at == 900.0  # stale block retained
