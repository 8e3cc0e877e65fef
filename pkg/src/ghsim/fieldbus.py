"""Wire protocols for the two control-side links.

Link 1 (gateway <-> master): framed telemetry/command messages. Frame layout,
big-endian throughout:

    SOF 0x7E | version u8 | seq u16 | msg_type u8 | payload_len u16
    | payload | crc u16

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, unreflected) over
version..payload. A receiver never surfaces a frame with a bad CRC; it
answers Nack and the sender retransmits up to a bounded number of times.

Link 2 (master <-> slave): a cyclic exchange of two 4-bit nibbles packed in
one byte, one nibble per slave address, plus a mirrored confirmation word.
The master toggles a watchdog bit every cycle; a slave that misses toggles
for longer than the watchdog timeout de-energizes every output.

Both layouts are normative and documented bit-exactly in PROTOCOL.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

SOF = 0x7E
PROTOCOL_VERSION = 1

MSG_TELEMETRY = 0x01
MSG_ACK = 0x02
MSG_NACK = 0x03

MAX_PAYLOAD = 1024
VALUE_SCALE = 0.1          # engineering units per telemetry count
FRAME_OVERHEAD = 9         # sof + version + seq + type + len + crc

# Output/input word bit map: nibble bit i corresponds to listed field i, LSB
# first. Address 1 = bits 0..3, address 2 = bits 4..7.
BIT_PUMP = 1 << 0
BIT_FEED_VALVE = 1 << 1
BIT_IRRIGATION_VALVE = 1 << 2
BIT_LAMP = 1 << 3
BIT_MAINS_CLOSE = 1 << 4
BIT_WATCHDOG = 1 << 7

ACTUATOR_BITS = {
    "pump": BIT_PUMP,
    "feed_valve": BIT_FEED_VALVE,
    "irrigation_valve": BIT_IRRIGATION_VALVE,
    "lamp": BIT_LAMP,
    "mains_close": BIT_MAINS_CLOSE,
}


class FrameError(Exception):
    pass


class BadSof(FrameError):
    pass


class BadCrc(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


def _crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _crc_table()


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE; check value: crc16(b"123456789") == 0x29B1."""
    crc = 0xFFFF
    table = _CRC_TABLE
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ b) & 0xFF]
    return crc


@dataclass(frozen=True)
class GwMessage:
    msg_type: int
    seq: int
    payload: bytes = b""
    version: int = PROTOCOL_VERSION


def encode_frame(msg: GwMessage) -> bytes:
    if len(msg.payload) > MAX_PAYLOAD:
        raise FrameError(f"payload {len(msg.payload)} exceeds {MAX_PAYLOAD} bytes")
    body = struct.pack(">BHBH", msg.version, msg.seq & 0xFFFF, msg.msg_type,
                       len(msg.payload)) + msg.payload
    crc = crc16_ccitt_false(body)
    return bytes([SOF]) + body + struct.pack(">H", crc)


def decode_frame(data: bytes) -> GwMessage:
    if len(data) < FRAME_OVERHEAD:
        raise TruncatedFrame(f"{len(data)} bytes, need at least {FRAME_OVERHEAD}")
    if data[0] != SOF:
        raise BadSof(f"expected 0x{SOF:02X}, got 0x{data[0]:02X}")
    version, seq, msg_type, payload_len = struct.unpack_from(">BHBH", data, 1)
    end = 7 + payload_len
    if len(data) < end + 2:
        raise TruncatedFrame(f"payload_len {payload_len} but only {len(data)} bytes on the wire")
    payload = data[7:end]
    (crc_rx,) = struct.unpack_from(">H", data, end)
    crc = crc16_ccitt_false(data[1:end])
    if crc != crc_rx:
        raise BadCrc(f"computed 0x{crc:04X}, received 0x{crc_rx:04X}")
    return GwMessage(msg_type, seq, payload, version)


# -- telemetry payload --------------------------------------------------------
# Entry layout, repeated: node_id u8 | kind u8 | value i16 (VALUE_SCALE per
# count, saturating) | age u16 seconds (saturating).

from . import sensors  # noqa: E402


def encode_telemetry(block: list[dict]) -> bytes:
    entries = sorted(block, key=lambda e: (e["node_id"], sensors.BY_NAME[e["kind"]].code))
    out = bytearray()
    for e in entries:
        counts = round(e["value"] / VALUE_SCALE)
        counts = max(-32768, min(32767, counts))
        age = int(e["age"])
        age = max(0, min(0xFFFF, age))
        out += struct.pack(">BBhH", e["node_id"], sensors.BY_NAME[e["kind"]].code, counts, age)
    return bytes(out)


def decode_telemetry(payload: bytes) -> list[dict]:
    if len(payload) % 6:
        raise FrameError(f"telemetry payload length {len(payload)} not a multiple of 6")
    out = []
    for off in range(0, len(payload), 6):
        node_id, code, counts, age = struct.unpack_from(">BBhH", payload, off)
        kind = sensors.BY_CODE.get(code)
        if kind is None:
            raise FrameError(f"unknown sensor code {code}")
        out.append({"node_id": node_id, "kind": kind.name, "value": counts * VALUE_SCALE, "age": age})
    return out


# -- framed link with retransmission -------------------------------------------


class MpiLink:
    """Gateway-to-master telemetry channel.

    Push happens once per sample instant. A fault window may corrupt the
    wire; corrupted frames are Nacked and retransmitted up to the configured
    limit, after which the block is lost for that instant.
    """

    def __init__(self, retransmit_limit: int = 3, corrupt_rng=None):
        self.retransmit_limit = retransmit_limit
        self.corrupt_active = False
        self._corrupt_rng = corrupt_rng
        self._tx_seq = 0
        self.last_block: list[dict] | None = None
        self.last_block_at: float | None = None
        self.frames_sent = 0
        self.retransmits = 0
        self.blocks_lost = 0

    def _transmit(self, wire: bytes) -> bytes:
        if self.corrupt_active:
            idx = self._corrupt_rng.randrange(len(wire) * 8) if self._corrupt_rng else 0
            b = bytearray(wire)
            b[idx // 8] ^= 1 << (idx % 8)
            wire = bytes(b)
        return wire

    def push_telemetry(self, block: list[dict], now: float) -> bool:
        """Returns True once the master acknowledged the block."""
        payload = encode_telemetry(block)
        msg = GwMessage(MSG_TELEMETRY, self._tx_seq)
        self._tx_seq = (self._tx_seq + 1) & 0xFFFF
        wire_clean = encode_frame(GwMessage(msg.msg_type, msg.seq, payload))
        for attempt in range(1 + self.retransmit_limit):
            self.frames_sent += 1
            if attempt:
                self.retransmits += 1
            try:
                received = decode_frame(self._transmit(wire_clean))
            except FrameError:
                continue  # receiver Nacks, sender retries
            self.last_block = decode_telemetry(received.payload)
            self.last_block_at = now
            return True
        self.blocks_lost += 1
        return False


# -- cyclic master/slave exchange ------------------------------------------------


class AsiLink:
    """Once-per-scan output/input word exchange; skipped during a bus fault."""

    def __init__(self, slave):
        self.slave = slave
        self.fault_active = False
        self.last_input_word: int | None = None
        self.exchanges = 0
        self.skipped = 0

    def cyclic_exchange(self, output_word: int, now: float) -> int | None:
        if self.fault_active:
            self.skipped += 1
            self.last_input_word = None
            return None
        self.exchanges += 1
        self.last_input_word = self.slave.exchange(output_word, now)
        return self.last_input_word


# -- byte-stream endpoints ---------------------------------------------------------


class FrameStreamDecoder:
    """Incremental frame extractor for a real byte stream (e.g. a socket).

    Feed arbitrary chunks; complete frames come out in order. Garbage before
    a start-of-frame byte is skipped; a frame failing its CRC is dropped and
    reported so the peer can Nack.
    """

    def __init__(self):
        self._buf = bytearray()
        self.bad_frames = 0

    def feed(self, chunk: bytes) -> list[GwMessage]:
        self._buf += chunk
        out = []
        while True:
            sof = self._buf.find(SOF)
            if sof < 0:
                self._buf.clear()
                break
            if sof:
                del self._buf[:sof]
            if len(self._buf) < FRAME_OVERHEAD:
                break
            (payload_len,) = struct.unpack_from(">H", self._buf, 5)
            total = FRAME_OVERHEAD + payload_len
            if len(self._buf) < total:
                break
            frame = bytes(self._buf[:total])
            del self._buf[:total]
            try:
                out.append(decode_frame(frame))
            except FrameError:
                self.bad_frames += 1
        return out
