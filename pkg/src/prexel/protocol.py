"""Wire protocol between the sensor MCU and the host.

Frame layout, little-endian multi-byte fields:

    offset  size  field
    0       2     magic 0xA5 0x5A
    2       1     version (currently 1)
    3       1     sensor_id
    4       2     seq, wraps at 65535
    6       1     mode: 0 tactile, 1 proximity
    7       2     payload_len
    9       n     payload
    9+n     2     CRC-16/CCITT-FALSE over bytes 2..9+n (version..payload)

Tactile payload: rows u8, cols u8, then rows*cols u16 ADC codes row-major.
Proximity payload: counter u32, flags u8 (bit0 = counter saturated).

The stream parser is incremental and self-resynchronizing: arbitrary
garbage, truncated frames and corrupted bytes cost at most the bad bytes
themselves plus a diagnostic, never a crash and never more than O(n) work.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass, field

MAGIC = b"\xa5\x5a"
VERSION = 1
MODE_TACTILE = 0
MODE_PROXIMITY = 1

_HEADER = struct.Struct("<BBHBH")  # version, sensor_id, seq, mode, payload_len
HEADER_LEN = 2 + _HEADER.size  # magic + header fields
OVERHEAD_LEN = HEADER_LEN + 2  # plus CRC

MAX_GRID_DIM = 8
MAX_TACTILE_PAYLOAD = 2 + 2 * MAX_GRID_DIM * MAX_GRID_DIM
PROXIMITY_PAYLOAD_LEN = 5
FLAG_SATURATED = 0x01


class ProtocolError(Exception):
    """Frame cannot be built or decoded."""


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection)."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class TactilePayload:
    rows: int
    cols: int
    samples: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (1 <= self.rows <= MAX_GRID_DIM and 1 <= self.cols <= MAX_GRID_DIM):
            raise ProtocolError("grid dims must be 1..8")
        if len(self.samples) != self.rows * self.cols:
            raise ProtocolError("sample count does not match grid")
        if any(not 0 <= s <= 0xFFFF for s in self.samples):
            raise ProtocolError("ADC samples must fit u16")

    def encode(self) -> bytes:
        return struct.pack(
            f"<BB{len(self.samples)}H", self.rows, self.cols, *self.samples)


@dataclass(frozen=True)
class ProximityPayload:
    counter: int
    saturated: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.counter <= 0xFFFFFFFF:
            raise ProtocolError("counter must fit u32")

    def encode(self) -> bytes:
        return struct.pack("<IB", self.counter, FLAG_SATURATED if self.saturated else 0)


@dataclass(frozen=True)
class Frame:
    sensor_id: int
    seq: int
    payload: TactilePayload | ProximityPayload
    version: int = VERSION

    def __post_init__(self) -> None:
        if not 0 <= self.sensor_id <= 0xFF:
            raise ProtocolError("sensor_id must fit u8")
        if not 0 <= self.seq <= 0xFFFF:
            raise ProtocolError("seq must fit u16")

    @property
    def mode(self) -> int:
        return MODE_TACTILE if isinstance(self.payload, TactilePayload) else MODE_PROXIMITY


def encode_frame(frame: Frame) -> bytes:
    """Serialize with header and CRC; inverse of the stream parser."""
    payload = frame.payload.encode()
    body = _HEADER.pack(frame.version, frame.sensor_id, frame.seq,
                        frame.mode, len(payload)) + payload
    return MAGIC + body + struct.pack("<H", crc16(body))


def frame_length(payload_len: int) -> int:
    return OVERHEAD_LEN + payload_len


@dataclass
class Diagnostic:
    """One recoverable stream fault."""

    offset: int
    reason: str


@dataclass
class ParserStats:
    frames: int = 0
    crc_failures: int = 0
    resyncs: int = 0
    bytes_skipped: int = 0


def _payload_len_valid(mode: int, payload_len: int) -> bool:
    if mode == MODE_PROXIMITY:
        return payload_len == PROXIMITY_PAYLOAD_LEN
    if mode == MODE_TACTILE:
        return 4 <= payload_len <= MAX_TACTILE_PAYLOAD
    return False


class StreamParser:
    """Incremental frame extractor.

    Feed arbitrary byte chunks; complete frames come out in order, faults
    become :class:`Diagnostic` entries.  On any malformed candidate the
    parser skips just past the magic and rescans, so a corrupted frame
    costs its own bytes only.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._consumed = 0  # stream offset of _buf[0]
        self.stats = ParserStats()
        self.diagnostics: list[Diagnostic] = []

    def feed(self, chunk: bytes) -> list[Frame]:
        self._buf.extend(chunk)
        out: list[Frame] = []
        while True:
            frame = self._try_extract()
            if frame is None:
                break
            out.append(frame)
        return out

    # internals ----------------------------------------------------------

    def _drop(self, n: int) -> None:
        del self._buf[:n]
        self._consumed += n

    def _fault(self, reason: str) -> None:
        self.diagnostics.append(Diagnostic(self._consumed, reason))
        self.stats.resyncs += 1
        self.stats.bytes_skipped += 2
        self._drop(2)  # skip the magic we matched, rescan right after

    def _try_extract(self) -> Frame | None:
        while True:
            start = self._buf.find(MAGIC)
            if start < 0:
                # keep a trailing 0xA5 in case its partner is in the next chunk
                keep = 1 if self._buf[-1:] == MAGIC[:1] else 0
                skip = len(self._buf) - keep
                if skip > 0:
                    self.stats.bytes_skipped += skip
                    self._drop(skip)
                return None
            if start > 0:
                self.stats.bytes_skipped += start
                self._drop(start)
            if len(self._buf) < HEADER_LEN:
                return None
            version, sensor_id, seq, mode, payload_len = _HEADER.unpack_from(self._buf, 2)
            if version != VERSION:
                self._fault(f"unsupported version {version}")
                continue
            if not _payload_len_valid(mode, payload_len):
                self._fault(f"implausible header (mode {mode}, len {payload_len})")
                continue
            total = frame_length(payload_len)
            if len(self._buf) < total:
                return None
            body = bytes(self._buf[2:total - 2])
            (crc_rx,) = struct.unpack_from("<H", self._buf, total - 2)
            if crc16(body) != crc_rx:
                self.stats.crc_failures += 1
                self._fault("crc mismatch")
                continue
            payload_bytes = body[_HEADER.size:]
            try:
                payload = _decode_payload(mode, payload_bytes)
            except ProtocolError as exc:
                self._fault(f"bad payload: {exc}")
                continue
            self._drop(total)
            self.stats.frames += 1
            return Frame(sensor_id=sensor_id, seq=seq, payload=payload, version=version)


def _decode_payload(mode: int, data: bytes) -> TactilePayload | ProximityPayload:
    if mode == MODE_PROXIMITY:
        counter, flags = struct.unpack("<IB", data)
        return ProximityPayload(counter=counter, saturated=bool(flags & FLAG_SATURATED))
    rows, cols = data[0], data[1]
    if not (1 <= rows <= MAX_GRID_DIM and 1 <= cols <= MAX_GRID_DIM):
        raise ProtocolError(f"grid {rows}x{cols} out of range")
    expect = 2 + 2 * rows * cols
    if len(data) != expect:
        raise ProtocolError(f"payload length {len(data)} != {expect} for {rows}x{cols}")
    samples = struct.unpack_from(f"<{rows * cols}H", data, 2)
    return TactilePayload(rows=rows, cols=cols, samples=samples)


def decode_stream(
    data: bytes, parser: StreamParser | None = None,
) -> tuple[list[Frame], list[Diagnostic], StreamParser]:
    """Functional veneer over :class:`StreamParser`.

    Pass the returned parser back in to continue across chunk boundaries;
    diagnostics returned are only the ones new to this call.
    """
    if parser is None:
        parser = StreamParser()
    seen = len(parser.diagnostics)
    frames = parser.feed(data)
    return frames, parser.diagnostics[seen:], parser


def seq_gaps(frames: list[Frame]) -> int:
    """Count of missing sequence numbers across a frame list (wrap-aware)."""
    missing = 0
    for prev, cur in zip(frames, frames[1:]):
        missing += (cur.seq - prev.seq - 1) & 0xFFFF
    return missing
