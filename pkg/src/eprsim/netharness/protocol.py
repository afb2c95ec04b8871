"""Wire format shared by source, detectors and collector.

Every frame is a 4-byte big-endian payload length followed by the payload.
Payloads are fixed-layout little-endian records led by a version byte:

    particle  version u8 | pair_id u64 | axis f64 x3   | branch i8  | wing u8
    result    version u8 | pair_id u64 | setting f64 x3 | outcome i8 | wing u8

Wings are the ASCII bytes ``A`` and ``B``. The wing byte on a result lets
the collector join without relying on which connection a frame came from.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Optional

import numpy as np

VERSION = 1
HEADER = struct.Struct(">I")
PARTICLE = struct.Struct("<BQdddbB")
RESULT = struct.Struct("<BQdddbB")
MAX_PAYLOAD = 1 << 16
WINGS = (ord("A"), ord("B"))

# Whole frames (header included) for vectorized encoding.
_FRAME_DTYPE = np.dtype(
    [("length", ">u4"), ("version", "u1"), ("pair_id", "<u8"), ("vec", "<f8", (3,)), ("sign", "i1"), ("wing", "u1")]
)
assert _FRAME_DTYPE.itemsize == HEADER.size + PARTICLE.size


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleMsg:
    pair_id: int
    axis: tuple[float, float, float]
    branch: int
    wing: str


@dataclass(frozen=True)
class ResultMsg:
    pair_id: int
    setting: tuple[float, float, float]
    outcome: int
    wing: str


def wing_byte(wing: str) -> int:
    if wing not in ("A", "B"):
        raise ProtocolError(f"wing must be 'A' or 'B', got {wing!r}")
    return ord(wing)


def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(len(payload)) + payload


def encode_particle(m: ParticleMsg) -> bytes:
    return frame(PARTICLE.pack(VERSION, m.pair_id, *m.axis, m.branch, wing_byte(m.wing)))


def encode_result(m: ResultMsg) -> bytes:
    return frame(RESULT.pack(VERSION, m.pair_id, *m.setting, m.outcome, wing_byte(m.wing)))


def _unpack(layout: struct.Struct, payload: bytes, what: str):
    if len(payload) != layout.size:
        raise ProtocolError(f"{what} payload has {len(payload)} bytes, expected {layout.size}")
    version, pid, x, y, z, sign, wing = layout.unpack(payload)
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    if sign not in (1, -1):
        raise ProtocolError(f"{what} sign byte {sign} is not +-1")
    if wing not in WINGS:
        raise ProtocolError(f"bad wing byte {wing}")
    return pid, (x, y, z), sign, chr(wing)


def decode_particle(payload: bytes) -> ParticleMsg:
    pid, axis, branch, wing = _unpack(PARTICLE, payload, "particle")
    if abs(math.fsum(c * c for c in axis) - 1.0) > 1e-9:
        raise ProtocolError("particle axis is not a unit vector")
    return ParticleMsg(pid, axis, branch, wing)


def decode_result(payload: bytes) -> ResultMsg:
    pid, setting, outcome, wing = _unpack(RESULT, payload, "result")
    return ResultMsg(pid, setting, outcome, wing)


def encode_batch(pair_ids: np.ndarray, vecs: np.ndarray, signs: np.ndarray, wing: str) -> bytes:
    """Frames for many particle or result records at once (same layout)."""
    rec = np.empty(len(pair_ids), dtype=_FRAME_DTYPE)
    rec["length"] = PARTICLE.size
    rec["version"] = VERSION
    rec["pair_id"] = pair_ids
    rec["vec"] = vecs
    rec["sign"] = signs
    rec["wing"] = wing_byte(wing)
    return rec.tobytes()


class FrameReader:
    """Reads length-prefixed frames from a buffered binary stream.

    If ``capture`` is given every byte consumed is copied to it.
    """

    def __init__(self, stream: BinaryIO, capture: Optional[BinaryIO] = None):
        self.stream = stream
        self.capture = capture

    def _read_exact(self, n: int) -> bytes:
        data = self.stream.read(n)
        if self.capture is not None and data:
            self.capture.write(data)
        return data

    def read_frame(self) -> Optional[bytes]:
        """Next payload, or None at a clean end of stream."""
        head = self._read_exact(HEADER.size)
        if not head:
            return None
        if len(head) < HEADER.size:
            raise ProtocolError("stream ended inside a frame header")
        (length,) = HEADER.unpack(head)
        if length > MAX_PAYLOAD:
            raise ProtocolError(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
        payload = self._read_exact(length)
        if len(payload) < length:
            raise ProtocolError("stream ended inside a frame payload")
        return payload

    def __iter__(self) -> Iterator[bytes]:
        while (payload := self.read_frame()) is not None:
            yield payload


class FrameBuffer:
    """Incremental frame splitter for non-blocking sockets."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        out = []
        pos = 0
        while len(self._buf) - pos >= HEADER.size:
            (length,) = HEADER.unpack_from(self._buf, pos)
            if length > MAX_PAYLOAD:
                raise ProtocolError(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
            end = pos + HEADER.size + length
            if end > len(self._buf):
                break
            out.append(bytes(self._buf[pos + HEADER.size:end]))
            pos = end
        del self._buf[:pos]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)
