"""Binary packet format for glove frames, with a resynchronising decoder.

Packet layout (little-endian, 447 bytes)::

    off  size  field
      0     2  sync        0xA5 0x5A
      2     1  version     1
      3     2  seq         u16, wraps
      5     8  timestamp   u64, microseconds
     13   432  payload     12 x taxel block (36 bytes):
                             6 x i32  mag0 xyz, mag1 xyz   [0.01 uT]
                             3 x i16  accel xyz            [0.001 m/s^2]
                             3 x i16  gyro xyz             [0.001 rad/s]
    445     2  crc         CRC-16/CCITT-FALSE over bytes 2..444

Stream files (``.osmo``) are raw concatenated packets.
"""

from __future__ import annotations

import binascii
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyStreamError
from .sensor_sim import N_TAXELS, GloveFrame

SYNC = b"\xa5\x5a"
VERSION = 1
MAG_LSB_UT = 0.01
ACCEL_LSB = 0.001
GYRO_LSB = 0.001

TAXEL_DTYPE = np.dtype([("mag", "<i4", (2, 3)), ("accel", "<i2", (3,)), ("gyro", "<i2", (3,))])
PACKET_DTYPE = np.dtype([
    ("sync", "u1", (2,)),
    ("version", "u1"),
    ("seq", "<u2"),
    ("timestamp", "<u8"),
    ("taxels", TAXEL_DTYPE, (N_TAXELS,)),
    ("crc", "<u2"),
])
PACKET_LEN = PACKET_DTYPE.itemsize
CRC_SPAN = slice(2, PACKET_LEN - 2)

_I32 = np.iinfo(np.int32)
_I16 = np.iinfo(np.int16)


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection)."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass
class StreamStats:
    packets_ok: int = 0
    packets_dropped: int = 0
    resyncs: int = 0
    crc_failures: int = 0


def _fill(rec, frames: Sequence[GloveFrame], seq0: int) -> None:
    readings = np.stack([f.readings for f in frames])
    imu = np.stack([f.imu for f in frames])
    q = np.rint(readings / MAG_LSB_UT)
    if np.any(~np.isfinite(q)) or np.any(q > _I32.max) or np.any(q < _I32.min):
        raise ValueError("magnetometer reading outside the i32 wire range")
    rec["sync"] = np.frombuffer(SYNC, dtype="u1")
    rec["version"] = VERSION
    rec["seq"] = (seq0 + np.arange(len(frames))) & 0xFFFF
    rec["timestamp"] = [f.timestamp for f in frames]
    rec["taxels"]["mag"] = q.astype(np.int32)
    # IMU channels saturate at the i16 limits
    rec["taxels"]["accel"] = np.clip(np.rint(imu[..., :3] / ACCEL_LSB), _I16.min, _I16.max).astype(np.int16)
    rec["taxels"]["gyro"] = np.clip(np.rint(imu[..., 3:] / GYRO_LSB), _I16.min, _I16.max).astype(np.int16)


def encode_packets(frames: Sequence[GloveFrame], seq0: int = 0) -> bytes:
    """Encode consecutive frames with sequence numbers ``seq0, seq0 + 1, ...``."""
    frames = list(frames)
    if not frames:
        return b""
    rec = np.zeros(len(frames), dtype=PACKET_DTYPE)
    _fill(rec, frames, seq0)
    raw = bytearray(rec.tobytes())
    for i in range(len(frames)):
        base = i * PACKET_LEN
        crc = crc16(bytes(raw[base + 2: base + PACKET_LEN - 2]))
        raw[base + PACKET_LEN - 2: base + PACKET_LEN] = crc.to_bytes(2, "little")
    return bytes(raw)


def encode_packet(frame: GloveFrame, seq: int) -> bytes:
    return encode_packets([frame], seq)


def _frame_from_record(rec) -> GloveFrame:
    t = rec["taxels"]
    imu = np.concatenate([t["accel"] * ACCEL_LSB, t["gyro"] * GYRO_LSB], axis=-1)
    # the ambient field is simulator ground truth and never goes on the wire
    return GloveFrame(int(rec["timestamp"]), t["mag"] * MAG_LSB_UT, imu, np.zeros(3))


def decode_packet(data: bytes) -> tuple[GloveFrame, int]:
    """Decode one packet; returns (frame, seq).  Raises ValueError if invalid."""
    if len(data) != PACKET_LEN:
        raise ValueError(f"packet must be {PACKET_LEN} bytes, got {len(data)}")
    rec = np.frombuffer(data, dtype=PACKET_DTYPE)[0]
    if data[:2] != SYNC or rec["version"] != VERSION:
        raise ValueError("bad sync or version")
    if crc16(data[CRC_SPAN]) != int(rec["crc"]):
        raise ValueError("CRC mismatch")
    return _frame_from_record(rec), int(rec["seq"])


class StreamDecoder:
    """Incremental decoder for one byte stream.

    Bytes may arrive in arbitrary chunks.  Invalid candidates (bad CRC or
    unknown version) are counted, skipped by one byte and the scan continues
    at the next sync pattern.  ``resyncs`` counts how often lock was regained
    after discarding bytes; ``packets_dropped`` is inferred from sequence gaps.
    """

    def __init__(self, stats: StreamStats | None = None):
        self.stats = stats if stats is not None else StreamStats()
        self._buf = bytearray()
        self._last_seq: int | None = None
        self._lost = False

    def feed(self, data: bytes) -> list[GloveFrame]:
        buf = self._buf
        buf += data
        out = []
        i = 0
        n = len(buf)
        while True:
            j = buf.find(SYNC, i)
            if j < 0:
                # keep a trailing 0xA5 that may begin the next sync pattern
                keep = n - 1 if n and buf[-1] == SYNC[0] else n
                if keep > i:
                    self._lost = True
                i = max(i, keep)
                break
            if j > i:
                self._lost = True
            if n - j < PACKET_LEN:
                i = j
                break
            pkt = bytes(buf[j:j + PACKET_LEN])
            if pkt[2] == VERSION and crc16(pkt[CRC_SPAN]) == int.from_bytes(pkt[-2:], "little"):
                rec = np.frombuffer(pkt, dtype=PACKET_DTYPE)[0]
                self._accept(int(rec["seq"]))
                out.append(_frame_from_record(rec))
                i = j + PACKET_LEN
            else:
                self.stats.crc_failures += 1
                self._lost = True
                i = j + 1
        del buf[:i]
        return out

    def _accept(self, seq: int) -> None:
        s = self.stats
        if self._lost:
            s.resyncs += 1
            self._lost = False
        if self._last_seq is not None:
            s.packets_dropped += (seq - self._last_seq - 1) & 0xFFFF
        self._last_seq = seq
        s.packets_ok += 1

    @property
    def pending(self) -> int:
        """Bytes buffered but not yet consumed."""
        return len(self._buf)


def decode_stream(data: bytes, stats: StreamStats | None = None) -> tuple[list[GloveFrame], StreamStats]:
    """Decode a complete byte string; never raises on malformed input."""
    dec = StreamDecoder(stats)
    frames = dec.feed(bytes(data))
    return frames, dec.stats


def write_stream(path: str | Path, frames: Iterable[GloveFrame], seq0: int = 0) -> int:
    data = encode_packets(list(frames), seq0)
    Path(path).write_bytes(data)
    return len(data) // PACKET_LEN


def read_stream(path: str | Path) -> tuple[list[GloveFrame], StreamStats]:
    return decode_stream(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# clock alignment
# ---------------------------------------------------------------------------

@dataclass
class AlignedTable:
    """Streams resampled onto one clock.

    ``index[name][k]`` is the source sample used for slot ``k`` or -1 when
    nothing lay within half a period; ``values[name]`` holds the matched
    samples with NaN in missing slots.
    """

    timestamps: np.ndarray
    index: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    def missing(self, name: str) -> np.ndarray:
        return self.index[name] < 0

    def complete(self) -> np.ndarray:
        """Mask of slots present in every stream."""
        ok = np.ones(self.timestamps.shape, dtype=bool)
        for idx in self.index.values():
            ok &= idx >= 0
        return ok

    def as_streams(self) -> dict:
        """Back to ``{name: (timestamps, values)}``, dropping missing slots."""
        out = {}
        for name, idx in self.index.items():
            keep = idx >= 0
            out[name] = (self.timestamps[keep], self.values[name][keep])
        return out


def timestamp_align(streams: Mapping[str, tuple], rate_hz: float = 25.0, start_us: int | None = None) -> AlignedTable:
    """Nearest-neighbour resampling of timestamped streams to a common clock.

    ``streams`` maps a name to ``(timestamps_us, values)``.  The clock starts
    at the earliest first sample (or ``start_us``) and ticks at ``rate_hz``
    until the latest last sample.  A slot is matched when the nearest sample
    is strictly closer than half a period; otherwise it is marked missing.
    """
    if not streams:
        raise EmptyStreamError("no streams to align")
    period = 1e6 / rate_hz
    parsed = {}
    for name, (ts, vals) in streams.items():
        ts = np.asarray(ts, dtype=np.int64)
        if ts.size == 0:
            raise EmptyStreamError(f"stream {name!r} has no samples")
        if np.any(np.diff(ts) <= 0):
            raise ValueError(f"timestamps of stream {name!r} must strictly increase")
        parsed[name] = (ts, np.asarray(vals))
    t0 = min(ts[0] for ts, _ in parsed.values()) if start_us is None else int(start_us)
    t1 = max(ts[-1] for ts, _ in parsed.values())
    n = int(np.floor((t1 - t0) / period + 0.5)) + 1
    clock = t0 + np.rint(np.arange(n) * period).astype(np.int64)

    table = AlignedTable(clock)
    for name, (ts, vals) in parsed.items():
        pos = np.searchsorted(ts, clock)
        lo = np.clip(pos - 1, 0, ts.size - 1)
        hi = np.clip(pos, 0, ts.size - 1)
        pick = np.where(np.abs(ts[hi] - clock) < np.abs(ts[lo] - clock), hi, lo)
        ok = 2 * np.abs(ts[pick] - clock) < period
        idx = np.where(ok, pick, -1)
        out = np.full((n,) + vals.shape[1:], np.nan) if vals.dtype.kind in "fc" else np.zeros(
            (n,) + vals.shape[1:], dtype=vals.dtype)
        out[ok] = vals[pick[ok]]
        table.index[name] = idx
        table.values[name] = out
    return table
