import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osmoglove import wire
from osmoglove.errors import EmptyStreamError
from osmoglove.sensor_sim import GloveFrame

import oracles


def random_frames(rng, n, t0=0, scale=500.0):
    ts = t0 + np.cumsum(rng.integers(1, 100_000, n))
    return [GloveFrame(int(t), rng.normal(0, scale, (12, 2, 3)), rng.normal(0, 5, (12, 6))) for t in ts]


def test_packet_length():
    assert wire.PACKET_LEN == 447


@pytest.mark.parametrize("data", [b"123456789", b"", b"\x00" * 443, bytes(range(256))])
def test_crc_matches_bitwise_oracle(data):
    assert wire.crc16(data) == oracles.crc16_ccitt_false(data)


def test_crc_check_value():
    assert wire.crc16(b"123456789") == 0x29B1


def test_zero_frame_packet_crc():
    pkt = wire.encode_packet(GloveFrame(0, np.zeros((12, 2, 3)), np.zeros((12, 6))), 0)
    assert pkt[:5] == b"\xa5\x5a\x01\x00\x00"
    assert pkt[5:445] == bytes(440)
    assert int.from_bytes(pkt[-2:], "little") == oracles.crc16_ccitt_false(b"\x01" + bytes(442))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), seq0=st.integers(0, 0xFFFF))
def test_round_trip_within_quantization(seed, n, seq0):
    rng = np.random.default_rng(seed)
    frames = random_frames(rng, n, scale=1e4)
    out, stats = wire.decode_stream(wire.encode_packets(frames, seq0))
    assert stats == wire.StreamStats(packets_ok=n)
    for a, b in zip(frames, out):
        assert a.timestamp == b.timestamp
        assert np.max(np.abs(a.readings - b.readings)) <= 0.005 + 1e-9
        np.testing.assert_allclose(b.imu, np.round(a.imu, 3), atol=1e-9)


def test_decode_packet_reports_seq_and_rejects_damage(rng):
    f = random_frames(rng, 1)[0]
    pkt = wire.encode_packet(f, 513)
    frame, seq = wire.decode_packet(pkt)
    assert seq == 513 and frame.timestamp == f.timestamp
    bad = bytearray(pkt)
    bad[100] ^= 0x01
    with pytest.raises(ValueError):
        wire.decode_packet(bytes(bad))
    with pytest.raises(ValueError):
        wire.decode_packet(pkt[:-1])


def test_sequence_wraps_without_counting_drops(rng):
    frames = random_frames(rng, 5)
    out, stats = wire.decode_stream(wire.encode_packets(frames, seq0=0xFFFE))
    assert len(out) == 5 and stats.packets_dropped == 0


def test_out_of_range_reading_refused():
    with pytest.raises(ValueError):
        wire.encode_packet(GloveFrame(0, np.full((12, 2, 3), 3e7)), 0)


def test_imu_saturates():
    imu = np.full((12, 6), 1e6)
    out, _ = wire.decode_stream(wire.encode_packet(GloveFrame(0, np.zeros((12, 2, 3)), imu), 0))
    np.testing.assert_allclose(out[0].imu, 32.767)


def test_empty_input():
    frames, stats = wire.decode_stream(b"")
    assert frames == [] and stats == wire.StreamStats()


def test_garbage_prefix_triggers_resync(rng):
    frames = random_frames(rng, 3)
    data = b"\x00\x11\xa5" + wire.encode_packets(frames)
    out, stats = wire.decode_stream(data)
    assert len(out) == 3 and stats.resyncs == 1 and stats.crc_failures == 0


def test_flipped_byte_costs_one_packet(rng):
    frames = random_frames(rng, 10)
    data = bytearray(wire.encode_packets(frames))
    data[4 * wire.PACKET_LEN + 200] ^= 0xFF
    out, stats = wire.decode_stream(bytes(data))
    assert len(out) == 9
    assert stats.crc_failures == 1 and stats.resyncs == 1 and stats.packets_dropped == 1
    assert [f.timestamp for f in out] == [f.timestamp for i, f in enumerate(frames) if i != 4]


def test_bad_version_is_skipped(rng):
    frames = random_frames(rng, 3)
    data = bytearray(wire.encode_packets(frames))
    data[wire.PACKET_LEN + 2] = 2
    out, stats = wire.decode_stream(bytes(data))
    assert len(out) == 2 and stats.packets_dropped == 1


def test_chunked_feed_matches_whole(rng):
    frames = random_frames(rng, 20)
    data = bytearray(wire.encode_packets(frames))
    data[3 * wire.PACKET_LEN + 10: 3 * wire.PACKET_LEN + 40] = rng.bytes(30)
    whole, s_whole = wire.decode_stream(bytes(data))
    dec = wire.StreamDecoder()
    pieces = []
    cut = 0
    while cut < len(data):
        step = int(rng.integers(1, 700))
        pieces += dec.feed(bytes(data[cut:cut + step]))
        cut += step
    assert [f.timestamp for f in pieces] == [f.timestamp for f in whole]
    assert dec.stats == s_whole


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), start=st.integers(0, 30 * 447 - 1), length=st.integers(1, 2000))
def test_corruption_loses_at_most_overlapped_plus_one(seed, start, length):
    rng = np.random.default_rng(seed)
    n = 30
    frames = random_frames(rng, n)
    data = bytearray(wire.encode_packets(frames))
    end = min(start + length, len(data))
    data[start:end] = rng.bytes(end - start)
    out, stats = wire.decode_stream(bytes(data))
    overlapped = len(range(start // wire.PACKET_LEN, (end - 1) // wire.PACKET_LEN + 1))
    assert n - len(out) <= overlapped + 1
    assert stats.packets_ok == len(out)


def test_fuzz_never_raises(rng):
    for size in (1, 446, 447, 448, 5000, 200_000):
        frames, stats = wire.decode_stream(rng.bytes(size))
        assert stats.packets_ok == len(frames)
    # random data salted with sync words
    blob = bytearray(rng.bytes(100_000))
    for pos in rng.integers(0, len(blob) - 2, 500):
        blob[pos:pos + 2] = wire.SYNC
    wire.decode_stream(bytes(blob))


def test_stream_file_round_trip(tmp_path, rng):
    frames = random_frames(rng, 7)
    assert wire.write_stream(tmp_path / "g.osmo", frames) == 7
    assert (tmp_path / "g.osmo").stat().st_size == 7 * 447
    out, stats = wire.read_stream(tmp_path / "g.osmo")
    assert stats.packets_ok == 7


# --- alignment ----------------------------------------------------------------

def test_align_identical_clocks():
    ts = np.arange(10) * 40_000
    tab = wire.timestamp_align({"a": (ts, np.arange(10.0)), "b": (ts + 7_000, np.arange(10.0) * 2)})
    np.testing.assert_array_equal(tab.timestamps, ts)
    assert tab.complete().all()
    np.testing.assert_array_equal(tab.values["b"], np.arange(10) * 2.0)


def test_align_half_period_is_missing():
    ts = np.array([0, 40_000, 80_000])
    tab = wire.timestamp_align({"a": (ts, np.zeros(3)), "b": (np.array([20_000, 79_999]), np.ones(2))})
    # 20 000 us lies exactly half a period from both neighbouring slots
    np.testing.assert_array_equal(tab.index["b"], [-1, -1, 1])
    assert np.isnan(tab.values["b"][:2]).all()
    np.testing.assert_array_equal(tab.complete(), [False, False, True])


def test_align_gap_marks_slot_missing():
    ts = np.arange(6) * 40_000
    gappy = np.delete(ts, 3)
    tab = wire.timestamp_align({"a": (ts, ts * 1.0), "b": (gappy, gappy * 1.0)})
    assert list(np.flatnonzero(tab.missing("b"))) == [3]
    back = tab.as_streams()["b"]
    np.testing.assert_array_equal(back[0], gappy)


def test_align_start_override():
    ts = np.arange(5) * 40_000
    tab = wire.timestamp_align({"a": (ts, np.arange(5))}, start_us=80_000)
    np.testing.assert_array_equal(tab.timestamps, [80_000, 120_000, 160_000])
    np.testing.assert_array_equal(tab.values["a"], [2, 3, 4])


def test_align_errors():
    with pytest.raises(EmptyStreamError):
        wire.timestamp_align({})
    with pytest.raises(EmptyStreamError):
        wire.timestamp_align({"a": ([], [])})
    with pytest.raises(ValueError):
        wire.timestamp_align({"a": ([0, 0], [1, 2])})
