"""Glove packets over a damaged link.

Simulates ten seconds of finger wave, encodes the frames and damages the
byte stream in three ways: a burst of noise, a dropped chunk and a run of
bytes that imitates a sync word.  The decoder resynchronises after each.
"""
import numpy as np

from osmoglove import sensor_sim as ss
from osmoglove import wire


def main():
    rng = np.random.default_rng(0)
    frames = ss.simulate_finger_wave(ss.load_geometry(), 10.0, seed=0)
    data = bytearray(wire.encode_packets(frames))
    print(f"{len(frames)} frames -> {len(data)} bytes ({wire.PACKET_LEN} per packet)")

    p = wire.PACKET_LEN
    data[40 * p + 100: 40 * p + 300] = rng.bytes(200)   # noise inside packet 40
    del data[120 * p + 10: 121 * p + 10]                 # a lost chunk straddling 120/121
    data[200 * p + 50: 200 * p + 52] = wire.SYNC         # false sync inside packet 200

    # feed it in uneven pieces, as a serial port would deliver it
    dec = wire.StreamDecoder()
    out = []
    pos = 0
    while pos < len(data):
        n = int(rng.integers(1, 2000))
        out += dec.feed(bytes(data[pos:pos + n]))
        pos += n
    s = dec.stats
    print(f"decoded {s.packets_ok} packets, {s.packets_dropped} dropped, "
          f"{s.crc_failures} rejected candidates, {s.resyncs} resyncs")

    by_ts = {f.timestamp: f for f in frames}
    err = max(np.abs(f.readings - by_ts[f.timestamp].readings).max() for f in out)
    print(f"largest difference from the sent readings: {err:.4f} uT")


if __name__ == "__main__":
    main()
