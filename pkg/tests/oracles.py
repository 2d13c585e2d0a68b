"""Reference implementations used to derive expected values in the tests.

Each one is written from first principles and shares no code with the
package: bitwise CRC, least-squares Savitzky-Golay weights, sorted-list
percentiles, explicit 4x4 forward kinematics and closed-form dipole fields.
"""

import json
import math
from importlib import resources

import numpy as np
from scipy.linalg import expm


def crc16_ccitt_false(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def savgol_center_weights(window: int, polyorder: int) -> np.ndarray:
    """Weights giving the fitted polynomial's value at the window centre."""
    h = window // 2
    x = np.arange(-h, h + 1, dtype=float)
    A = np.vander(x, polyorder + 1, increasing=True)
    # the fit of a unit impulse at each position; the constant term is the centre value
    coef = np.linalg.lstsq(A, np.eye(window), rcond=None)[0]
    return coef[0]


def percentile_linear(values, p: float) -> float:
    s = sorted(float(v) for v in values)
    pos = (len(s) - 1) * p / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def dipole_on_axis_ut(moment: float, r: float) -> float:
    # mu0 / (2 pi) * m / r^3, in microtesla
    return 2e-7 * moment / r**3 * 1e6


def dipole_equatorial_ut(moment: float, r: float) -> float:
    return 1e-7 * moment / r**3 * 1e6


# --- forward kinematics by explicit matrix products -------------------------

def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1.0]])


def _tr(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def _rpy(r, p, y):
    return _rz(y) @ _ry(p) @ _rx(r)


def _about(axis, angle):
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    T = np.eye(4)
    T[:3, :3] = expm(K * angle)
    return T


def default_chain_dict() -> dict:
    return json.loads(resources.files("osmoglove.data").joinpath("default_chain.json").read_text())


def fk_oracle(cfg: dict, q) -> dict:
    """World transform of every joint and frame; q follows the config's joint order."""
    local = {}
    parent = {}
    for i, j in enumerate(cfg["joints"]):
        theta = j.get("theta_offset", 0.0) + q[i]
        if "dh" in j:
            d = j["dh"]
            local[j["name"]] = _rx(d.get("alpha", 0)) @ _tr(d.get("a", 0), 0, 0) @ _rz(theta) @ _tr(0, 0, d.get("d", 0))
        else:
            o = j.get("origin", {})
            local[j["name"]] = _tr(*o.get("xyz", (0, 0, 0))) @ _rpy(*o.get("rpy", (0, 0, 0))) @ _about(
                j.get("axis", (0, 0, 1)), theta)
        parent[j["name"]] = j.get("parent")
    for f in cfg.get("frames", []):
        local[f["name"]] = _tr(*f.get("xyz", (0, 0, 0))) @ _rpy(*f.get("rpy", (0, 0, 0)))
        parent[f["name"]] = f["parent"]
    world = {}

    def resolve(name):
        if name not in world:
            p = parent[name]
            world[name] = local[name] if p is None else resolve(p) @ local[name]
        return world[name]

    for name in local:
        resolve(name)
    return world
