"""Line-of-sight MISO wiretap physics: path gain, ULA steering, SINR and secrecy rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from secure_lawn._validation import InputError, check_finite_scalar

POWER_SLACK = 1e-9


@dataclass(frozen=True)
class Pose:
    """3-D position in meters."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InputError(f"Pose.{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.z < 0:
            raise InputError(f"Pose.z must be >= 0, got {self.z}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_seq(cls, values) -> "Pose":
        values = list(values)
        if len(values) == 2:
            values.append(0.0)
        if len(values) != 3:
            raise InputError(f"Pose needs 2 or 3 coordinates, got {len(values)}")
        return cls(*values)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class RadioParams:
    num_antennas: int = 4
    p_max: float = 120.0
    g0: float = 1e-3
    noise_power: float = 1e-9
    jammer_power: float = 1.0
    d_min: float = 1.0

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise InputError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        for name in ("p_max", "g0", "noise_power", "d_min"):
            value = check_finite_scalar(getattr(self, name), name)
            if value <= 0:
                raise InputError(f"{name} must be > 0, got {value}")
        if check_finite_scalar(self.jammer_power, "jammer_power") < 0:
            raise InputError(f"jammer_power must be >= 0, got {self.jammer_power}")


class SecrecyStep(NamedTuple):
    c_legit: float
    c_eve: float
    c_sec: float


def path_gain(d: float, params: RadioParams) -> float:
    """Free-space gain ``g0 / max(d, d_min)**2``."""
    d = check_finite_scalar(d, "distance")
    if d < 0:
        raise InputError(f"distance must be >= 0, got {d}")
    d = max(d, params.d_min)
    return params.g0 / (d * d)


def steering_vector(num_antennas: int, cos_phi: float) -> np.ndarray:
    """Half-wavelength ULA response: entry k is ``exp(i*pi*k*cos_phi)``."""
    cos_phi = check_finite_scalar(cos_phi, "cos_phi")
    if abs(cos_phi) > 1.0:
        raise InputError(f"|cos_phi| must be <= 1, got {cos_phi}")
    if num_antennas < 1:
        raise InputError(f"num_antennas must be >= 1, got {num_antennas}")
    k = np.arange(num_antennas)
    return np.exp(1j * np.pi * k * cos_phi)


def array_cosine(tx: Pose, rx: Pose) -> float:
    """Cosine between the array axis (+x) and the tx->rx direction.

    Coincident points have no direction; they are treated as broadside (0).
    """
    delta = rx.as_array() - tx.as_array()
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:
        return 0.0
    return float(np.clip(delta[0] / norm, -1.0, 1.0))


def distance(a: Pose, b: Pose) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


def los_channel(tx: Pose, rx: Pose, params: RadioParams) -> np.ndarray:
    gain = path_gain(distance(tx, rx), params)
    return math.sqrt(gain) * steering_vector(params.num_antennas, array_cosine(tx, rx))


def received_signal_power(h: np.ndarray, w: np.ndarray) -> float:
    """``|h^H w|^2`` in watts."""
    h = np.asarray(h, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if h.shape != w.shape or h.ndim != 1:
        raise InputError(f"channel/beamformer shape mismatch: {h.shape} vs {w.shape}")
    return float(abs(np.vdot(h, w)) ** 2)


def capacity(signal: float, interference: float, noise: float) -> float:
    signal = check_finite_scalar(signal, "signal")
    interference = check_finite_scalar(interference, "interference")
    noise = check_finite_scalar(noise, "noise")
    if noise <= 0:
        raise InputError(f"noise must be > 0, got {noise}")
    if signal < 0 or interference < 0:
        raise InputError("signal and interference must be >= 0")
    return math.log2(1.0 + signal / (interference + noise))


def secrecy_rate(c_legit: float, c_eve: float) -> float:
    if c_legit < 0 or c_eve < 0:
        raise InputError("capacities must be >= 0")
    return max(0.0, c_legit - c_eve)


def check_beamformer(w, params: RadioParams) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if w.shape != (params.num_antennas,):
        raise InputError(f"beamformer must have shape ({params.num_antennas},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InputError("beamformer has non-finite entries")
    power = float(np.vdot(w, w).real)
    if power > params.p_max + POWER_SLACK:
        raise InputError(f"beamformer power {power} exceeds p_max {params.p_max}")
    return w


def step_secrecy(
    bs: Pose, aav: Pose, eve: Pose, jam: Pose, w, params: RadioParams
) -> SecrecyStep:
    """Legitimate, eavesdropper and secrecy capacity for one transmission.

    The jammer's interference hits both receivers.
    """
    w = check_beamformer(w, params)
    h_b = los_channel(bs, aav, params)
    h_e = los_channel(bs, eve, params)
    i_b = params.jammer_power * path_gain(distance(aav, jam), params)
    i_e = params.jammer_power * path_gain(distance(eve, jam), params)
    c_legit = capacity(received_signal_power(h_b, w), i_b, params.noise_power)
    c_eve = capacity(received_signal_power(h_e, w), i_e, params.noise_power)
    return SecrecyStep(c_legit, c_eve, secrecy_rate(c_legit, c_eve))
