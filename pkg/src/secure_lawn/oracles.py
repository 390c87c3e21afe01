"""Reference beamformers and a dynamic-programming trajectory benchmark."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from secure_lawn._validation import InputError
from secure_lawn.radio import (
    Pose,
    RadioParams,
    capacity,
    distance,
    los_channel,
    path_gain,
    received_signal_power,
    secrecy_rate,
)


class DegenerateGeometryError(InputError):
    pass


class InfeasibleError(InputError):
    pass


@dataclass(frozen=True)
class BeamOracleResult:
    beamformer: np.ndarray
    c_legit: float
    c_eve: float
    c_sec: float


@dataclass(frozen=True)
class DpPlan:
    grid: int
    cell_values: np.ndarray  # (grid, grid) best c_sec per cell, indexed [ix, iy]
    cell_path: tuple[tuple[int, int], ...]  # one cell per step, t = 1..T
    positions: tuple[tuple[float, float], ...]  # per-step waypoints, t = 0..T
    value: float
    discounted_value: float


def mrt_beamformer(h, p: float) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    norm = np.linalg.norm(h)
    if norm == 0:
        raise InputError("MRT needs a non-zero channel")
    return math.sqrt(p) * h / norm


def null_steering_beamformer(h_b, h_e, p: float, tol: float = 1e-9) -> np.ndarray:
    """MRT projected onto the orthogonal complement of the eavesdropper channel."""
    h_b = np.asarray(h_b, dtype=complex)
    h_e = np.asarray(h_e, dtype=complex)
    if h_b.shape != h_e.shape:
        raise InputError("channel shapes differ")
    if h_b.size < 2:
        raise DegenerateGeometryError("null steering needs at least 2 antennas")
    ne = np.linalg.norm(h_e)
    if ne == 0:
        return mrt_beamformer(h_b, p)
    u_e = h_e / ne
    proj = h_b - u_e * np.vdot(u_e, h_b)
    if np.linalg.norm(proj) <= tol * np.linalg.norm(h_b):
        raise DegenerateGeometryError("legitimate and eavesdropper channels are parallel")
    # second pass removes round-off leakage toward h_e
    proj = proj - u_e * np.vdot(u_e, proj)
    return math.sqrt(p) * proj / np.linalg.norm(proj)


def _orthonormal_span(h_b: np.ndarray, h_e: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    u_b = h_b / np.linalg.norm(h_b)
    m = h_b.size
    if m == 1:
        return u_b, None
    r = h_e - u_b * np.vdot(u_b, h_e)
    if np.linalg.norm(r) <= 1e-9 * max(np.linalg.norm(h_e), 1e-300):
        # h_e carries no direction outside u_b; any orthogonal unit vector completes the basis
        for k in range(m):
            e = np.zeros(m, dtype=complex)
            e[k] = 1.0
            r = e - u_b * np.vdot(u_b, e)
            if np.linalg.norm(r) > 1e-6:
                break
    return u_b, r / np.linalg.norm(r)


def _capacities(w: np.ndarray, h_b, h_e, i_b: float, i_e: float, noise: float):
    s_b = np.abs(w @ np.conj(h_b)) ** 2
    s_e = np.abs(w @ np.conj(h_e)) ** 2
    c_b = np.log2(1.0 + s_b / (i_b + noise))
    c_e = np.log2(1.0 + s_e / (i_e + noise))
    return c_b, c_e, np.maximum(0.0, c_b - c_e)


def grid_secrecy_beamformer(
    h_b,
    h_e,
    params: RadioParams,
    resolution: int = 256,
    interference_legit: float = 0.0,
    interference_eve: float = 0.0,
) -> BeamOracleResult:
    """Exhaustive full-power search over ``span{h_b, h_e}``.

    ``w = sqrt(p_max) * (cos(theta) u_b + sin(theta) e^{i psi} u_e)`` with
    ``theta = (pi/2) k / R`` (k = 0..R) and ``psi = 2 pi j / R`` (j = 0..R-1).
    Grids for R and 2R are nested, so the result never gets worse with resolution.
    """
    if resolution < 16:
        raise InputError("resolution must be >= 16")
    h_b = np.asarray(h_b, dtype=complex)
    h_e = np.asarray(h_e, dtype=complex)
    if np.linalg.norm(h_b) == 0:
        raise InputError("legitimate channel is zero")
    u_b, u_e = _orthonormal_span(h_b, h_e)
    if u_e is None:
        coeffs = np.array([[1.0 + 0j, 0j]])
        u_e = np.zeros_like(u_b)
    else:
        theta = (np.pi / 2) * (np.arange(resolution + 1) / resolution)
        psi = 2 * np.pi * (np.arange(resolution) / resolution)
        alpha = np.repeat(np.cos(theta), resolution)
        beta = np.outer(np.sin(theta), np.exp(1j * psi)).reshape(-1)
        coeffs = np.stack([alpha + 0j, beta], axis=1)
    basis = np.stack([u_b, u_e])
    w_all = math.sqrt(params.p_max) * (coeffs @ basis)
    c_b, c_e, c_s = _capacities(w_all, h_b, h_e, interference_legit, interference_eve, params.noise_power)
    best = int(np.argmax(c_s))
    return BeamOracleResult(w_all[best], float(c_b[best]), float(c_e[best]), float(c_s[best]))


def optimal_secrecy_beamformer(
    h_b, h_e, params: RadioParams, interference_legit: float = 0.0, interference_eve: float = 0.0
) -> BeamOracleResult:
    """Closed-form full-power optimum via the dominant generalized eigenvector.

    At ``||w||^2 = P`` the secrecy ratio is a generalized Rayleigh quotient of
    ``I/P + h_b h_b^H / N_b`` over ``I/P + h_e h_e^H / N_e``.
    """
    h_b = np.asarray(h_b, dtype=complex)
    h_e = np.asarray(h_e, dtype=complex)
    n_b = interference_legit + params.noise_power
    n_e = interference_eve + params.noise_power
    m = h_b.size
    a = np.eye(m) / params.p_max + np.outer(h_b, h_b.conj()) / n_b
    b = np.eye(m) / params.p_max + np.outer(h_e, h_e.conj()) / n_e
    # B is Hermitian positive definite: whiten with its Cholesky factor
    l_inv = np.linalg.inv(np.linalg.cholesky(b))
    c = l_inv @ a @ l_inv.conj().T
    vals, vecs = np.linalg.eigh((c + c.conj().T) / 2)
    v = l_inv.conj().T @ vecs[:, -1]
    w = math.sqrt(params.p_max) * v / np.linalg.norm(v)
    c_b, c_e, c_s = _capacities(w[None, :], h_b, h_e, interference_legit, interference_eve, params.noise_power)
    return BeamOracleResult(w, float(c_b[0]), float(c_e[0]), float(c_s[0]))


def beam_result(w, h_b, h_e, params: RadioParams, interference_legit=0.0, interference_eve=0.0) -> BeamOracleResult:
    c_b = capacity(received_signal_power(h_b, w), interference_legit, params.noise_power)
    c_e = capacity(received_signal_power(h_e, w), interference_eve, params.noise_power)
    return BeamOracleResult(np.asarray(w), c_b, c_e, secrecy_rate(c_b, c_e))


# ---------------------------------------------------------------- trajectory


def cell_center(config, ix: int, iy: int, grid: int) -> Pose:
    return Pose(
        (ix + 0.5) * config.width / grid,
        (iy + 0.5) * config.height / grid,
        config.aav_altitude,
    )


def cell_of(config, pose: Pose, grid: int) -> tuple[int, int]:
    ix = min(int(pose.x / config.width * grid), grid - 1)
    iy = min(int(pose.y / config.height * grid), grid - 1)
    return ix, iy


def secrecy_at(config, aav: Pose, resolution: int = 256) -> BeamOracleResult:
    """Best full-power secrecy at an AAV position, reusing the environment physics."""
    r = config.radio
    h_b = los_channel(config.bs, aav, r)
    h_e = los_channel(config.bs, config.eve, r)
    i_b = r.jammer_power * path_gain(distance(aav, config.jammer), r)
    i_e = r.jammer_power * path_gain(distance(config.eve, config.jammer), r)
    return grid_secrecy_beamformer(h_b, h_e, r, resolution, i_b, i_e)


def secrecy_heatmap(config, grid: int, resolution: int = 256) -> np.ndarray:
    values = np.empty((grid, grid))
    for ix in range(grid):
        for iy in range(grid):
            values[ix, iy] = secrecy_at(config, cell_center(config, ix, iy, grid), resolution).c_sec
    return values


def dp_trajectory(config, grid: int = 10, resolution: int = 256, gamma: float = 0.99) -> DpPlan:
    """Maximize summed per-step secrecy over T steps, ending in the destination cell.

    Moves go to one of the 8 neighbouring cells (or stay). A move whose length
    exceeds ``v_max * dt`` takes ``ceil(length / (v_max * dt))`` steps; every step
    of it collects the target cell's value.
    """
    if not 1 <= grid <= 32:
        raise InputError("grid must be in [1, 32]")
    values = secrecy_heatmap(config, grid, resolution)
    step_len = config.v_max * config.dt
    cw, ch = config.width / grid, config.height / grid
    moves = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            length = math.hypot(dx * cw, dy * ch)
            moves.append((dx, dy, max(1, math.ceil(length / step_len - 1e-9))))
    horizon = config.horizon
    start = cell_of(config, config.start, grid)
    dest = cell_of(config, config.destination, grid)

    neg = -np.inf
    best = np.full((horizon + 1, grid, grid), neg)
    back: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    best[0][start] = 0.0
    for t in range(1, horizon + 1):
        for ix in range(grid):
            for iy in range(grid):
                v = values[ix, iy]
                top = neg
                arg = None
                for dx, dy, k in moves:
                    px, py = ix - dx, iy - dy
                    if not (0 <= px < grid and 0 <= py < grid) or t - k < 0:
                        continue
                    prev = best[t - k, px, py]
                    if prev == neg:
                        continue
                    cand = prev + k * v
                    if cand > top:
                        top, arg = cand, (t - k, px, py)
                if arg is not None:
                    best[t, ix, iy] = top
                    back[(t, ix, iy)] = arg
    if best[horizon][dest] == neg:
        raise InfeasibleError("destination cell unreachable within the horizon at v_max")

    # walk back: edges (t0, cell0) -> (t1, cell1)
    edges = []
    node = (horizon, *dest)
    while node[0] > 0:
        prev = back[node]
        edges.append((prev, node))
        node = prev
    edges.reverse()

    cell_path: list[tuple[int, int]] = []
    first = cell_center(config, *start, grid)
    positions: list[tuple[float, float]] = [(first.x, first.y)]
    for (t0, ax, ay), (t1, bx, by) in edges:
        a = cell_center(config, ax, ay, grid)
        b = cell_center(config, bx, by, grid)
        k = t1 - t0
        for j in range(1, k + 1):
            cell_path.append((bx, by))
            f = j / k
            positions.append((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
    per_step = np.array([values[c] for c in cell_path])
    discount = gamma ** np.arange(len(per_step))
    return DpPlan(
        grid,
        values,
        tuple(cell_path),
        tuple(positions),
        float(best[horizon][dest]),
        float(np.sum(per_step * discount)),
    )


def path_value(values: np.ndarray, cell_path) -> float:
    return float(sum(values[c] for c in cell_path))


def write_heatmap_csv(path, config, values: np.ndarray) -> None:
    grid = values.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ix", "iy", "x", "y", "c_sec"])
        for ix in range(grid):
            for iy in range(grid):
                c = cell_center(config, ix, iy, grid)
                writer.writerow([ix, iy, repr(c.x), repr(c.y), repr(float(values[ix, iy]))])
