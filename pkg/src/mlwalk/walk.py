"""Displacement process, time change and the continuous-time walk.

A :class:`WalkSample` stores columnar prefix sums; ``m_partial[n]`` is the
position after ``n`` displacements and ``t_partial[n]`` the absolute time at
which displacement ``n`` starts.  Between those instants the walker moves in
a straight line at speed ``U_{L_n}``, so inverting the time change is a
binary search plus one linear solve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mlwalk.levels import LevelPath, simulate_levels
from mlwalk.model import ModelParams

__all__ = [
    "WalkSample",
    "endpoint_batch",
    "evaluate_walk_at",
    "position_batch",
    "simulate_walk",
    "variance_at_returns",
    "variance_profile",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class WalkSample:
    params: ModelParams
    levels: LevelPath
    xi: np.ndarray | None
    displacements: np.ndarray | None
    m_partial: np.ndarray
    t_partial: np.ndarray
    v_partial: np.ndarray | None

    @property
    def n_steps(self) -> int:
        return len(self.t_partial) - 1

    def displacement(self, k: int) -> np.ndarray:
        if self.displacements is not None:
            return self.displacements[k]
        return self.m_partial[k + 1] - self.m_partial[k]


def simulate_walk(
    params: ModelParams, n_steps: int, L0: int, rng: np.random.Generator, store_steps: bool = True
) -> WalkSample:
    """Simulate ``n_steps`` displacements from level ``L0``.

    ``store_steps=False`` drops the per-step jump arrays and keeps only the
    prefix sums, which is all :func:`evaluate_walk_at` needs.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    path = simulate_levels(params, n_steps, L0, rng)
    xi = params.xi_law.sample(rng, n_steps)
    lv = path.levels[:-1]
    sig = params.timescales.at(lv)
    disp = (params.speeds.at(lv) * sig)[:, None] * xi
    m = np.zeros((n_steps + 1, params.d))
    np.cumsum(disp, axis=0, out=m[1:])
    t = np.zeros(n_steps + 1)
    np.cumsum(sig * np.linalg.norm(xi, axis=1), out=t[1:])
    v = None
    lam = params.geometric_lambda
    if lam is not None:
        v = np.zeros(n_steps + 1)
        np.cumsum(np.power(lam, 2.0 * lv), out=v[1:])
    if not store_steps:
        xi = disp = None
    return WalkSample(params, path, xi, disp, m, t, v)


def evaluate_walk_at(sample: WalkSample, t: float) -> tuple[np.ndarray, int]:
    """Position and level of the continuous-time walk at absolute time ``t``."""
    T = sample.t_partial
    if t < 0 or t > T[-1]:
        raise ValueError(f"t={t} outside the simulated horizon [0, {T[-1]}]")
    k = int(np.searchsorted(T, t, side="right")) - 1
    if k >= sample.n_steps:
        return sample.m_partial[-1].copy(), int(sample.levels.levels[-1])
    frac = (t - T[k]) / (T[k + 1] - T[k])
    pos = sample.m_partial[k] + frac * sample.displacement(k)
    return pos, int(sample.levels.levels[k])


def _require_v(sample: WalkSample) -> np.ndarray:
    if sample.v_partial is None:
        raise ValueError("V_n is only defined for the exponential-speed class (U_l = Lambda^l, sigma = 1, d = 1)")
    return sample.v_partial


def variance_profile(sample: WalkSample, times) -> np.ndarray:
    """``V_n = sum_{j<n} Lambda**(2 L_j)`` at the requested displacement times."""
    v = _require_v(sample)
    times = np.asarray(times, dtype=np.int64)
    if np.any(times < 0) or np.any(times > sample.n_steps):
        raise ValueError("requested times outside the simulated horizon")
    return v[times]


def variance_at_returns(sample: WalkSample) -> np.ndarray:
    """``V`` at the successive return times of the level chain to 0."""
    return _require_v(sample)[sample.levels.zero_returns]


def write_trajectory_csv(sample: WalkSample, path: str | Path) -> None:
    """Columns: step, level, xi, displacement, m_partial, t_partial, v_partial (per-coordinate for d > 1)."""
    d = sample.params.d

    def cols(name):
        return [name] if d == 1 else [f"{name}_{i + 1}" for i in range(d)]

    n = sample.n_steps
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "level", *cols("xi"), *cols("displacement"), *cols("m_partial"), "t_partial", "v_partial"])
        for k in range(n + 1):
            if k < n and sample.xi is not None:
                xi = [repr(float(x)) for x in sample.xi[k]]
                disp = [repr(float(x)) for x in sample.displacements[k]]
            else:
                xi = disp = [""] * d
            v = "" if sample.v_partial is None else repr(float(sample.v_partial[k]))
            w.writerow([k, int(sample.levels.levels[k]), *xi, *disp,
                        *(repr(float(x)) for x in sample.m_partial[k]), repr(float(sample.t_partial[k])), v])


def _step_levels(level: np.ndarray, u: np.ndarray, pu: float, pud: float, pu0: float) -> np.ndarray:
    at_zero = level == 0
    move = np.where(u < pu, 1, np.where(u < pud, -1, 0))
    return np.where(at_zero, (u < pu0).astype(np.int64), level + move)


def _probs(params: ModelParams) -> tuple[float, float, float]:
    return float(params.p_up), float(params.p_up + params.p_down), float(params.p_up0)


def position_batch(
    params: ModelParams, n_grid, count: int, rng: np.random.Generator, L0: np.ndarray | int = 0
) -> np.ndarray:
    """``M_n`` at every ``n`` in ``n_grid`` for ``count`` independent walks, shape ``(len(grid), count, d)``."""
    grid = np.asarray(sorted(set(int(n) for n in n_grid)), dtype=np.int64)
    if len(grid) == 0 or grid[0] < 0:
        raise ValueError("grid must contain non-negative displacement times")
    level = np.broadcast_to(np.asarray(L0, dtype=np.int64), (count,)).copy()
    pos = np.zeros((count, params.d))
    out = np.empty((len(grid), count, params.d))
    gi = 0
    while gi < len(grid) and grid[gi] == 0:
        out[gi] = pos
        gi += 1
    pu, pud, pu0 = _probs(params)
    for step in range(1, int(grid[-1]) + 1):
        scale = params.speeds.at(level) * params.timescales.at(level)
        pos += scale[:, None] * params.xi_law.sample(rng, count)
        level = _step_levels(level, rng.random(count), pu, pud, pu0)
        if step == grid[gi]:
            out[gi] = pos
            gi += 1
    return out


def endpoint_batch(
    params: ModelParams, t: float, count: int, rng: np.random.Generator, L0: np.ndarray | int = 0
) -> np.ndarray:
    """Walk position ``W^(1)_t`` at absolute time ``t`` for ``count`` independent walks, shape ``(count, d)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    level = np.broadcast_to(np.asarray(L0, dtype=np.int64), (count,)).copy()
    pos = np.zeros((count, params.d))
    clock = np.zeros(count)
    out = np.empty((count, params.d))
    idx = np.arange(count)
    pu, pud, pu0 = _probs(params)
    while len(idx):
        xi = params.xi_law.sample(rng, len(idx))
        sig = params.timescales.at(level)
        dt = sig * np.linalg.norm(xi, axis=1)
        disp = (params.speeds.at(level) * sig)[:, None] * xi
        ends = clock + dt >= t
        if ends.any():
            frac = np.where(dt[ends] > 0, (t - clock[ends]) / np.where(dt[ends] > 0, dt[ends], 1), 0.0)
            out[idx[ends]] = pos[ends] + frac[:, None] * disp[ends]
            keep = ~ends
            idx, level, pos, clock = idx[keep], level[keep], pos[keep], clock[keep]
            dt, disp = dt[keep], disp[keep]
        pos += disp
        clock += dt
        level = _step_levels(level, rng.random(len(idx)), pu, pud, pu0)
    return out
