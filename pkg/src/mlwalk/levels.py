"""Level chain simulation: paths, return times to 0 and excursion variables.

An excursion starts at level 0 and ends at the first return to 0.  Along it
we record its length ``tau0``, the number ``n_visits_level1`` of visits to
level 1 and ``Z = sum_{j < tau0} Lambda**(2 L_j)``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from mlwalk.model import AnomalousParams, ModelParams, make_anomalous
from mlwalk.parallel import DEFAULT_CHUNK, map_chunks

__all__ = [
    "DEFAULT_CAP",
    "ExcursionBatch",
    "ExcursionRecord",
    "LevelPath",
    "sample_excursion",
    "sample_excursions",
    "sample_excursions_seeded",
    "simulate_levels",
    "step_level",
    "write_excursions_csv",
]

DEFAULT_CAP = 10**7
_INT64_MAX = np.iinfo(np.int64).max


def step_level(current: int, params: ModelParams, rng: np.random.Generator) -> int:
    """One transition of the level chain from ``current``."""
    u = rng.random()
    if current == 0:
        return 1 if u < params.p_up0 else 0
    if u < params.p_up:
        return current + 1
    if u < params.p_up + params.p_down:
        return current - 1
    return current


@dataclass(frozen=True)
class LevelPath:
    levels: np.ndarray
    zero_returns: np.ndarray
    local_time_zero: int

    @classmethod
    def from_levels(cls, levels: np.ndarray) -> "LevelPath":
        levels = np.asarray(levels, dtype=np.int64)
        zr = np.flatnonzero(levels[1:] == 0) + 1
        return cls(levels, zr, int(len(zr)))

    @property
    def n(self) -> int:
        return len(self.levels) - 1


def _walk_levels(L0: int, u: np.ndarray, pu: float, pud: float, pu0: float) -> np.ndarray:
    out = np.empty(len(u) + 1, dtype=np.int64)
    out[0] = cur = L0
    for i, x in enumerate(u.tolist(), 1):
        if cur == 0:
            cur = 1 if x < pu0 else 0
        elif x < pu:
            cur += 1
        elif x < pud:
            cur -= 1
        out[i] = cur
    return out


def simulate_levels(params: ModelParams, n: int, L0: int, rng: np.random.Generator) -> LevelPath:
    """Path ``L_0, ..., L_n`` of the level chain started at ``L0``."""
    if n < 0 or L0 < 0:
        raise ValueError("n and L0 must be non-negative")
    u = rng.random(n)
    levels = _walk_levels(L0, u, float(params.p_up), float(params.p_up + params.p_down), float(params.p_up0))
    return LevelPath.from_levels(levels)


@dataclass(frozen=True)
class ExcursionRecord:
    tau0: int
    n_visits_level1: int
    z_value: float
    truncated: bool = False
    overflow: bool = False
    z_exact: int | None = None

    @property
    def usable(self) -> bool:
        return not (self.truncated or self.overflow)


def _check_excursion_spec(spec: AnomalousParams | ModelParams) -> tuple[float, float, int | None]:
    if isinstance(spec, AnomalousParams):
        return float(spec.lam), float(spec.p_up), spec.integer_lambda
    lam = spec.geometric_lambda
    if lam is None:
        raise ValueError("excursion variables are defined for the exponential-speed class only")
    ilam = int(lam) if float(lam).is_integer() else None
    return lam, float(spec.p_up), ilam


def sample_excursion(spec: AnomalousParams, cap: int, rng: np.random.Generator) -> ExcursionRecord:
    """One excursion from 0, stopped at the first return to 0 or after ``cap`` steps.

    For integer ``Lambda`` the excursion variable is also kept as an exact integer.
    """
    if cap < 2:
        raise ValueError("cap must be at least 2")
    lam, pu, ilam = _check_excursion_spec(spec)
    sq = ilam * ilam if ilam is not None else None
    z = 1.0 + lam * lam
    z_int = 1 + sq if sq is not None else None
    level, j, visits = 1, 1, 1
    while j < cap:
        level = level + 1 if rng.random() < pu else level - 1
        j += 1
        if level == 0:
            zf = float(z_int) if z_int is not None and z_int < 2**1000 else z
            overflow = not np.isfinite(zf)
            return ExcursionRecord(j, visits, zf, False, overflow, z_int)
        if level == 1:
            visits += 1
        z += lam ** (2 * level)
        if z_int is not None:
            z_int += sq**level
    return ExcursionRecord(cap, visits, z, True, not np.isfinite(z), z_int)


@dataclass(frozen=True)
class ExcursionBatch:
    """Columnar batch of excursions (``z_int`` is ``None`` unless ``Lambda`` is an integer)."""

    tau0: np.ndarray
    n_visits_level1: np.ndarray
    z_value: np.ndarray
    truncated: np.ndarray
    overflow: np.ndarray
    z_int: np.ndarray | None = None
    stream: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.tau0)

    @property
    def usable(self) -> np.ndarray:
        return ~(self.truncated | self.overflow)

    def records(self) -> Iterator[ExcursionRecord]:
        for i in range(len(self)):
            yield ExcursionRecord(
                int(self.tau0[i]),
                int(self.n_visits_level1[i]),
                float(self.z_value[i]),
                bool(self.truncated[i]),
                bool(self.overflow[i]),
                None if self.z_int is None else int(self.z_int[i]),
            )

    @classmethod
    def from_records(cls, records: Iterable[ExcursionRecord]) -> "ExcursionBatch":
        recs = list(records)
        exact = all(r.z_exact is not None for r in recs)
        return cls(
            np.array([r.tau0 for r in recs], dtype=np.int64),
            np.array([r.n_visits_level1 for r in recs], dtype=np.int64),
            np.array([r.z_value for r in recs], dtype=float),
            np.array([r.truncated for r in recs], dtype=bool),
            np.array([r.overflow for r in recs], dtype=bool),
            np.array([min(r.z_exact, _INT64_MAX) for r in recs], dtype=np.int64) if exact and recs else None,
        )

    @classmethod
    def concat(cls, batches: list["ExcursionBatch"]) -> "ExcursionBatch":
        streams = [np.full(len(b), i, dtype=np.int64) for i, b in enumerate(batches)]
        has_int = all(b.z_int is not None for b in batches)
        return cls(
            np.concatenate([b.tau0 for b in batches]),
            np.concatenate([b.n_visits_level1 for b in batches]),
            np.concatenate([b.z_value for b in batches]),
            np.concatenate([b.truncated for b in batches]),
            np.concatenate([b.overflow for b in batches]),
            np.concatenate([b.z_int for b in batches]) if has_int else None,
            np.concatenate(streams),
        )


def sample_excursions(
    spec: AnomalousParams, count: int, rng: np.random.Generator, cap: int = DEFAULT_CAP
) -> ExcursionBatch:
    """``count`` independent excursions, simulated in lockstep.

    Walkers whose exact integer ``Z`` would leave the int64 range are flagged
    ``overflow`` and should be treated like truncated ones.
    """
    if cap < 2:
        raise ValueError("cap must be at least 2")
    lam, pu, ilam = _check_excursion_spec(spec)
    tau = np.full(count, cap, dtype=np.int64)
    visits = np.ones(count, dtype=np.int64)
    z = np.full(count, 1.0 + lam * lam)
    trunc = np.ones(count, dtype=bool)
    over = np.zeros(count, dtype=bool)
    exact = ilam is not None
    if exact:
        sq = ilam * ilam
        pows = [1]
        while pows[-1] <= _INT64_MAX // sq:
            pows.append(pows[-1] * sq)
        pow_table = np.array(pows, dtype=np.int64)
        zi = np.full(count, 1 + sq, dtype=np.int64)

    idx = np.arange(count)
    level = np.ones(count, dtype=np.int64)
    a_z = z.copy()
    a_zi = zi.copy() if exact else None
    a_vis = visits.copy()
    a_over = over.copy()
    j = 1
    while len(idx) and j < cap:
        step = np.where(rng.random(len(idx)) < pu, 1, -1)
        level += step
        j += 1
        done = level == 0
        if done.any():
            ids = idx[done]
            tau[ids] = j
            visits[ids] = a_vis[done]
            z[ids] = a_z[done]
            trunc[ids] = False
            over[ids] = a_over[done]
            if exact:
                zi[ids] = a_zi[done]
            keep = ~done
            idx, level, a_z, a_vis, a_over = idx[keep], level[keep], a_z[keep], a_vis[keep], a_over[keep]
            if exact:
                a_zi = a_zi[keep]
        a_vis += level == 1
        with np.errstate(over="ignore"):
            a_z += np.power(lam, 2.0 * level)
        if exact:
            in_range = level < len(pow_table)
            term = pow_table[np.minimum(level, len(pow_table) - 1)]
            bad = ~in_range | (a_zi > _INT64_MAX - term)
            a_over |= bad
            a_zi = np.where(bad, a_zi, a_zi + term)
        a_over |= ~np.isfinite(a_z)
    if len(idx):
        visits[idx] = a_vis
        z[idx] = a_z
        over[idx] = a_over
        if exact:
            zi[idx] = a_zi
    return ExcursionBatch(tau, visits, z, trunc, over, zi if exact else None)


def sample_excursions_seeded(
    spec: AnomalousParams,
    count: int,
    seed: int,
    cap: int = DEFAULT_CAP,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    tag: str = "excursions",
) -> ExcursionBatch:
    """Chunked version of :func:`sample_excursions`; chunk ``i`` uses stream ``(seed, tag, i)``."""
    func = functools.partial(_excursion_chunk, spec, cap)
    return ExcursionBatch.concat(map_chunks(func, count, seed, tag, chunk_size, workers))


def _excursion_chunk(spec, cap, count, rng):
    return sample_excursions(spec, count, rng, cap)


def write_excursions_csv(batch: ExcursionBatch, path: str | Path, seed: int) -> None:
    """Columns: seed, stream, tau0, n_visits_level1, z_value, truncated."""
    streams = batch.stream if batch.stream is not None else np.zeros(len(batch), dtype=np.int64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "stream", "tau0", "n_visits_level1", "z_value", "truncated"])
        for i in range(len(batch)):
            z = int(batch.z_int[i]) if batch.z_int is not None and batch.usable[i] else repr(float(batch.z_value[i]))
            w.writerow([seed, int(streams[i]), int(batch.tau0[i]), int(batch.n_visits_level1[i]), z, int(batch.truncated[i])])


def anomalous_model(spec: AnomalousParams | ModelParams) -> ModelParams:
    return make_anomalous(spec) if isinstance(spec, AnomalousParams) else spec
