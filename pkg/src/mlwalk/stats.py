"""Monte Carlo checks of the limit behaviour at desk scale.

Each check returns a :class:`TestReport`.  The sampling step and the
evaluation step are separate (``*_from_*`` functions) so that samples can be
generated in parallel chunks and evaluated once on the merged data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from mlwalk.levels import ExcursionBatch, ExcursionRecord, LevelPath
from mlwalk.model import AnomalousParams, ModelParams, StationaryMeasure, alpha_exponent, diffusion_constants, make_anomalous, stationary_measure
from mlwalk.walk import endpoint_batch, position_batch

__all__ = [
    "DEFAULT_THRESHOLD",
    "DivergentVarianceError",
    "TestReport",
    "empirical_charfunc",
    "excursion_tests",
    "expected_slope",
    "fclt_check",
    "fclt_from_endpoints",
    "lattice_violations",
    "occupation_test",
    "sample_stationary_levels",
    "scaling_exponent",
    "scaling_from_positions",
    "underscaling_check",
]

DEFAULT_THRESHOLD = 1e-3


class DivergentVarianceError(ValueError):
    """The stationary second moment of the displacement is infinite."""


@dataclass
class TestReport:
    name: str
    statistic: float
    p_value: float
    n_samples: int
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0) and not math.isnan(self.p_value):
            raise ValueError("p_value must lie in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "n_samples": int(self.n_samples),
            "passed": bool(self.passed),
            "detail": _plain(self.detail),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_row(self) -> dict[str, Any]:
        """Flat mapping; non-scalar diagnostics are JSON-encoded."""
        row = {k: v for k, v in self.to_dict().items() if k != "detail"}
        for k, v in _plain(self.detail).items():
            row[f"detail.{k}"] = v if isinstance(v, (int, float, str, bool)) or v is None else json.dumps(v)
        return row


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, Fraction)):
        return float(x)
    return x


# ---------------------------------------------------------------- FCLT


def sample_stationary_levels(params: ModelParams, count: int, rng: np.random.Generator, tail: float = 1e-15) -> np.ndarray:
    """Initial levels drawn from the stationary law, truncated where the remaining mass is below ``tail``."""
    level = 8
    mu = stationary_measure(params, level)
    while float(mu.tail_bound) > tail:
        level *= 2
        mu = stationary_measure(params, level)
    w = mu.floats()
    return rng.choice(len(w), size=count, p=w / w.sum())


def _require_finite(params: ModelParams):
    dc = diffusion_constants(params)
    if not dc.finite:
        raise DivergentVarianceError(
            "the stationary variance v_bar = sum_l mu_l U_l^2 sigma_l^2 is infinite "
            "(finiteness condition on mu and U, sigma violated); no Brownian limit to test"
        )
    return dc


def fclt_from_endpoints(
    params: ModelParams, t: float, endpoints: np.ndarray, threshold: float = DEFAULT_THRESHOLD, var_tol: float = 0.05
) -> TestReport:
    """Compare ``sqrt(m/(v_bar t)) W_t`` against the Gaussian limit."""
    dc = _require_finite(params)
    x = np.asarray(endpoints, dtype=float).reshape(len(endpoints), -1) * math.sqrt(dc.m / (dc.v_bar * t))
    cov = params.xi_law.covariance()
    d = x.shape[1]
    if d == 1:
        var_ratio = float(np.var(x[:, 0], ddof=1) / cov[0, 0])
        ks = sps.kstest(x[:, 0] / math.sqrt(cov[0, 0]), "norm", method="asymp")
        stat, p = float(ks.statistic), float(ks.pvalue)
        detail = {"variance_ratio": var_ratio, "ks_statistic": stat}
        var_err = abs(var_ratio - 1)
    else:
        emp = np.cov(x, rowvar=False)
        ratio = emp / cov
        var_ratio = float(np.trace(emp) / np.trace(cov))
        var_err = float(np.max(np.abs(emp - cov)) / np.max(np.abs(cov)))
        coord = [sps.kstest(x[:, i] / math.sqrt(cov[i, i]), "norm", method="asymp") for i in range(d)]
        stat = max(float(c.statistic) for c in coord)
        p = min(1.0, d * min(float(c.pvalue) for c in coord))
        detail = {"variance_ratio": var_ratio, "covariance_ratio": ratio.tolist(), "ks_statistic": stat}
    detail.update(v_bar=dc.v_bar, m=dc.m, t=t, var_tol=var_tol, threshold=threshold)
    passed = p > threshold and var_err <= var_tol
    return TestReport("fclt", stat, p, len(x), passed, detail)


def fclt_check(
    params: ModelParams,
    n: float,
    n_samples: int,
    rng: np.random.Generator,
    threshold: float = DEFAULT_THRESHOLD,
    var_tol: float = 0.05,
    stationary_start: bool = True,
) -> TestReport:
    """Endpoint test of the Brownian limit at absolute time ``n``.

    Raises :class:`DivergentVarianceError` when ``v_bar`` is infinite.
    """
    _require_finite(params)
    L0 = sample_stationary_levels(params, n_samples, rng) if stationary_start else 0
    ends = endpoint_batch(params, n, n_samples, rng, L0)
    return fclt_from_endpoints(params, n, ends, threshold, var_tol)


# ---------------------------------------------------------------- scaling


def expected_slope(spec: AnomalousParams | ModelParams) -> float:
    """``1/alpha`` in the anomalous regime, ``1/2`` when the variance is finite."""
    params = make_anomalous(spec) if isinstance(spec, AnomalousParams) else spec
    if diffusion_constants(params).finite:
        return 0.5
    if isinstance(spec, AnomalousParams):
        return 1 / spec.alpha
    lam = params.geometric_lambda
    if lam is None:
        raise ValueError("no closed-form scaling exponent for these parameters")
    return 1 / alpha_exponent(lam, params.p_up, params.p_down)


def _slope(log_n: np.ndarray, med: np.ndarray) -> np.ndarray:
    # least-squares slope along the last axis
    x = log_n - log_n.mean()
    y = np.log(med)
    return (y - y.mean(axis=-1, keepdims=True)) @ x / (x @ x)


def scaling_from_positions(
    spec: AnomalousParams | ModelParams,
    grid: Sequence[int],
    positions: np.ndarray,
    rng: np.random.Generator,
    n_boot: int = 200,
    tolerance: float | None = None,
) -> TestReport:
    """Fit ``log median |M_n|`` against ``log n``; ``positions`` has shape ``(len(grid), samples[, d])``."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 3 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("grid must be increasing with at least 3 positive points")
    pos = np.asarray(positions, dtype=float)
    mags = np.abs(pos) if pos.ndim == 2 else np.linalg.norm(pos, axis=-1)
    count = mags.shape[1]
    log_n = np.log(grid)
    med = np.median(mags, axis=1)
    slope = float(_slope(log_n, med))
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, count, count)
        boots[b] = _slope(log_n, np.median(mags[:, idx], axis=1))
    sd = float(np.std(boots, ddof=1))
    expected = expected_slope(spec)
    tol = 0.1 * expected if tolerance is None else tolerance
    z = (slope - expected) / sd if sd > 0 else (0.0 if slope == expected else math.inf)
    p = float(2 * sps.norm.sf(abs(z)))
    detail = {
        "expected_slope": expected,
        "tolerance": tol,
        "bootstrap_half_width": 1.96 * sd,
        "grid": grid.astype(int).tolist(),
        "medians": med.tolist(),
    }
    return TestReport("scaling", slope, p, count, abs(slope - expected) <= tol, detail)


def scaling_exponent(
    spec: AnomalousParams | ModelParams,
    n_grid: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    n_boot: int = 200,
    tolerance: float | None = None,
) -> TestReport:
    """Median-based scaling exponent of ``M_n`` started from level 0.

    Medians are used because moments of order ``>= alpha`` diverge.
    ``passed`` means the slope is within ``tolerance`` (default 10% of the
    expected slope) of ``1/alpha`` or ``1/2``.
    """
    params = make_anomalous(spec) if isinstance(spec, AnomalousParams) else spec
    grid = sorted(int(n) for n in n_grid)
    pos = position_batch(params, grid, n_samples, rng, 0)
    return scaling_from_positions(spec, grid, pos, rng, n_boot, tolerance)


def underscaling_check(
    spec: AnomalousParams,
    j_values: Iterable[int],
    n_samples: int,
    rng: np.random.Generator,
    r: float = 1.0,
    target: float = 0.5,
) -> TestReport:
    """Exceedance frequencies of ``|M_n| / b_n > r`` along ``n_j = floor(Lambda**(alpha j))``.

    ``b_n = n**(1/alpha) / log(n)`` grows strictly slower than the natural
    scale, so these frequencies should be large; ``p_value`` is the one-sided
    binomial probability of the last frequency if the true value were
    ``target``.  This is only a finite-n proxy for a limsup statement.
    """
    alpha = spec.alpha
    ns = sorted({int(math.floor(spec.lambda_ ** (alpha * j))) for j in j_values})
    ns = [n for n in ns if n >= 3]
    if not ns:
        raise ValueError("need at least one n_j >= 3")
    pos = position_batch(make_anomalous(spec), ns, n_samples, rng, 0)[:, :, 0]
    b = np.array([n ** (1 / alpha) / math.log(n) for n in ns])
    freq = (np.abs(pos) / b[:, None] > r).mean(axis=1)
    hits = int(round(freq[-1] * n_samples))
    p = float(sps.binomtest(hits, n_samples, target, alternative="less").pvalue)
    detail = {"n_j": ns, "exceedance": freq.tolist(), "r": r, "target": target}
    return TestReport("underscaling", float(freq[-1]), p, n_samples, bool(freq[-1] > target), detail)


# ---------------------------------------------------------------- excursions


def _as_batch(records) -> ExcursionBatch:
    if isinstance(records, ExcursionBatch):
        return records
    return ExcursionBatch.from_records(list(records))


def _lattice(lam) -> tuple[int, int]:
    lam = Fraction(lam)
    if lam.denominator != 1:
        raise ValueError("lattice check needs an integer Lambda")
    l2 = int(lam) ** 2
    return 1 + l2, l2 + l2 * l2


def lattice_violations(records, lam) -> np.ndarray:
    """Indices of usable excursions whose ``Z`` is off ``(1+L^2) + (L^2+L^4) N``."""
    offset, step = _lattice(lam)
    if isinstance(records, ExcursionBatch):
        usable = records.usable
        z = records.z_int if records.z_int is not None else records.z_value
        bad = [i for i in np.flatnonzero(usable) if not _on_lattice(z[i], offset, step)]
        return np.array(bad, dtype=np.int64)
    bad = []
    for i, rec in enumerate(records):
        if not rec.usable:
            continue
        z = rec.z_exact if rec.z_exact is not None else rec.z_value
        if not _on_lattice(z, offset, step):
            bad.append(i)
    return np.array(bad, dtype=np.int64)


def _on_lattice(z, offset: int, step: int) -> bool:
    if isinstance(z, (float, np.floating)):
        if not float(z).is_integer():
            return False
        z = int(z)
    z = int(z)
    return z >= offset and (z - offset) % step == 0


def excursion_tests(
    records: ExcursionBatch | Sequence[ExcursionRecord],
    spec: AnomalousParams,
    threshold: float = DEFAULT_THRESHOLD,
    min_records: int = 1000,
) -> TestReport:
    """Chi-square test of level-1 visit counts against ``Geometric(p_down)`` plus the exact lattice check.

    Truncated and overflowed excursions are excluded and counted in
    ``detail["censored_fraction"]``.
    """
    batch = _as_batch(records)
    usable = batch.usable
    n_ok = int(usable.sum())
    if n_ok == 0:
        raise ValueError("every excursion in the batch was truncated")
    if n_ok < min_records:
        raise ValueError(f"need at least {min_records} complete excursions, got {n_ok}")
    visits = batch.n_visits_level1[usable]
    pu, pd = float(spec.p_up), float(spec.p_down)
    # bins 1..K with expected count >= 5, everything above pooled
    k_max = 1
    while n_ok * pd * pu ** k_max >= 5:
        k_max += 1
    ks = np.arange(1, k_max + 1)
    expected = n_ok * pd * pu ** (ks - 1)
    observed = np.array([(visits == k).sum() for k in ks], dtype=float)
    expected = np.append(expected, n_ok * pu**k_max)
    observed = np.append(observed, (visits > k_max).sum())
    chi = sps.chisquare(observed, expected)
    detail: dict[str, Any] = {
        "censored_fraction": 1 - n_ok / len(batch),
        "truncated": int(batch.truncated.sum()),
        "overflow": int(batch.overflow.sum()),
        "bins": len(observed),
        "threshold": threshold,
    }
    violations = 0
    if spec.integer_lambda is not None:
        violations = len(lattice_violations(batch, spec.lam))
        detail["lattice_checked"] = True
    else:
        detail["lattice_checked"] = False
    detail["lattice_violations"] = violations
    p = float(chi.pvalue)
    return TestReport("excursions", float(chi.statistic), p, n_ok, p > threshold and violations == 0, detail)


def empirical_charfunc(z_samples, thetas, chunk: int = 1 << 18) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean of ``exp(i theta Z)`` for each ``theta`` and its standard error.

    The standard error is ``sqrt((1 - |phi|^2) / N)`` with a floor for the
    float phase error ``eps * mean|theta Z|``, which dominates at lattice
    points where ``|phi| = 1``.
    """
    z = np.asarray(z_samples, dtype=float)
    if z.size == 0:
        raise ValueError("need at least one sample")
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    acc = np.zeros(len(th), dtype=complex)
    for s in range(0, len(z), chunk):
        acc += np.exp(1j * np.multiply.outer(th, z[s : s + chunk])).sum(axis=1)
    phi = acc / len(z)
    se = np.sqrt(np.maximum(1 - np.abs(phi) ** 2, 0) / len(z))
    floor = np.finfo(float).eps * np.abs(th) * np.mean(np.abs(z))
    return phi, np.maximum(se, floor)


# ---------------------------------------------------------------- occupation


def _path_valid(levels: np.ndarray, params: ModelParams) -> bool:
    cur, nxt = levels[:-1], levels[1:]
    step = nxt - cur
    if np.any(levels < 0) or np.any(np.abs(step) > 1):
        return False
    at0 = cur == 0
    if np.any(at0 & (step < 0)):
        return False
    if params.p_up0 == 0 and np.any(at0 & (step == 1)):
        return False
    if params.p_up0 == 1 and np.any(at0 & (step == 0)):
        return False
    pos = ~at0
    if params.p_up == 0 and np.any(pos & (step == 1)):
        return False
    if params.p_down == 0 and np.any(pos & (step == -1)):
        return False
    if params.p_up + params.p_down == 1 and np.any(pos & (step == 0)):
        return False
    return True


def occupation_test(
    path: LevelPath, mu: StationaryMeasure, threshold: float = DEFAULT_THRESHOLD, batches: int = 50, tv_tol: float = 0.01
) -> TestReport:
    """Empirical occupation of ``L_0..L_{n-1}`` against the stationary law.

    The level-0 standard error uses non-overlapping batch means; a path with
    a move the kernel forbids is flagged invalid and fails.
    """
    n = path.n
    if n < 1000:
        raise ValueError("need a path with at least 1000 steps")
    levels = path.levels[:n]
    if mu.params is not None and not _path_valid(path.levels, mu.params):
        return TestReport("occupation", math.nan, 0.0, n, False, {"invalid_path": True})
    K = mu.max_level
    counts = np.bincount(np.minimum(levels, K + 1), minlength=K + 2)[: K + 2] / n
    w = mu.floats()
    tv = 0.5 * (np.abs(counts[: K + 1] - w).sum() + abs(counts[K + 1] - float(mu.tail_bound)))
    ind = (levels == 0).astype(float)
    size = n // batches
    means = ind[: size * batches].reshape(batches, size).mean(axis=1)
    se0 = float(means.std(ddof=1) / math.sqrt(batches))
    f0 = float(counts[0])
    z = (f0 - w[0]) / se0 if se0 > 0 else (0.0 if f0 == w[0] else math.inf)
    p = float(2 * sps.norm.sf(abs(z)))
    detail = {
        "invalid_path": False,
        "level0_frequency": f0,
        "mu0": float(w[0]),
        "level0_se": se0,
        "tv_distance": float(tv),
        "frequencies": counts.tolist(),
        "threshold": threshold,
        "tv_tol": tv_tol,
    }
    return TestReport("occupation", float(tv), p, n, p > threshold and tv < tv_tol, detail)
