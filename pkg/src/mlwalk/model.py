"""Model parameters, the stationary law of the level chain and derived constants.

Probabilities are held as :class:`fractions.Fraction` so that the stationary
measure is exact whenever the inputs are rational.  Per-level speed and
timescale rules are an explicit prefix followed by a closed-form tail
(constant or geometric), which keeps every series tail analytically bounded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Any

import numpy as np
from scipy import integrate

__all__ = [
    "AnomalousParams",
    "DiffusionConstants",
    "LevelRule",
    "ModelParams",
    "StationaryMeasure",
    "XiLaw",
    "alpha_exponent",
    "diffusion_constants",
    "load_params",
    "make_anomalous",
    "params_from_dict",
    "params_to_dict",
    "stationary_measure",
]

STANDARD_GAUSSIAN = "standard-gaussian-1d"
GAUSSIAN = "gaussian"
TABLE = "table"


def as_fraction(x: Any) -> Fraction:
    """Exact rational from a Fraction, int, decimal/ratio string or float (via its repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"not a finite number: {x!r}")
        return Fraction(repr(x))
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _fraction_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class LevelRule:
    """Per-level value ``f(l)``: ``prefix[l]`` for ``l < len(prefix)``, then a tail.

    The tail is ``base`` (``tail="constant"``) or ``base * ratio**l``
    (``tail="geometric"``).  ``LevelRule(tail="geometric", ratio=2.0)`` is
    ``l -> 2**l``.
    """

    prefix: tuple[float, ...] = ()
    tail: str = "constant"
    base: float = 1.0
    ratio: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(v) for v in self.prefix))
        if self.tail not in ("constant", "geometric"):
            raise ValueError(f"unknown tail rule {self.tail!r}")
        if not (self.base > 0 and self.ratio > 0):
            raise ValueError("base and ratio must be positive")
        if any(not (v > 0 and math.isfinite(v)) for v in self.prefix):
            raise ValueError("level values must be positive and finite")

    @property
    def tail_ratio(self) -> float:
        return self.ratio if self.tail == "geometric" else 1.0

    def __call__(self, level: int) -> float:
        if level < 0:
            raise ValueError("levels are non-negative")
        if level < len(self.prefix):
            return self.prefix[level]
        if self.tail == "constant":
            return self.base
        return self.base * self.ratio**level

    def at(self, levels: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over an integer array of levels."""
        levels = np.asarray(levels)
        if self.tail == "constant":
            out = np.full(levels.shape, self.base, dtype=float)
        else:
            with np.errstate(over="ignore"):
                out = self.base * np.power(self.ratio, levels.astype(float))
        if self.prefix:
            pre = np.asarray(self.prefix)
            inside = levels < len(pre)
            out = np.where(inside, pre[np.minimum(levels, len(pre) - 1)], out)
        return out

    def is_nondecreasing(self) -> bool:
        vals = list(self.prefix)
        if any(b < a for a, b in zip(vals, vals[1:])):
            return False
        if self.tail == "geometric" and self.ratio < 1:
            return False
        if vals:
            return self(len(vals)) >= vals[-1]
        return True

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"prefix": list(self.prefix), "tail": self.tail, "base": self.base}
        if self.tail == "geometric":
            d["ratio"] = self.ratio
        return d

    @classmethod
    def from_dict(cls, d: Any) -> "LevelRule":
        if isinstance(d, (int, float)):
            return cls(base=float(d))
        return cls(
            prefix=tuple(d.get("prefix", ())),
            tail=d.get("tail", "constant"),
            base=float(d.get("base", 1.0)),
            ratio=float(d.get("ratio", 1.0)),
        )


@dataclass(frozen=True)
class XiLaw:
    """Law of the i.i.d. jumps: standard 1-d Gaussian, centred Gaussian, or a finite table."""

    kind: str = STANDARD_GAUSSIAN
    cov: tuple[tuple[float, ...], ...] | None = None
    values: tuple[tuple[float, ...], ...] | None = None
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == STANDARD_GAUSSIAN:
            return
        if self.kind == GAUSSIAN:
            if self.cov is None:
                raise ValueError("gaussian law needs a covariance matrix")
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            object.__setattr__(self, "cov", tuple(tuple(r) for r in cov.tolist()))
            _check_spd(cov)
            return
        if self.kind == TABLE:
            if self.values is None or self.probs is None:
                raise ValueError("table law needs values and probs")
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim == 1:
                vals = vals[:, None]
            p = np.asarray(self.probs, dtype=float)
            if len(p) != len(vals) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
                raise ValueError("table probabilities must be positive and sum to 1")
            if np.any(np.all(vals == 0, axis=1)):
                raise ValueError("jump table has an atom at 0, which the model excludes")
            if np.max(np.abs(p @ vals)) > 1e-12:
                raise ValueError("jump table must be centred")
            object.__setattr__(self, "values", tuple(tuple(r) for r in vals.tolist()))
            object.__setattr__(self, "probs", tuple(p.tolist()))
            _check_spd(self.covariance())
            return
        raise ValueError(f"unknown jump law {self.kind!r}")

    @property
    def dim(self) -> int:
        if self.kind == STANDARD_GAUSSIAN:
            return 1
        if self.kind == GAUSSIAN:
            return len(self.cov)
        return len(self.values[0])

    def covariance(self) -> np.ndarray:
        if self.kind == STANDARD_GAUSSIAN:
            return np.eye(1)
        if self.kind == GAUSSIAN:
            return np.asarray(self.cov, dtype=float)
        vals = np.asarray(self.values)
        p = np.asarray(self.probs)
        return (vals * p[:, None]).T @ vals

    def mean_norm(self) -> float:
        """``E|xi|`` (Euclidean norm)."""
        if self.kind == STANDARD_GAUSSIAN:
            return math.sqrt(2 / math.pi)
        if self.kind == TABLE:
            vals = np.asarray(self.values)
            return float(np.asarray(self.probs) @ np.linalg.norm(vals, axis=1))
        eig = np.linalg.eigvalsh(self.covariance())
        # E sqrt(Q) = (4 pi)^(-1/2) int_0^inf (1 - E exp(-tQ)) t^(-3/2) dt, Q = sum eig_i Z_i^2
        def integrand(t):
            return (1.0 - np.prod(1.0 + 2.0 * t * eig) ** -0.5) * t**-1.5

        val = integrate.quad(integrand, 0, 1, limit=200)[0] + integrate.quad(integrand, 1, np.inf, limit=200)[0]
        return val / (2 * math.sqrt(math.pi))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` jumps, shape ``(size, dim)``."""
        if self.kind == STANDARD_GAUSSIAN:
            return rng.standard_normal((size, 1))
        if self.kind == GAUSSIAN:
            chol = np.linalg.cholesky(self.covariance())
            return rng.standard_normal((size, self.dim)) @ chol.T
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return np.asarray(self.values)[np.minimum(idx, len(cdf) - 1)]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == GAUSSIAN:
            d["cov"] = [list(r) for r in self.cov]
        elif self.kind == TABLE:
            d["values"] = [list(r) for r in self.values]
            d["probs"] = list(self.probs)
        return d

    @classmethod
    def from_dict(cls, d: Any) -> "XiLaw":
        if isinstance(d, str):
            return cls(kind=d)
        return cls(kind=d.get("kind", STANDARD_GAUSSIAN), cov=d.get("cov"), values=d.get("values"), probs=d.get("probs"))


def _check_spd(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, rtol=0, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    if np.min(np.linalg.eigvalsh(m)) <= 0:
        raise ValueError("covariance must be positive-definite")


@dataclass(frozen=True)
class ModelParams:
    """Full specification of the walk.

    ``p_up``/``p_down`` are the up/down probabilities from a positive level,
    ``p_up0`` the up probability from level 0.
    """

    d: int = 1
    p_up: Fraction = Fraction(1, 3)
    p_down: Fraction = Fraction(2, 3)
    p_up0: Fraction = Fraction(1)
    speeds: LevelRule = field(default_factory=LevelRule)
    timescales: LevelRule = field(default_factory=LevelRule)
    xi_law: XiLaw = field(default_factory=XiLaw)

    def __post_init__(self):
        for name in ("p_up", "p_down", "p_up0"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not (0 < self.p_up < self.p_down):
            raise ValueError("need 0 < p_up < p_down")
        if self.p_up + self.p_down > 1:
            raise ValueError("need p_up + p_down <= 1")
        if not (0 < self.p_up0 <= 1):
            raise ValueError("need 0 < p_up0 <= 1")
        if not self.speeds.is_nondecreasing():
            raise ValueError("speeds must be nondecreasing in the level")
        if self.d < 1 or self.xi_law.dim != self.d:
            raise ValueError(f"jump law has dimension {self.xi_law.dim}, expected d={self.d}")

    @property
    def drift_ratio(self) -> Fraction:
        """``p_up / p_down``, the ratio of consecutive stationary weights."""
        return self.p_up / self.p_down

    @property
    def geometric_lambda(self) -> float | None:
        """``Lambda`` when the params have the exponential-speed structure, else ``None``.

        Structure: d=1, standard Gaussian jumps, unit timescales, ``U_l = Lambda**l``,
        no lazy moves and ``p_up0 = 1``.
        """
        s, t = self.speeds, self.timescales
        if not (
            self.d == 1
            and self.xi_law.kind == STANDARD_GAUSSIAN
            and not t.prefix and t.tail == "constant" and t.base == 1.0
            and not s.prefix and s.tail == "geometric" and s.base == 1.0 and s.ratio > 1
            and self.p_up + self.p_down == 1
            and self.p_up0 == 1
        ):
            return None
        return s.ratio


@dataclass(frozen=True)
class AnomalousParams:
    """Exponential-speed example class, parametrized by ``Lambda`` and one shape value.

    The shape is stored exactly as given (``alpha``, ``beta = Lambda**-alpha`` or
    ``a = alpha/2``) so that high-precision code can recompute ``a`` without
    inheriting float rounding.
    """

    lam: Fraction
    shape: str
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lam", as_fraction(self.lam))
        object.__setattr__(self, "value", as_fraction(self.value))
        if self.shape not in ("alpha", "beta", "a"):
            raise ValueError(f"unknown shape parameter {self.shape!r}")
        if not self.lam > 1:
            raise ValueError("need Lambda > 1")
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha={self.alpha:g} is outside (0, 2)")

    @classmethod
    def from_alpha(cls, lam, alpha) -> "AnomalousParams":
        return cls(lam, "alpha", alpha)

    @classmethod
    def from_beta(cls, lam, beta) -> "AnomalousParams":
        return cls(lam, "beta", beta)

    @classmethod
    def from_a(cls, lam, a) -> "AnomalousParams":
        return cls(lam, "a", a)

    @property
    def lambda_(self) -> float:
        return float(self.lam)

    @property
    def alpha(self) -> float:
        if self.shape == "alpha":
            return float(self.value)
        if self.shape == "a":
            return 2 * float(self.value)
        return -math.log(self.value) / math.log(self.lam)

    @property
    def a(self) -> float:
        return self.alpha / 2

    @property
    def beta(self) -> float:
        if self.shape == "beta":
            return float(self.value)
        return float(self.lam) ** -self.alpha

    @property
    def integer_lambda(self) -> int | None:
        return int(self.lam) if self.lam.denominator == 1 else None

    def lambda_power_alpha(self) -> Fraction:
        """``Lambda**alpha = p_down/p_up``, exact when it is rational by construction."""
        if self.shape == "beta":
            return 1 / self.value
        if self.shape in ("alpha", "a"):
            alpha = self.value if self.shape == "alpha" else 2 * self.value
            if alpha.denominator == 1:
                return self.lam ** int(alpha)
        return Fraction(float(self.lam) ** self.alpha)

    @property
    def p_up(self) -> Fraction:
        return 1 / (1 + self.lambda_power_alpha())

    @property
    def p_down(self) -> Fraction:
        r = self.lambda_power_alpha()
        return r / (1 + r)

    def mp_lambda(self, ctx):
        return ctx.mpf(self.lam.numerator) / self.lam.denominator

    def mp_a(self, ctx):
        """``a = alpha/2`` at the working precision of the mpmath context ``ctx``."""
        v = ctx.mpf(self.value.numerator) / self.value.denominator
        if self.shape == "a":
            return v
        if self.shape == "alpha":
            return v / 2
        return -ctx.log(v) / (2 * ctx.log(self.mp_lambda(ctx)))

    def to_dict(self) -> dict[str, Any]:
        return {"lambda": _fraction_text(self.lam), self.shape: _fraction_text(self.value)}


@dataclass(frozen=True)
class StationaryMeasure:
    """Weights ``mu_0..mu_L`` of the level chain plus the exact mass beyond ``L``."""

    weights: tuple[Fraction, ...]
    tail_bound: Fraction
    params: ModelParams | None = field(default=None, compare=False, repr=False)

    @property
    def max_level(self) -> int:
        return len(self.weights) - 1

    def __getitem__(self, level: int) -> Fraction:
        return self.weights[level]

    def floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])


def stationary_measure(params: ModelParams, max_level: int) -> StationaryMeasure:
    """Unique stationary law of the level chain, truncated at ``max_level``.

    >>> mu = stationary_measure(ModelParams(p_up="1/3", p_down="2/3", p_up0=1), 2)
    >>> [str(w) for w in mu.weights]
    ['1/4', '3/8', '3/16']
    """
    if max_level < 1:
        raise ValueError("max_level must be at least 1")
    pu, pd, pu0 = params.p_up, params.p_down, params.p_up0
    rho = pu / pd
    mu0 = (1 - rho) / (1 + (pu0 - pu) / pd)
    weights = [mu0]
    w = mu0 * pu0 / pd
    for _ in range(max_level):
        weights.append(w)
        w *= rho
    return StationaryMeasure(tuple(weights), w / (1 - rho), params)


def alpha_exponent(lam: float, p_up, p_down, validate: bool = False) -> float:
    """Exponent ``log(p_down/p_up) / log(Lambda)``.

    With ``validate=True`` a value outside the anomalous range ``(0, 2)`` raises.
    """
    if not lam > 1:
        raise ValueError("need Lambda > 1")
    p_up, p_down = as_fraction(p_up), as_fraction(p_down)
    if not 0 < p_up < p_down:
        raise ValueError("need 0 < p_up < p_down")
    alpha = math.log(p_down / p_up) / math.log(lam)
    if validate and not 0 < alpha < 2:
        raise ValueError(f"alpha={alpha:g} is outside the anomalous range (0, 2): p_down/p_up >= Lambda^2")
    return alpha


def make_anomalous(spec: AnomalousParams) -> ModelParams:
    """Walk with ``U_l = Lambda**l``, unit timescales, Gaussian jumps and no lazy moves."""
    return ModelParams(
        d=1,
        p_up=spec.p_up,
        p_down=spec.p_down,
        p_up0=Fraction(1),
        speeds=LevelRule(tail="geometric", base=1.0, ratio=float(spec.lam)),
        timescales=LevelRule(),
        xi_law=XiLaw(),
    )


@dataclass(frozen=True)
class DiffusionConstants:
    """``v_bar = E_mu[U^2 sigma^2]`` and ``m = E|xi| E_mu[sigma]``; infinite when the series diverge."""

    v_bar: float
    m: float
    finite: bool
    truncation_level: int = 0
    error_bound: float = 0.0


def _series(params: ModelParams, weight_fn, tail_ratio: float, tol: float) -> tuple[float, int, float]:
    rho = float(params.drift_ratio)
    start = max(len(params.speeds.prefix), len(params.timescales.prefix), 1)
    r = rho * tail_ratio
    if r >= 1:
        return math.inf, start, math.inf
    mu0, mu1 = (float(w) for w in stationary_measure(params, 1).weights)
    total = mu0 * weight_fn(0)
    level, mu = 1, mu1
    term = mu * weight_fn(level)
    while True:
        total += term
        if level >= start:
            bound = term * r / (1 - r)
            if bound < tol:
                return total, level, bound
            # past the prefix every term is the previous one times r; avoids overflow of the weight itself
            term *= r
        else:
            mu *= rho
            term = mu * weight_fn(level + 1)
        level += 1


def diffusion_constants(params: ModelParams, tol: float = 1e-12) -> DiffusionConstants:
    """Evaluate ``v_bar`` and ``m`` with geometric tail bounds below ``tol``.

    ``finite`` is ``False`` (and ``v_bar`` infinite) when the variance series
    diverges, e.g. ``p_down/p_up <= Lambda**2`` under ``U_l = Lambda**l``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    U, S = params.speeds, params.timescales
    v_bar, lv, ev = _series(params, lambda l: (U(l) * S(l)) ** 2, U.tail_ratio**2 * S.tail_ratio**2, tol)
    sig_sum, lm, em = _series(params, S, S.tail_ratio, tol)
    e_xi = params.xi_law.mean_norm()
    finite = math.isfinite(v_bar)
    return DiffusionConstants(v_bar, e_xi * sig_sum, finite, max(lv, lm), max(ev, e_xi * em) if finite else math.inf)


def params_to_dict(params: ModelParams | AnomalousParams) -> dict[str, Any]:
    if isinstance(params, AnomalousParams):
        return params.to_dict()
    return {
        "d": params.d,
        "p_up": _fraction_text(params.p_up),
        "p_down": _fraction_text(params.p_down),
        "p_up0": _fraction_text(params.p_up0),
        "speeds": params.speeds.to_dict(),
        "timescales": params.timescales.to_dict(),
        "xi_law": params.xi_law.to_dict(),
    }


def params_from_dict(doc: dict[str, Any]) -> ModelParams | AnomalousParams:
    """Inverse of :func:`params_to_dict`; a document with a ``lambda`` key is an :class:`AnomalousParams`."""
    if "lambda" in doc:
        shapes = [k for k in ("alpha", "beta", "a") if k in doc]
        if len(shapes) != 1:
            raise ValueError("anomalous params need exactly one of alpha, beta, a")
        return AnomalousParams(as_fraction(_num(doc["lambda"])), shapes[0], as_fraction(_num(doc[shapes[0]])))
    unknown = set(doc) - {"d", "p_up", "p_down", "p_up0", "speeds", "timescales", "xi_law"}
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    return ModelParams(
        d=int(doc.get("d", 1)),
        p_up=as_fraction(_num(doc["p_up"])),
        p_down=as_fraction(_num(doc["p_down"])),
        p_up0=as_fraction(_num(doc.get("p_up0", 1))),
        speeds=LevelRule.from_dict(doc.get("speeds", {})),
        timescales=LevelRule.from_dict(doc.get("timescales", {})),
        xi_law=XiLaw.from_dict(doc.get("xi_law", {})),
    )


def _num(x):
    # JSON floats keep their decimal text; ints stay exact
    return repr(x) if isinstance(x, float) else x


def load_params(path: str | Path) -> ModelParams | AnomalousParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))
