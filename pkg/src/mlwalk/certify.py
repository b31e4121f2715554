"""Characteristic function of the excursion variable and the non-stability certificate.

``ell(theta) = (1 - phi_Z(theta)) / |theta|**a`` is known in closed form on
the lattice ``theta = 2*pi*k / (Lambda**2 + Lambda**4)``.  Moving inward by
``theta -> theta / Lambda**2`` is a fractional-linear map whose matrix
``A = T + N`` splits into a lower-triangular part and a small nilpotent
remainder; ``psi_bound`` bounds the effect of the remainder on the whole
infinite product.  Two lattice points whose ``ell`` limits provably differ
certify that ``Z`` is not in the domain of attraction of a stable law.

All high-precision work goes through an explicit mpmath context (see
:func:`mlwalk.bignum.context`), so results are deterministic per precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from mlwalk.bignum import DEFAULT_DIGITS, context, format_sig, significant_digits_agreed
from mlwalk.model import AnomalousParams, as_fraction

__all__ = [
    "CONVENTIONS",
    "CertInput",
    "CertResult",
    "PrecisionError",
    "PsiDomainError",
    "TABLE_BETAS",
    "TableRow",
    "ThetaSpec",
    "certification_rhs",
    "certify_pair",
    "ell_at",
    "ell_exact_lattice",
    "ell_path",
    "ell_recursion",
    "ell_step",
    "matrix_discrepancy",
    "operator_norm",
    "phi_fixed_point",
    "psi_bound",
    "psi_condition",
    "reproduce_table",
    "t_product",
    "t_product_lower_left",
]

CONVENTIONS = ("tabulated", "strict")

TABLE_BETAS = {
    2: ("0.27", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"),
    3: ("0.13", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"),
}

# lattice indices of the two starting points, before ordering by |ell|
TABLE_K = {2: (2, 4), 3: (9, 18)}


class PrecisionError(ArithmeticError):
    """A quantity that must be nonzero vanished at the working precision."""


class PsiDomainError(ValueError):
    """The convergence condition of the remainder bound fails."""


def _ctx(ctx):
    return ctx if ctx is not None else context(DEFAULT_DIGITS)


def _mp_frac(ctx, x: Fraction):
    return ctx.mpf(x.numerator) / x.denominator


@dataclass(frozen=True)
class ThetaSpec:
    """``theta = Lambda**(-2n) * 2*pi*k / (Lambda**2 + Lambda**4)``, kept symbolic."""

    lam: Fraction
    k: int
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lam", as_fraction(self.lam))
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.n < 0:
            raise ValueError("n must be non-negative")

    @property
    def lattice_fraction(self) -> Fraction:
        """``s / pi`` for the lattice point ``s = 2*pi*k/(Lambda**2+Lambda**4)``."""
        lam2 = self.lam**2
        return Fraction(2 * self.k) / (lam2 + lam2 * lam2)

    def lattice_value(self, ctx=None):
        ctx = _ctx(ctx)
        return _mp_frac(ctx, self.lattice_fraction) * ctx.pi

    def value(self, ctx=None):
        ctx = _ctx(ctx)
        return self.lattice_value(ctx) / _mp_frac(ctx, self.lam) ** (2 * self.n)

    def shifted(self, m: int) -> "ThetaSpec":
        return ThetaSpec(self.lam, self.k, self.n + m)

    def equivalent(self, other: "ThetaSpec") -> bool:
        """True when the two values differ by an integer power of ``Lambda**2``."""
        if self.lam != other.lam:
            return False
        lam2 = self.lam**2
        r = Fraction(self.k, other.k) * lam2 ** (other.n - self.n)
        while r >= lam2:
            r /= lam2
        while r < 1:
            r *= lam2
        return r == 1

    def label(self) -> str:
        """Human-readable form such as ``4^-191·π/5``."""
        f = self.lattice_fraction
        num = "π" if f.numerator == 1 else f"{f.numerator}π"
        s = num if f.denominator == 1 else f"{num}/{f.denominator}"
        if self.n == 0:
            return s
        return f"{_frac_text(self.lam**2)}^-{self.n}·{s}"


def _frac_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"({x})"


# ---------------------------------------------------------------- fixed point


def phi_fixed_point(spec: AnomalousParams, theta, tol=1e-12, ctx=None):
    """Characteristic function of the excursion variable at ``theta``.

    Iterates ``psi(t) = exp(i(1+Lambda**2)t) p_down / (1 - p_up psi(Lambda**2 t))``
    backwards along ``theta * Lambda**(2j)``, starting from ``psi = 1`` at the
    deepest point.  The map contracts at rate ``p_up/p_down``, so ``K``
    sweeps leave an error of at most ``2 (p_up/p_down)**K``.
    """
    ctx = _ctx(ctx)
    theta = ctx.convert(theta)
    if theta == 0:
        return ctx.mpc(1)
    if theta < 0:
        return ctx.conj(phi_fixed_point(spec, -theta, tol, ctx))
    tol = ctx.convert(tol)
    if not tol > 0:
        raise ValueError("tol must be positive")
    rate = spec.p_up / spec.p_down
    sweeps = max(1, math.ceil(float(ctx.log(tol / 2) / ctx.log(_mp_frac(ctx, rate)))))
    lam2 = _mp_frac(ctx, spec.lam) ** 2
    pu, pd = _mp_frac(ctx, spec.p_up), _mp_frac(ctx, spec.p_down)
    psi = ctx.mpc(1)
    for j in range(sweeps - 1, -1, -1):
        t = theta * lam2**j
        psi = ctx.expj((1 + lam2) * t) * pd / (1 - pu * psi)
    return psi


# ---------------------------------------------------------------- ell values


def ell_exact_lattice(spec: AnomalousParams, k: int, ctx=None):
    """``ell`` at the lattice point ``2*pi*k/(Lambda**2+Lambda**4)``.

    Exactly zero when ``k`` is a multiple of ``Lambda**2``.
    """
    ctx = _ctx(ctx)
    if k == 0:
        raise ValueError("k must be nonzero")
    if k < 0:
        return ctx.conj(ell_exact_lattice(spec, -k, ctx))
    turns = (Fraction(2 * k) / spec.lam**2) % 2
    if turns == 0:
        return ctx.mpc(0)
    s = ThetaSpec(spec.lam, k).lattice_value(ctx)
    return (1 - ctx.expjpi(_mp_frac(ctx, turns))) * s ** (-spec.mp_a(ctx))


def _lam_a(spec: AnomalousParams, ctx):
    return _mp_frac(ctx, spec.lam), spec.mp_a(ctx)


def ell_step(ell, theta, lam, a, ctx=None):
    """``ell(theta / Lambda**2)`` from ``ell(theta)``; ``theta`` may be negative."""
    ctx = _ctx(ctx)
    t = theta / lam**2
    ta = abs(t) ** a
    inner = (1 - ctx.expj((1 + lam**2) * t)) / ta
    den = ta * ell + 1
    if den == 0:
        raise PrecisionError(f"fractional-linear denominator vanished at theta={ctx.nstr(theta, 8)}")
    return (ell + inner) / den


def ell_path(spec: AnomalousParams, start: ThetaSpec, ell_start, n: int, ctx=None) -> list:
    """``[ell(start), ell(start/Lambda**2), ..., ell(start/Lambda**(2n))]``."""
    ctx = _ctx(ctx)
    if n < 0:
        raise ValueError("n must be non-negative")
    lam, a = _lam_a(spec, ctx)
    theta = start.value(ctx)
    out = [ctx.convert(ell_start)]
    for _ in range(n):
        out.append(ell_step(out[-1], theta, lam, a, ctx))
        theta = theta / lam**2
    return out


def ell_recursion(spec: AnomalousParams, start: ThetaSpec, ell_start, n: int, ctx=None):
    """``ell(Lambda**(-2n) * start)`` by ``n`` fractional-linear steps."""
    return ell_path(spec, start, ell_start, n, ctx)[-1]


def ell_at(spec: AnomalousParams, theta: ThetaSpec, ctx=None):
    """``ell`` at a symbolic lattice-derived point: closed form, then the recursion."""
    start = ThetaSpec(theta.lam, theta.k)
    return ell_recursion(spec, start, ell_exact_lattice(spec, theta.k, ctx), theta.n, ctx)


# ---------------------------------------------------------------- matrices


def _mat_mul(x, y):
    return (
        (x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]),
        (x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]),
    )


def operator_norm(m, ctx=None):
    """Largest singular value of a 2x2 complex matrix."""
    ctx = _ctx(ctx)
    fro2 = sum(abs(v) ** 2 for row in m for v in row)
    det = abs(m[0][0] * m[1][1] - m[0][1] * m[1][0])
    disc = fro2**2 - 4 * det**2
    return ctx.sqrt((fro2 + ctx.sqrt(max(disc, 0))) / 2)


def _factors(spec, theta, n, ctx):
    lam, a = _lam_a(spec, ctx)
    out = []
    for _ in range(n):
        t = theta / lam**2
        ta = t**a
        inner = (1 - ctx.expj((1 + lam**2) * t)) / ta
        out.append((ta, inner))
        theta = t
    return out


def t_product(spec: AnomalousParams, theta, n: int, ctx=None):
    """``T(Lambda**(-2(n-1)) theta) ... T(theta)`` with ``T = [[1, 0], [t**a, 1]]``."""
    ctx = _ctx(ctx)
    prod = ((ctx.mpf(1), ctx.mpf(0)), (ctx.mpf(0), ctx.mpf(1)))
    for ta, _ in _factors(spec, ctx.convert(theta), n, ctx):
        prod = _mat_mul(((1, 0), (ta, 1)), prod)
    return prod


def t_product_lower_left(spec: AnomalousParams, theta, n: int, ctx=None):
    """Closed form of the lower-left entry of :func:`t_product`."""
    ctx = _ctx(ctx)
    lam, a = _lam_a(spec, ctx)
    b = lam ** (-2 * a)
    return (1 - b**n) / (1 - b) * (ctx.convert(theta) / lam**2) ** a


def matrix_discrepancy(spec: AnomalousParams, theta, n: int, ctx=None):
    """Operator norm of ``prod A - prod T`` over ``n`` inward steps from ``theta``."""
    ctx = _ctx(ctx)
    if n < 1:
        raise ValueError("n must be at least 1")
    one, zero = ctx.mpf(1), ctx.mpf(0)
    pa = pt = ((one, zero), (zero, one))
    for ta, inner in _factors(spec, ctx.convert(theta), n, ctx):
        pa = _mat_mul(((1, inner), (ta, 1)), pa)
        pt = _mat_mul(((1, 0), (ta, 1)), pt)
    diff = tuple(tuple(x - y for x, y in zip(ra, rt)) for ra, rt in zip(pa, pt))
    return operator_norm(diff, ctx)


# ---------------------------------------------------------------- remainder bound


def psi_condition(spec: AnomalousParams, theta, q: int, ctx=None):
    """Ratio that must lie in ``(0, 1)`` for the order-``q`` remainder bound."""
    ctx = _ctx(ctx)
    lam, a = _lam_a(spec, ctx)
    b = lam ** (-2 * a)
    return (1 + lam**2) * lam ** (-2 * q) * ctx.convert(theta) / ((1 - b) * (1 - lam ** (-2 * (q - a))))


def psi_bound(spec: AnomalousParams, theta, q: int = 2, ctx=None):
    """Upper bound ``Psi_q(theta)`` on the nilpotent-remainder contribution.

    The first ``q-1`` terms of the expansion are summed exactly and the rest
    is bounded by a geometric series with ratio :func:`psi_condition`.
    """
    ctx = _ctx(ctx)
    if q < 1:
        raise ValueError("q must be at least 1")
    theta = ctx.convert(theta)
    lam, a = _lam_a(spec, ctx)
    if not 0 < a < 1:
        raise ValueError("need 0 < a < 1")
    r = psi_condition(spec, theta, q, ctx)
    if not 0 < r < 1:
        raise PsiDomainError(
            f"0 < (1+Lambda^2) Lambda^(-2q) theta / ((1-Lambda^(-2a))(1-Lambda^(-2(q-a)))) < 1 fails "
            f"(value {ctx.nstr(r, 6)}, q={q})"
        )
    b = lam ** (-2 * a)
    lam2 = lam**2

    def shrink(j):
        return 1 - lam ** (-2 * (j - a))

    prefix = [ctx.mpf(1)]
    for j in range(1, q + 1):
        prefix.append(prefix[-1] * shrink(j))

    def term(j):
        return (1 + lam2) ** j * (lam ** (-2 * j) * theta) ** (j - a) / (1 - b) ** (j - 1)

    head = ctx.fsum(term(j) / prefix[j] for j in range(1, q))
    tail = term(q) / shrink(q) / prefix[q - 1] / (1 - r)
    return ctx.exp((theta / lam2) ** a / (1 - b)) * (head + tail)


# ---------------------------------------------------------------- certificate


def certification_rhs(
    spec: AnomalousParams, theta1, theta2, bounds: tuple, psi1, psi2, convention: str = "tabulated", ctx=None
):
    """Lower bound on ``|c(theta1)| / |c(theta2)| * B2 / B1``.

    ``bounds`` is ``(B1_minus, B1_plus, B2_minus, B2_plus)``.  Returns
    ``(rhs, factors)``; the bound is meaningful only when every factor is
    positive.  ``convention`` selects the constant multiplying ``Psi`` in the
    outer factors: ``"strict"`` uses ``1 + 1/B_minus``, ``"tabulated"`` uses
    ``1 + B_plus``.
    """
    ctx = _ctx(ctx)
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    b1m, b1p, b2m, b2p = bounds
    lam, a = _lam_a(spec, ctx)
    b = lam ** (-2 * a)
    if convention == "strict":
        c1, c2 = 1 + 1 / b1m, 1 + 1 / b2m
    else:
        c1, c2 = 1 + b1p, 1 + b2p
    lead1 = (ctx.convert(theta1) / lam**2) ** a / (1 - b)
    lead2 = (ctx.convert(theta2) / lam**2) ** a / (1 - b)
    factors = (
        1 - c2 * psi2,
        1 + c1 * psi1,
        1 - (1 + b1p) * psi1 - b1p * lead1,
        1 + (1 + b2p) * psi2 + b2p * lead2,
    )
    return factors[0] / factors[1] * factors[2] / factors[3], factors


@dataclass(frozen=True)
class CertInput:
    spec: AnomalousParams
    theta1: ThetaSpec
    theta2: ThetaSpec
    q: int = 2
    precision: int | None = None
    convention: str = "tabulated"
    digits: int = 6

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        if not 0 < self.spec.a < 1:
            raise ValueError("need 0 < a < 1")
        if self.theta1.lam != self.spec.lam or self.theta2.lam != self.spec.lam:
            raise ValueError("theta lattice built on a different Lambda")

    @property
    def working_precision(self) -> int:
        if self.precision is not None:
            return self.precision
        return max(DEFAULT_DIGITS, 2 * max(self.theta1.n, self.theta2.n))


@dataclass(frozen=True)
class CertResult:
    inputs: CertInput
    theta1: ThetaSpec
    theta2: ThetaSpec
    swapped: bool
    precision: int
    ell1: Any
    ell2: Any
    B1_minus: Any
    B1_plus: Any
    B2_minus: Any
    B2_plus: Any
    psi1: Any
    psi2: Any
    ratio: Any
    rhs: Any
    rhs_strict: Any
    factors: tuple
    certified: bool
    certified_strict: bool
    agreement: bool
    digits_agreed: float
    verdict_stable: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, Any]:
        """Full-precision JSON-ready view (numbers as decimal strings)."""
        spec = self.inputs.spec

        def s(x):
            return str(x)

        def c(x):
            return {"re": s(x.real), "im": s(x.imag)}

        return {
            "inputs": {
                **spec.to_dict(),
                "a": s(spec.mp_a(context(self.precision))),
                "theta1": {"k": self.theta1.k, "n": self.theta1.n, "label": self.theta1.label()},
                "theta2": {"k": self.theta2.k, "n": self.theta2.n, "label": self.theta2.label()},
                "q": self.inputs.q,
                "convention": self.inputs.convention,
            },
            "precision": self.precision,
            "ell1": c(self.ell1),
            "ell2": c(self.ell2),
            "B1_minus": s(self.B1_minus),
            "B1_plus": s(self.B1_plus),
            "B2_minus": s(self.B2_minus),
            "B2_plus": s(self.B2_plus),
            "psi1": s(self.psi1),
            "psi2": s(self.psi2),
            "ratio": s(self.ratio),
            "rhs": s(self.rhs),
            "rhs_strict": s(self.rhs_strict),
            "certified": self.certified,
            "certified_strict": self.certified_strict,
            "agreement": self.agreement,
            "digits_agreed": self.digits_agreed,
            "verdict_stable": self.verdict_stable,
            "swapped": self.swapped,
            "notes": list(self.notes),
        }


def _evaluate(inp: CertInput, t1: ThetaSpec, t2: ThetaSpec, ctx, slack):
    """Core evaluation at one precision; returns a dict of raw quantities."""
    spec = inp.spec
    e1, e2 = ell_at(spec, t1, ctx), ell_at(spec, t2, ctx)
    swapped = abs(e1) >= abs(e2)
    if swapped:
        t1, t2, e1, e2 = t2, t1, e2, e1
    th1, th2 = t1.value(ctx), t2.value(ctx)
    m1, m2 = abs(e1), abs(e2)
    slack = ctx.convert(slack)
    bounds = (m1 * (1 - slack), m1 * (1 + slack), m2 * (1 - slack), m2 * (1 + slack))
    psi1 = psi_bound(spec, th1, inp.q, ctx)
    psi2 = psi_bound(spec, th2, inp.q, ctx)
    rhs, factors = certification_rhs(spec, th1, th2, bounds, psi1, psi2, inp.convention, ctx)
    rhs_s, factors_s = certification_rhs(spec, th1, th2, bounds, psi1, psi2, "strict", ctx)

    def verdict(r, fs):
        return bool(all(f > 0 for f in fs) and 0 < bounds[1] < bounds[2] and r > bounds[1] / bounds[2])

    return dict(
        t1=t1, t2=t2, swapped=swapped, ell1=e1, ell2=e2, bounds=bounds, psi1=psi1, psi2=psi2,
        ratio=m1 / m2 if m2 != 0 else ctx.inf, rhs=rhs, rhs_strict=rhs_s, factors=factors,
        certified=verdict(rhs, factors), certified_strict=verdict(rhs_s, factors_s),
    )


def certify_pair(inp: CertInput) -> CertResult:
    """Run the certificate for one pair of lattice-derived points.

    Labels are reassigned so that ``|ell(theta1)| < |ell(theta2)|``.  All
    quantities are computed at precision ``P`` and again at ``2P``; the
    number of agreeing digits sets the relative widening of the ``ell``
    bounds and ``agreement`` requires at least ``inp.digits`` digits.
    Raises :class:`PsiDomainError` when a remainder bound is undefined.
    """
    if inp.theta1.equivalent(inp.theta2):
        raise ValueError("theta1/theta2 is a power of Lambda^2; the two limits coincide by definition")
    p = inp.working_precision
    lo_ctx, hi_ctx = context(p), context(2 * p)
    # first pass without widening to measure agreement
    lo = _evaluate(inp, inp.theta1, inp.theta2, lo_ctx, 0)
    hi = _evaluate(inp, inp.theta1, inp.theta2, hi_ctx, 0)
    pairs = [(lo["ell1"], hi["ell1"]), (lo["ell2"], hi["ell2"]), (lo["rhs"], hi["rhs"])]
    agreed = min(min(significant_digits_agreed(x, y) for x, y in pairs), float(p))
    slack = lo_ctx.mpf(10) ** (-(math.floor(agreed) - 1))
    lo = _evaluate(inp, inp.theta1, inp.theta2, lo_ctx, slack)
    hi = _evaluate(inp, inp.theta1, inp.theta2, hi_ctx, slack)
    notes = []
    if lo["certified"] != hi["certified"]:
        notes.append("verdict changed between P and 2P")
    b1m, b1p, b2m, b2p = lo["bounds"]
    return CertResult(
        inputs=inp,
        theta1=lo["t1"],
        theta2=lo["t2"],
        swapped=lo["swapped"],
        precision=p,
        ell1=lo["ell1"],
        ell2=lo["ell2"],
        B1_minus=b1m,
        B1_plus=b1p,
        B2_minus=b2m,
        B2_plus=b2p,
        psi1=lo["psi1"],
        psi2=lo["psi2"],
        ratio=lo["ratio"],
        rhs=lo["rhs"],
        rhs_strict=lo["rhs_strict"],
        factors=lo["factors"],
        certified=lo["certified"] and agreed >= inp.digits,
        certified_strict=lo["certified_strict"] and agreed >= inp.digits,
        agreement=agreed >= inp.digits,
        digits_agreed=agreed,
        verdict_stable=lo["certified"] == hi["certified"],
        notes=tuple(notes),
    )


# ---------------------------------------------------------------- tables


@dataclass(frozen=True)
class TableRow:
    lam: int
    beta: str
    n: int
    result: CertResult

    def formatted(self) -> dict[str, str]:
        """Columns at 5 significant digits."""
        r = self.result
        return {
            "beta": self.beta,
            "a": format_sig(r.inputs.spec.mp_a(context(r.precision))),
            "n": str(self.n),
            "theta1": r.theta1.label(),
            "theta2": r.theta2.label(),
            "ell1": format_sig(r.ell1),
            "ell2": format_sig(r.ell2),
            "ratio": format_sig(r.ratio),
            "rhs": format_sig(r.rhs),
            "certified": "yes" if r.certified else "no",
        }


def _quick_ok(spec, q, convention, th1, th2, e1, e2, ctx) -> bool:
    m1, m2 = abs(e1), abs(e2)
    if m1 > m2:
        th1, th2, m1, m2 = th2, th1, m2, m1
    if not 0 < m1 < m2:
        return False
    for th in (th1, th2):
        if not 0 < psi_condition(spec, th, q, ctx) < 1:
            return False
    p1, p2 = psi_bound(spec, th1, q, ctx), psi_bound(spec, th2, q, ctx)
    rhs, factors = certification_rhs(spec, th1, th2, (m1, m1, m2, m2), p1, p2, convention, ctx)
    return all(f > 0 for f in factors) and rhs > m1 / m2


def reproduce_table(
    lam: int, beta, cap: int = 400, q: int = 2, convention: str = "tabulated", start: int = 0
) -> TableRow:
    """Smallest ``n >= start`` at which the certificate succeeds for the standard pair.

    The scan runs over windows of growing depth with precision
    ``max(50, 2 * depth)``; the first candidate is then re-run through
    :func:`certify_pair`.  Raises ``RuntimeError`` if nothing certifies up to ``cap``.
    """
    if lam not in TABLE_K:
        raise ValueError("lambda must be 2 or 3")
    beta_text = str(beta)
    spec = AnomalousParams.from_beta(lam, beta_text)
    k1, k2 = TABLE_K[lam]
    lo = start
    window = 25
    while lo <= cap:
        hi = min(cap, max(window, lo))
        ctx = context(max(DEFAULT_DIGITS, 2 * hi))
        lam_mp, a = _lam_a(spec, ctx)
        s1, s2 = ThetaSpec(lam, k1), ThetaSpec(lam, k2)
        e1, e2 = ell_exact_lattice(spec, k1, ctx), ell_exact_lattice(spec, k2, ctx)
        th1, th2 = s1.value(ctx), s2.value(ctx)
        for n in range(hi + 1):
            if n >= lo and _quick_ok(spec, q, convention, th1, th2, e1, e2, ctx):
                inp = CertInput(spec, s1.shifted(n), s2.shifted(n), q=q, convention=convention)
                try:
                    res = certify_pair(inp)
                except PsiDomainError:
                    res = None
                if res is not None and res.certified:
                    return TableRow(lam, beta_text, n, res)
            e1 = ell_step(e1, th1, lam_mp, a, ctx)
            e2 = ell_step(e2, th2, lam_mp, a, ctx)
            th1, th2 = th1 / lam_mp**2, th2 / lam_mp**2
        lo = hi + 1
        window *= 2
    raise RuntimeError(f"no certifying n <= {cap} for Lambda={lam}, beta={beta_text}")
