import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlwalk.model import (
    AnomalousParams,
    LevelRule,
    ModelParams,
    XiLaw,
    alpha_exponent,
    diffusion_constants,
    load_params,
    make_anomalous,
    params_from_dict,
    params_to_dict,
    stationary_measure,
)

# chain probabilities with 0 < p_up < p_down and p_up + p_down <= 1
chains = st.tuples(st.integers(1, 40), st.integers(1, 40), st.integers(0, 40), st.integers(1, 20)).filter(
    lambda t: t[0] < t[1]
).map(lambda t: (Fraction(t[0], sum(t[:3])), Fraction(t[1], sum(t[:3])), Fraction(t[3], 20)))


def test_stationary_measure_hand_values():
    mu = stationary_measure(ModelParams(p_up="1/3", p_down="2/3", p_up0=1), 2)
    assert mu.weights == (Fraction(1, 4), Fraction(3, 8), Fraction(3, 16))


def test_stationary_measure_mu0_four_ninths():
    mu = stationary_measure(ModelParams(p_up="0.1", p_down="0.9", p_up0=1), 3)
    assert mu[0] == Fraction(4, 9)


@given(chains, st.integers(1, 30))
def test_stationary_measure_normalized_and_geometric(probs, L):
    pu, pd, pu0 = probs
    mu = stationary_measure(ModelParams(p_up=pu, p_down=pd, p_up0=pu0), L)
    assert sum(mu.weights) + mu.tail_bound == 1
    assert all(w > 0 for w in mu.weights)
    for l in range(2, L + 1):
        assert mu[l] / mu[l - 1] == pu / pd


@given(chains, st.integers(2, 12))
def test_stationary_measure_is_invariant(probs, L):
    pu, pd, pu0 = probs
    params = ModelParams(p_up=pu, p_down=pd, p_up0=pu0)
    mu = stationary_measure(params, L)
    w = list(mu.weights)
    lazy = 1 - pu - pd

    def kernel(i, j):
        if i == 0:
            return {0: 1 - pu0, 1: pu0}.get(j, 0)
        return {i + 1: pu, i - 1: pd, i: lazy}.get(j, 0)

    for l in range(L):
        flow = sum(w[j] * kernel(j, l) for j in range(L + 1))
        assert abs(w[l] - flow) <= mu.tail_bound


def test_params_invariants_rejected():
    with pytest.raises(ValueError):
        ModelParams(p_up="2/3", p_down="1/3")
    with pytest.raises(ValueError):
        ModelParams(p_up="0.6", p_down="0.7")
    with pytest.raises(ValueError):
        ModelParams(p_up="0.1", p_down="0.9", p_up0=0)
    with pytest.raises(ValueError):
        ModelParams(p_up="0.1", p_down="0.9", speeds=LevelRule(prefix=(2.0, 1.0)))
    with pytest.raises(ValueError):
        XiLaw(kind="gaussian", cov=((1.0, 2.0), (2.0, 1.0)))


def test_user_table_rejects_atom_at_zero():
    with pytest.raises(ValueError):
        XiLaw(kind="table", values=(-1.0, 0.0, 1.0), probs=(0.25, 0.5, 0.25))
    law = XiLaw(kind="table", values=(-1.0, 1.0), probs=(0.5, 0.5))
    assert law.mean_norm() == 1.0


@pytest.mark.parametrize(
    "lam, ratio, alpha",
    [(2, 2, 1.0), (3, 3, 1.0)],
)
def test_alpha_exponent_examples(lam, ratio, alpha):
    assert alpha_exponent(lam, Fraction(1, 1 + ratio), Fraction(ratio, 1 + ratio)) == pytest.approx(alpha, abs=1e-15)


def test_alpha_exponent_boundary_flagged():
    assert alpha_exponent(2, "1/5", "4/5") == pytest.approx(2.0)
    with pytest.raises(ValueError, match="anomalous range"):
        alpha_exponent(2, "1/5", "4/5", validate=True)


def test_make_anomalous_lambda2_alpha1():
    p = make_anomalous(AnomalousParams.from_alpha(2, 1))
    assert (p.p_up, p.p_down, p.p_up0) == (Fraction(1, 3), Fraction(2, 3), 1)
    assert p.d == 1 and p.timescales(7) == 1.0 and p.speeds(5) == 32.0


def test_anomalous_a_from_beta():
    assert AnomalousParams.from_beta(2, "0.5").a == pytest.approx(0.5, abs=1e-15)
    assert round(AnomalousParams.from_beta(3, "0.3").a, 5) == 0.54795


@given(st.integers(2, 5), st.floats(0.05, 1.95))
def test_make_anomalous_round_trip(lam, alpha):
    spec = AnomalousParams.from_alpha(lam, alpha)
    p = make_anomalous(spec)
    assert p.p_up + p.p_down == 1 and p.p_up0 == 1
    assert abs(alpha_exponent(lam, p.p_up, p.p_down) - spec.alpha) < 1e-14


def test_diffusion_constants_unit_speed():
    dc = diffusion_constants(ModelParams(p_up="0.2", p_down="0.5", p_up0="0.3"))
    assert dc.finite and dc.v_bar == pytest.approx(1.0, abs=1e-12)


def test_diffusion_constants_geometric_speed():
    p = ModelParams(p_up="0.1", p_down="0.9", p_up0=1, speeds=LevelRule(tail="geometric", base=1.0, ratio=2.0))
    dc = diffusion_constants(p)
    # independent oracle: v_bar = 9 mu_0 with mu_0 = 4/9
    assert dc.v_bar == pytest.approx(float(9 * Fraction(4, 9)), abs=1e-11)
    assert dc.m == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)


@given(st.integers(2, 4), st.integers(2, 40))
def test_finite_iff_ratio_exceeds_lambda_squared(lam, ratio):
    p = ModelParams(p_up=Fraction(1, 1 + ratio), p_down=Fraction(ratio, 1 + ratio), p_up0=1,
                    speeds=LevelRule(tail="geometric", base=1.0, ratio=float(lam)))
    assert diffusion_constants(p).finite == (ratio > lam * lam)


def test_anomalous_is_not_finite():
    assert not diffusion_constants(make_anomalous(AnomalousParams.from_alpha(2, 1))).finite


def test_params_json_round_trip(tmp_path):
    p = ModelParams(d=2, p_up="1/4", p_down="1/2", p_up0="3/4",
                    speeds=LevelRule(prefix=(1.0, 1.5), tail="geometric", base=2.0, ratio=1.5),
                    xi_law=XiLaw(kind="gaussian", cov=((2.0, 0.5), (0.5, 1.0))))
    doc = params_to_dict(p)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    assert load_params(path) == p
    spec = AnomalousParams.from_beta(3, "0.13")
    assert params_from_dict(json.loads(json.dumps(params_to_dict(spec)))) == spec


def test_gaussian_mean_norm_matches_quadrature_free_value():
    law = XiLaw(kind="gaussian", cov=((4.0,),))
    assert law.mean_norm() == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-9)


def test_xi_sampling_shapes():
    rng = np.random.default_rng(0)
    law = XiLaw(kind="table", values=(-2.0, 1.0), probs=(1 / 3, 2 / 3))
    x = law.sample(rng, 10000)
    assert x.shape == (10000, 1) and set(np.unique(x)) == {-2.0, 1.0}
