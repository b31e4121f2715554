from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from mlwalk.levels import (
    ExcursionBatch,
    sample_excursion,
    sample_excursions,
    sample_excursions_seeded,
    simulate_levels,
    step_level,
    write_excursions_csv,
)
from mlwalk.model import AnomalousParams, ModelParams, make_anomalous
from mlwalk.rng import stream

THIRDS = ModelParams(p_up="1/3", p_down="2/3", p_up0=1)
A21 = AnomalousParams.from_alpha(2, 1)


def test_step_from_zero_always_up():
    rng = stream(1, "t")
    assert all(step_level(0, THIRDS, rng) == 1 for _ in range(200))


def test_step_without_lazy_moves():
    rng = stream(2, "t")
    assert {step_level(5, THIRDS, rng) for _ in range(500)} == {4, 6}


def test_up_fraction_binomial():
    n = 10**6
    path = simulate_levels(ModelParams(p_up="1/3", p_down="2/3", p_up0=1), n, 3, stream(3, "t"))
    lv = path.levels
    moves = np.diff(lv)[lv[:-1] > 0]
    frac = (moves == 1).mean()
    se = np.sqrt(1 / 3 * 2 / 3 / len(moves))
    assert abs(frac - 1 / 3) <= 3 * se


def test_simulate_levels_trivial_cases():
    p = simulate_levels(THIRDS, 0, 4, stream(0, "t"))
    assert p.levels.tolist() == [4] and p.local_time_zero == 0
    assert simulate_levels(THIRDS, 1, 0, stream(0, "t")).levels.tolist() == [0, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2000), st.integers(0, 5), st.integers(0, 2**32))
def test_level_path_invariants(n, L0, seed):
    params = ModelParams(p_up="0.2", p_down="0.5", p_up0="0.6")
    path = simulate_levels(params, n, L0, stream(seed, "inv"))
    lv = path.levels
    assert len(lv) == n + 1 and lv[0] == L0
    assert np.all(np.abs(np.diff(lv)) <= 1)
    assert np.all(lv[1:][lv[:-1] == 0] <= 1)
    assert path.zero_returns.tolist() == [j for j in range(1, n + 1) if lv[j] == 0]
    assert path.local_time_zero == len(path.zero_returns)


def test_occupation_matches_mu():
    n = 10**6
    path = simulate_levels(THIRDS, n, 0, stream(5, "occ"))
    mu = [Fraction(1, 4), Fraction(3, 8), Fraction(3, 16), Fraction(3, 32)]
    lv = path.levels[:n]
    for l, w in enumerate(mu):
        ind = (lv == l).astype(float).reshape(100, -1).mean(axis=1)
        se = ind.std(ddof=1) / 10
        assert abs(ind.mean() - float(w)) <= 3 * se


class ScriptedRng:
    """Uniform draws from a fixed list, to force specific excursions."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        if size is None:
            return self.values.pop(0)
        out = np.array(self.values[:size])
        del self.values[:size]
        return out


def test_shortest_excursion():
    rec = sample_excursion(A21, 100, ScriptedRng([0.9]))
    assert (rec.tau0, rec.n_visits_level1, rec.z_exact) == (2, 1, 1 + 4)
    batch = sample_excursions(A21, 1, ScriptedRng([0.9]), 100)
    assert (batch.tau0[0], batch.n_visits_level1[0], batch.z_int[0]) == (2, 1, 5)


def test_second_excursion_shape():
    # 0 -> 1 -> 2 -> 1 -> 0
    rec = sample_excursion(A21, 100, ScriptedRng([0.1, 0.9, 0.9]))
    assert rec.z_exact == 1 + 4 + 16 + 4
    assert rec.tau0 == 4 and rec.n_visits_level1 == 2
    batch = sample_excursions(A21, 1, ScriptedRng([0.1, 0.9, 0.9]), 100)
    assert batch.z_int[0] == 25


def test_cap_rejected():
    with pytest.raises(ValueError):
        sample_excursion(A21, 1, stream(0, "t"))
    with pytest.raises(ValueError):
        sample_excursions(A21, 10, stream(0, "t"), cap=1)


def test_truncated_flag():
    rec = sample_excursion(A21, 3, ScriptedRng([0.1, 0.1]))
    assert rec.truncated and not rec.usable and rec.tau0 == 3


def _path_z(levels, lam):
    return sum(lam ** (2 * l) for l in levels)


def test_scalar_sampler_matches_path_oracle():
    # replay the same uniforms through an independent re-walk
    u = stream(11, "oracle").random(5000)
    rec = sample_excursion(A21, 10**4, ScriptedRng(u.tolist()))
    levels = [0, 1]
    for x in u:
        levels.append(levels[-1] + (1 if x < 1 / 3 else -1))
        if levels[-1] == 0:
            break
    assert rec.tau0 == len(levels) - 1
    assert rec.z_exact == _path_z(levels[:-1], 2)
    assert rec.n_visits_level1 == levels.count(1)


def test_geometric_visits():
    batch = sample_excursions_seeded(A21, 10**5, 21)
    v = batch.n_visits_level1[batch.usable]
    ks = np.arange(1, 10)
    obs = np.array([(v == k).sum() for k in ks] + [(v >= 10).sum()])
    p = np.array([(2 / 3) * (1 / 3) ** (k - 1) for k in ks] + [(1 / 3) ** 9])
    assert sps.chisquare(obs, p * len(v)).pvalue > 1e-3


def test_visits_equal_one_plus_up_moves_from_level_one():
    for seed in range(50):
        u = stream(seed, "ups").random(4000)
        rec = sample_excursion(A21, 10**4, ScriptedRng(u.tolist()))
        level, ups = 1, 0
        for x in u[: rec.tau0 - 1]:
            if level == 1 and x < 1 / 3:
                ups += 1
            level += 1 if x < 1 / 3 else -1
        assert rec.n_visits_level1 == 1 + ups


@pytest.mark.parametrize("lam, offset, step", [(2, 5, 20), (3, 10, 90)])
def test_lattice_invariant(lam, offset, step):
    batch = sample_excursions_seeded(AnomalousParams.from_alpha(lam, 1), 20000, 4)
    z = batch.z_int[batch.usable]
    assert np.all((z - offset) % step == 0)


def test_random_stability_two_sample():
    # given N = m, Z = 1 + L^2 + L^2 (Z_1 + ... + Z_{m-1}) with i.i.d. copies
    direct = sample_excursions_seeded(A21, 40000, 1, tag="direct")
    pool = sample_excursions_seeded(A21, 200000, 2, tag="pool")
    zd = direct.z_value[direct.usable]
    zp = pool.z_value[pool.usable]
    rng = stream(3, "assemble")
    m = rng.geometric(2 / 3, size=len(zd))
    picks = rng.integers(0, len(zp), size=int((m - 1).sum()))
    sums = np.zeros(len(zd))
    np.add.at(sums, np.repeat(np.arange(len(zd)), m - 1), zp[picks])
    assembled = 5 + 4 * sums
    assert sps.ks_2samp(np.log(zd), np.log(assembled)).pvalue > 1e-3


def test_truncation_fraction_decreases_with_cap():
    # small alpha: p_up close to p_down, so long excursions are common
    spec = AnomalousParams.from_alpha(2, "0.1")
    small = [sample_excursions(spec, 20000, stream(6, "cap"), cap=c).truncated.mean() for c in (10, 100, 1000)]
    assert small[0] > small[1] > small[2]
    large = [sample_excursions(spec, 20000, stream(6, "cap"), cap=c).truncated.mean() for c in (10**3, 10**4, 10**5)]
    assert large[0] >= large[1] >= large[2]


def test_seeded_batches_independent_of_workers():
    a = sample_excursions_seeded(A21, 5000, 9, chunk_size=1000, workers=1)
    b = sample_excursions_seeded(A21, 5000, 9, chunk_size=1000, workers=2)
    assert np.array_equal(a.z_int, b.z_int) and np.array_equal(a.tau0, b.tau0)


def test_overflow_flagged_as_unusable():
    # Lambda**8 already exceeds the int64 range
    batch = sample_excursions(AnomalousParams.from_alpha(1000, "0.1"), 2000, stream(1, "of"), cap=10**4)
    over = batch.overflow
    assert over.any() and not batch.usable[over].any()


def test_records_round_trip():
    batch = sample_excursions(A21, 50, stream(3, "rt"), cap=100)
    back = ExcursionBatch.from_records(batch.records())
    assert np.array_equal(back.z_int, batch.z_int) and np.array_equal(back.truncated, batch.truncated)


def test_excursion_csv(tmp_path):
    batch = sample_excursions_seeded(A21, 10, 5, chunk_size=4)
    path = tmp_path / "exc.csv"
    write_excursions_csv(batch, path, 5)
    lines = path.read_text().splitlines()
    assert lines[0] == "seed,stream,tau0,n_visits_level1,z_value,truncated"
    assert len(lines) == 11 and lines[-1].split(",")[1] == "2"


def test_model_params_excursions_match_anomalous():
    a = sample_excursions(A21, 100, stream(8, "m"), 1000)
    b = sample_excursions(make_anomalous(A21), 100, stream(8, "m"), 1000)
    assert np.array_equal(a.z_int, b.z_int)
