import math

import numpy as np
import pytest

from mlwalk.levels import ExcursionBatch, ExcursionRecord, LevelPath, sample_excursions_seeded, simulate_levels
from mlwalk.model import AnomalousParams, LevelRule, ModelParams, make_anomalous, stationary_measure
from mlwalk.rng import stream
from mlwalk.stats import (
    DivergentVarianceError,
    TestReport,
    empirical_charfunc,
    excursion_tests,
    expected_slope,
    fclt_check,
    lattice_violations,
    occupation_test,
    scaling_exponent,
    scaling_from_positions,
    underscaling_check,
)
from mlwalk.certify import phi_fixed_point

A21 = AnomalousParams.from_alpha(2, 1)
THIRDS = ModelParams(p_up="1/3", p_down="2/3", p_up0=1)


def test_report_validation_and_serialization():
    with pytest.raises(ValueError):
        TestReport("x", 0.0, 1.5, 10, True)
    with pytest.raises(ValueError):
        TestReport("x", 0.0, 0.5, 0, True)
    r = TestReport("x", np.float64(1.0), 0.5, 10, np.bool_(True), {"a": np.int64(2), "b": [1, 2]})
    assert r.to_dict()["detail"] == {"a": 2, "b": [1, 2]}
    assert r.csv_row()["detail.b"] == "[1, 2]"


def test_fclt_unit_speed_chain():
    params = ModelParams(p_up="0.2", p_down="0.5", p_up0="0.3")
    r = fclt_check(params, 400, 20000, stream(1, "fclt"))
    assert r.passed and abs(r.detail["variance_ratio"] - 1) < 0.05


def test_fclt_geometric_speed_chain():
    params = ModelParams(p_up="0.1", p_down="0.9", p_up0=1, speeds=LevelRule(tail="geometric", base=1.0, ratio=2.0))
    r = fclt_check(params, 2000, 20000, stream(2, "fclt"))
    assert r.passed


def test_fclt_rejects_divergent_variance():
    with pytest.raises(DivergentVarianceError, match="infinite"):
        fclt_check(make_anomalous(A21), 100, 10, stream(0, "x"))


def test_expected_slopes():
    assert expected_slope(A21) == 1.0
    assert expected_slope(AnomalousParams.from_alpha(3, "1.5")) == pytest.approx(2 / 3)
    assert expected_slope(THIRDS) == 0.5


def test_scaling_unit_speed_is_diffusive():
    r = scaling_exponent(THIRDS, [256, 512, 1024, 2048, 4096], 4000, stream(3, "sc"), n_boot=50)
    assert r.passed and abs(r.statistic - 0.5) < 0.05


def test_scaling_from_exact_power_law():
    grid = [10, 100, 1000]
    base = np.abs(stream(0, "p").normal(size=500))
    pos = np.stack([base * n**0.7 for n in grid])
    r = scaling_from_positions(A21, grid, pos, stream(1, "b"), n_boot=20, tolerance=0.5)
    assert r.statistic == pytest.approx(0.7, abs=1e-12)


def test_scaling_grid_rejected():
    with pytest.raises(ValueError):
        scaling_from_positions(A21, [10, 20], np.ones((2, 5)), stream(0, "g"))


def test_underscaling_frequencies_large():
    r = underscaling_check(A21, range(6, 12), 2000, stream(4, "u"))
    assert r.detail["n_j"][0] == 64 and r.passed


def test_excursion_tests_pass_on_sampler():
    batch = sample_excursions_seeded(A21, 200000, 12)
    r = excursion_tests(batch, A21)
    assert r.passed and r.detail["lattice_violations"] == 0 and r.detail["lattice_checked"]


def test_off_lattice_record_flagged():
    recs = [ExcursionRecord(2, 1, 5.0, z_exact=5), ExcursionRecord(4, 2, 7.0, z_exact=7), ExcursionRecord(4, 2, 25.0, z_exact=25)]
    assert lattice_violations(recs, 2).tolist() == [1]
    assert lattice_violations(ExcursionBatch.from_records(recs), 2).tolist() == [1]
    truncated = ExcursionRecord(9, 1, 7.0, truncated=True, z_exact=7)
    assert lattice_violations([truncated], 2).tolist() == []


def test_all_truncated_rejected():
    recs = [ExcursionRecord(10, 1, 0.0, truncated=True)] * 5
    with pytest.raises(ValueError, match="truncated"):
        excursion_tests(recs, A21)
    with pytest.raises(ValueError, match="at least"):
        excursion_tests([ExcursionRecord(2, 1, 5.0, z_exact=5)] * 5, A21)


def test_charfunc_at_zero():
    phi, se = empirical_charfunc([5.0, 25.0, 105.0], [0.0])
    assert phi[0] == 1 and se[0] == 0


def test_charfunc_on_lattice_is_exact_phase():
    batch = sample_excursions_seeded(A21, 100000, 13)
    z = batch.z_value[batch.usable]
    theta = 2 * math.pi / 20
    phi, se = empirical_charfunc(z, [theta])
    assert abs(phi[0] - 1j) <= 3 * se[0] + 1e-12


@pytest.mark.parametrize("theta", [0.1, 0.3, 1.0])
def test_charfunc_matches_fixed_point(theta):
    batch = sample_excursions_seeded(A21, 200000, 14)
    z = batch.z_value[batch.usable]
    phi, se = empirical_charfunc(z, [theta])
    exact = complex(phi_fixed_point(A21, theta, tol=1e-14))
    assert abs(phi[0] - exact) <= 4 * se[0]


def test_occupation_matches_mu():
    path = simulate_levels(THIRDS, 10**6, 0, stream(15, "occ"))
    r = occupation_test(path, stationary_measure(THIRDS, 30))
    f0, se = r.detail["level0_frequency"], r.detail["level0_se"]
    assert abs(f0 - 0.25) <= 3 * se and r.detail["tv_distance"] < 0.01 and r.passed


def test_occupation_constant_path_invalid():
    path = LevelPath.from_levels(np.full(5001, 3))
    r = occupation_test(path, stationary_measure(THIRDS, 10))
    assert not r.passed and r.detail["invalid_path"]


def test_occupation_short_path_rejected():
    with pytest.raises(ValueError):
        occupation_test(simulate_levels(THIRDS, 10, 0, stream(0, "s")), stationary_measure(THIRDS, 5))


def test_reports_bit_reproducible():
    a = occupation_test(simulate_levels(THIRDS, 5000, 0, stream(16, "r")), stationary_measure(THIRDS, 10))
    b = occupation_test(simulate_levels(THIRDS, 5000, 0, stream(16, "r")), stationary_measure(THIRDS, 10))
    assert a.to_json() == b.to_json()
