import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from evmchaos.core_map import Params
from evmchaos.scan import (
    ThresholdError,
    ThresholdRecord,
    bifurcation_diagram,
    classify_point,
    count_branches,
    extrapolate_reference,
    find_threshold,
    fit_scaling,
    ic_draw,
    lyapunov_scan,
    sweep,
)


def synthetic(xs, f, axis="kbt"):
    return [ThresholdRecord("hopf", f(x), 1e-9, **{"kbt": 0.0, "hbar": 0.0, "omega_c": 25.0, axis: x},
                            axis=axis) for x in xs]


def test_ic_draw_is_deterministic_and_in_box():
    a = ic_draw(7, 3, 2, 2e-4)
    assert a == ic_draw(7, 3, 2, 2e-4)
    assert a != ic_draw(7, 3, 3, 2e-4) and a != ic_draw(8, 3, 2, 2e-4)
    assert -5 <= a.q <= 5 and -5 <= a.p <= 5 and a.s_qq == a.s_pp == 1e-4
    assert ic_draw(7, 3, 2, 2e-4, "classical").s_qq == 0.0


def test_bifurcation_zero_kick_relaxes_to_origin():
    recs = bifurcation_diagram(Params(v0=0.0, hbar=1e-3, kbt=1e-3), [0.0], 4, seed=1, n_transient=300,
                               n_record=10)
    assert len(recs) == 4
    for r in recs:
        assert len(r.samples) == 10 and not r.escaped
        assert np.allclose(r.samples, 0.0, atol=1e-30)


def test_bifurcation_order_and_thread_independence():
    p = Params(hbar=2e-4, kbt=2e-4)
    grid = [3.8, 3.9, 4.0, 5.0]
    serial = bifurcation_diagram(p, grid, 3, seed=5, n_transient=200, n_record=30)
    with ThreadPoolExecutor(4) as ex:
        threaded = bifurcation_diagram(p, grid, 3, seed=5, n_transient=200, n_record=30, mapper=ex.map)
    assert serial == threaded
    assert [(r.v0, r.ic_index) for r in serial] == [(v, j) for v in grid for j in range(3)]


def test_bifurcation_validation():
    with pytest.raises(ValueError):
        bifurcation_diagram(Params(), [], 1)
    with pytest.raises(ValueError):
        bifurcation_diagram(Params(), [1.0], 0)


def test_count_branches():
    assert count_branches([1.0, 1.0 + 1e-9, 2.0, 2.0, 3.0]) == 3
    assert count_branches([]) == 0
    assert count_branches([float("nan"), 1.0]) == 1


def test_lyapunov_scan_classical_columns():
    rows = lyapunov_scan(Params(), [0.0, 8.0], 2, mode="classical", n_transient=500, n_iter=5000)
    assert rows[0][1] == pytest.approx(-0.3, abs=1e-10) and rows[0][3] == 0.0
    assert rows[1][1] > 0


def test_classify_point_dead_band():
    p = Params()
    ics = [ic_draw(0, 0, j, 0.0, "classical") for j in range(2)]
    assert classify_point(p, 8.0, ics, mode="classical").chaotic
    pc = classify_point(p, 3.0, ics, mode="classical")
    assert not pc.chaotic and not pc.undecided


def test_classical_chaos_threshold():
    rec = find_threshold(Params(), "chaos", (5.5, 5.9), 1e-3, mode="classical")
    assert rec.v0_star == pytest.approx(5.693, abs=5e-3)
    assert rec.bracket_width <= 1e-3
    lam = dict(rec.lambda_trace)
    assert lam[5.5] < 0 < lam[5.9]


def test_hopf_threshold_record():
    p = Params(hbar=2e-4, kbt=2e-4)
    rec = find_threshold(p, "hopf", (3.7, 4.0), 1e-6)
    assert rec.diagnostic == "hopf" and rec.period == 2 and rec.bracket_width <= 1e-6
    assert 3.9 < rec.v0_star < 3.93
    assert rec.lambda_trace[0][1] < 0 < rec.lambda_trace[-1][1]


def test_threshold_errors():
    with pytest.raises(ThresholdError, match="lambda"):
        find_threshold(Params(), "chaos", (1.0, 2.0), mode="classical")
    with pytest.raises(ThresholdError):
        find_threshold(Params(), "chaos", (7.9, 8.0), mode="classical")
    with pytest.raises(ThresholdError):
        find_threshold(Params(), "hopf", (3.6, 3.7), mode="classical")
    with pytest.raises(ValueError):
        find_threshold(Params(), "fold", (3.6, 3.7))


def test_sweep_records_failures_and_continues():
    recs = sweep(Params(hbar=1e-3), "kbt", [1e-3, 2e-3], "chaos", (1.0, 2.0))
    assert len(recs) == 2 and all(not r.ok and math.isnan(r.v0_star) for r in recs)
    with pytest.raises(ValueError):
        sweep(Params(), "kbt", [2e-3, 1e-3], "hopf")
    with pytest.raises(ValueError):
        sweep(Params(), "gamma", [1e-3], "hopf")


def test_warm_equals_cold_hopf_sweep():
    base = Params(hbar=2e-3)
    grid = [5e-4, 2e-3, 6e-3]
    tol = 1e-6
    warm = sweep(base, "kbt", grid, "hopf", (3.7, 3.98), tol)
    cold = sweep(base, "kbt", grid, "hopf", (3.7, 3.98), tol, warm=False)
    for a, b in zip(warm, cold):
        assert abs(a.v0_star - b.v0_star) <= 2 * tol
        assert a.axis == "kbt" and a.axis_value() == b.kbt


def test_fit_scaling_exact_power_laws():
    xs = [0.001, 0.002, 0.004, 0.006, 0.008, 0.01]
    quad = fit_scaling(synthetic(xs, lambda x: 4.0 - 3.0 * x * x), 4.0)
    assert quad.slope == pytest.approx(2.0, abs=1e-10)
    assert quad.ci_low <= quad.slope <= quad.ci_high and quad.stderr < 1e-9
    lin = fit_scaling(synthetic(xs, lambda x: 4.0 - 0.5 * x, axis="hbar"), 4.0, axis="hbar")
    assert lin.slope == pytest.approx(1.0, abs=1e-10)


def test_extrapolated_reference_recovers_power_law_origin():
    xs = [0.001, 0.002, 0.004, 0.006, 0.008]
    recs = synthetic(xs, lambda x: 3.9 - 2.0 * x**2.3)
    assert extrapolate_reference(recs) == pytest.approx(3.9, abs=1e-12)
    assert fit_scaling(recs).slope == pytest.approx(2.3, abs=1e-8)


def test_fit_scaling_errors():
    xs = [0.001, 0.002, 0.004, 0.006, 0.008]
    with pytest.raises(ValueError, match="nonpositive"):
        fit_scaling(synthetic(xs, lambda x: 4.0 + x), 4.0)
    with pytest.raises(ValueError):
        fit_scaling(synthetic(xs[:4], lambda x: 4.0 - x), 4.0)
