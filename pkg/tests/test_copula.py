import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from faultflow.copula import BivariateCopula, fit_bivariate, fit_checkerboard, h_function, h_inverse

MODERATE = [
    ("gaussian", (0.5,)), ("gaussian", (-0.5,)), ("student_t", (0.5, 4.0)), ("student_t", (-0.3, 10.0)),
    ("clayton", (2.0,)), ("gumbel", (2.0,)), ("frank", (5.0,)), ("frank", (-5.0,)),
]
CASES = [(f, r, p) for f, p in MODERATE for r in ((0, 90, 180, 270) if f in ("clayton", "gumbel") else (0,))]
GRID = (np.arange(20) + 0.5) / 20


def checkerboard_copula():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3000, 2))
    x[:, 1] = 0.6 * x[:, 0] + 0.8 * x[:, 1]
    u = stats.norm.cdf(x)
    return BivariateCopula("checkerboard", 0, tuple(fit_checkerboard(u[:, 0], u[:, 1]).ravel()))


def all_copulas():
    return [BivariateCopula(f, r, p) for f, r, p in CASES] + [checkerboard_copula(), BivariateCopula()]


@pytest.mark.parametrize("cop", all_copulas(), ids=lambda c: f"{c.family}-{c.rotation}")
def test_h_round_trip_on_grid(cop):
    u, v = np.meshgrid(GRID, GRID)
    assert np.max(np.abs(cop.hinv2(cop.hfunc2(u, v), v) - u)) <= 1e-8
    assert np.max(np.abs(cop.hinv1(cop.hfunc1(u, v), u) - v)) <= 1e-8


@pytest.mark.parametrize("cop", all_copulas(), ids=lambda c: f"{c.family}-{c.rotation}")
def test_density_integrates_to_one(cop):
    m = 400
    x = (np.arange(m) + 0.5) / m
    u, v = np.meshgrid(x, x)
    assert cop.pdf(u, v).mean() == pytest.approx(1.0, abs=2e-2)
    assert np.all(cop.pdf(u, v) >= 0)


@pytest.mark.parametrize("cop", all_copulas()[:-2], ids=lambda c: f"{c.family}-{c.rotation}")
def test_h_is_integral_of_density(cop):
    for u, v in ((0.3, 0.6), (0.8, 0.2), (0.5, 0.5)):
        h2 = integrate.quad(lambda s: cop.pdf(s, v), 0, u, epsabs=1e-11)[0]
        h1 = integrate.quad(lambda s: cop.pdf(u, s), 0, v, epsabs=1e-11)[0]
        assert cop.hfunc2(u, v) == pytest.approx(h2, abs=1e-6)
        assert cop.hfunc1(u, v) == pytest.approx(h1, abs=1e-6)


@pytest.mark.parametrize("cop", all_copulas(), ids=lambda c: f"{c.family}-{c.rotation}")
def test_h_monotone_cdf_in_first_argument(cop):
    x = np.linspace(1e-9, 1 - 1e-9, 201)
    for v in (0.1, 0.5, 0.9):
        h = cop.hfunc2(x, np.full_like(x, v))
        assert np.all(np.diff(h) >= -1e-12)
        assert h[0] < 1e-3 and h[-1] > 1 - 1e-3


def test_independence_and_gaussian_median():
    ind = BivariateCopula()
    assert h_function(ind, 0.3, 0.9) == pytest.approx(0.3)
    g = BivariateCopula("gaussian", 0, (0.5,))
    assert h_function(g, 0.5, 0.5) == pytest.approx(0.5, abs=1e-14)
    assert h_inverse(g, h_function(g, 0.2, 0.7), 0.7) == pytest.approx(0.2, abs=1e-12)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.sampled_from(CASES))
def test_h_round_trip_property(u, v, case):
    cop = BivariateCopula(*case)
    assert float(cop.hinv2(cop.hfunc2(u, v), v)) == pytest.approx(u, abs=1e-8)


def test_rotation_signs_tau():
    for r, sign in ((0, 1), (90, -1), (180, 1), (270, -1)):
        assert np.sign(BivariateCopula("clayton", r, (2.0,)).tau) == sign
    assert BivariateCopula("clayton", 0, (2.0,)).tau == pytest.approx(0.5)
    assert BivariateCopula("gumbel", 0, (2.0,)).tau == pytest.approx(0.5)


def test_simulated_tau_matches_parameter():
    cop = BivariateCopula("gumbel", 90, (2.0,))
    x = cop.simulate(4000, np.random.default_rng(3))
    assert stats.kendalltau(x[:, 0], x[:, 1])[0] == pytest.approx(-0.5, abs=0.03)


def test_fit_gaussian_recovers_rho():
    cop = BivariateCopula("gaussian", 0, (0.7,))
    x = cop.simulate(5000, np.random.default_rng(8))
    fit = fit_bivariate(x[:, 0], x[:, 1], families=["gaussian"])
    assert fit.family == "gaussian" and fit.params[0] == pytest.approx(0.7, abs=0.03)


def test_comonotone_gives_high_tau():
    u = np.random.default_rng(1).uniform(size=500)
    fit = fit_bivariate(u, u)
    assert fit.tau >= 0.99


def test_independence_selected_for_independent_data():
    hits = 0
    for seed in range(100):
        x = np.random.default_rng(seed).uniform(size=(2000, 2))
        hits += fit_bivariate(x[:, 0], x[:, 1]).family == "independence"
    assert hits >= 90


def test_constant_input_gives_independence():
    assert fit_bivariate(np.full(50, 0.5), np.linspace(0.01, 0.99, 50)).family == "independence"


def test_checkerboard_is_doubly_stochastic():
    cells = np.asarray(checkerboard_copula().params).reshape(16, 16)
    np.testing.assert_allclose(cells.sum(axis=0), 1 / 16, rtol=1e-9)
    np.testing.assert_allclose(cells.sum(axis=1), 1 / 16, rtol=1e-9)


def test_serialisation_and_validation():
    cop = BivariateCopula("frank", 0, (3.0,))
    assert BivariateCopula.from_dict(cop.to_dict()) == cop
    with pytest.raises(ValueError):
        BivariateCopula("bb7")
    with pytest.raises(ValueError):
        BivariateCopula("gaussian", 45, (0.1,))
