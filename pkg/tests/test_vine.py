import numpy as np
import pytest
from scipy import stats

from faultflow.copula import (BivariateCopula, VineEdge, VineModel, dvine, fit_vine, fit_vine_to_data,
                              independence_vine, pseudo_observations)
from faultflow.ecdf import EmpiricalCDF
from faultflow.reduced import extract_y


def gauss(r):
    return BivariateCopula("gaussian", 0, (r,))


def gaussian_copula_density(u, corr):
    x = stats.norm.ppf(u)
    prec = np.linalg.inv(corr) - np.eye(corr.shape[0])
    quad = np.einsum("ni,ij,nj->n", x, prec, x)
    return np.exp(-0.5 * quad) / np.sqrt(np.linalg.det(corr))


def test_gaussian_dvine_matches_trivariate_closed_form():
    r01, r12, r02_1 = 0.7, -0.4, 0.5
    model = dvine(3, [[gauss(r01), gauss(r12)], [gauss(r02_1)]])
    r02 = r02_1 * np.sqrt((1 - r01 ** 2) * (1 - r12 ** 2)) + r01 * r12
    corr = np.array([[1, r01, r02], [r01, 1, r12], [r02, r12, 1]])
    g = (np.arange(10) + 0.5) / 10
    u = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    np.testing.assert_allclose(model.pdf(u), gaussian_copula_density(u, corr), rtol=1e-6)


def test_density_integrates_to_one_by_monte_carlo():
    model = dvine(3, [[gauss(0.5), BivariateCopula("clayton", 0, (1.0,))], [BivariateCopula("frank", 0, (2.0,))]])
    u = np.random.default_rng(0).uniform(size=(1_000_000, 3))
    assert model.pdf(u).mean() == pytest.approx(1.0, rel=0.01)


def test_independence_vine_is_identity():
    m = independence_vine(4)
    u = np.random.default_rng(1).uniform(size=(50, 4))
    np.testing.assert_allclose(m.pdf(u), 1.0)
    np.testing.assert_allclose(m.rosenblatt(u), u, atol=1e-15)
    np.testing.assert_allclose(m.inverse_rosenblatt(u), u, atol=1e-15)


def test_rosenblatt_round_trip_and_independence():
    model = dvine(4, [[gauss(0.6), BivariateCopula("gumbel", 0, (1.8,)), gauss(-0.3)],
                      [BivariateCopula("clayton", 180, (1.2,)), gauss(0.2)],
                      [BivariateCopula("frank", 0, (-2.0,))]])
    rng = np.random.default_rng(4)
    w = rng.uniform(size=(1000, 4))
    x = model.inverse_rosenblatt(w)
    assert np.max(np.abs(model.rosenblatt(x) - w)) <= 1e-6
    z = model.rosenblatt(model.simulate(4000, rng))
    tau = stats.kendalltau(z[:, 0], z[:, 3])[0]
    assert abs(tau) < 0.04


def test_structure_recovery_three_dims():
    model = dvine(3, [[gauss(0.8), gauss(0.6)], [gauss(0.3)]])
    u = model.simulate(3000, np.random.default_rng(2))
    fit = fit_vine(u, structure="rvine")
    tree1 = {frozenset((e.a, e.b)) for e in fit.trees[0]}
    taus = {frozenset((i, j)): abs(stats.kendalltau(u[:, i], u[:, j])[0]) for i in range(3) for j in range(i + 1, 3)}
    assert tree1 == set(sorted(taus, key=taus.get)[-2:])


def test_auto_structure_keeps_lower_aic():
    model = dvine(4, [[gauss(0.2), gauss(0.7), gauss(0.6)], [gauss(0.4), None], [None]])
    u = model.simulate(1500, np.random.default_rng(9))
    fits = [fit_vine(u, structure=s) for s in ("rvine", "dvine", "auto")]
    assert fits[2].aic(u) == min(f.aic(u) for f in fits[:2])


def test_two_dim_vine():
    u = gauss(0.5).simulate(500, np.random.default_rng(0))
    m = fit_vine(u)
    assert len(m.edges) == 1 and m.edges[0].cond == frozenset()


def test_invalid_structure_rejected():
    ok = dvine(3, [[None, None], [None]])
    e1, e2 = ok.trees[0]
    bad_top = VineEdge(2, 0, 2, frozenset({0}), (0, 1), BivariateCopula())
    with pytest.raises(ValueError):
        VineModel(3, [[e1, e2], [bad_top]])
    with pytest.raises(ValueError):
        VineModel(3, [[e1], [ok.trees[1][0]]])


def test_fitted_y_model(small_ensemble):
    y = extract_y(small_ensemble)
    model = fit_vine_to_data(y)
    assert len(model.edges) == 10
    rng = np.random.default_rng(5)
    w = rng.uniform(size=(1000, 5))
    assert np.max(np.abs(model.rosenblatt(model.inverse_rosenblatt(w)) - w)) <= 1e-6
    sim = model.simulate(200_000, rng)
    assert np.all(model.pdf(sim) > 0)
    for j in range(5):
        assert stats.kstest(sim[:, j], "uniform").statistic <= 0.005
    u = pseudo_observations(y)
    baseline = fit_vine(u, families=["gaussian"], structure="dvine", checkerboard=False)
    assert model.loglik(u) >= baseline.loglik(u)


def test_tau_invariant_under_monotone_transform(small_ensemble):
    y = extract_y(small_ensemble)[:500]
    a = fit_vine_to_data(y)
    b = fit_vine_to_data(np.column_stack([y[:, 0] ** 3, np.exp(y[:, 1]), y[:, 2], 2 * y[:, 3] - 1, y[:, 4]]))
    assert a.structure() == b.structure()
    assert [e.copula for e in a.edges] == [e.copula for e in b.edges]


def test_sample_y_medians_and_determinism():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((101, 3))
    margs = [EmpiricalCDF(data[:, j]) for j in range(3)]
    m = independence_vine(3, margs)
    y = m.sample_y(np.full((1, 3), 0.5))[0]
    np.testing.assert_allclose(y, [mg.ppf(0.5) for mg in margs])
    w = rng.uniform(size=(5, 3))
    assert np.array_equal(m.sample_y(w), m.sample_y(w))


def test_save_load(tmp_path, small_ensemble):
    model = fit_vine_to_data(extract_y(small_ensemble)[:400])
    model.save(tmp_path / "v.json")
    back = VineModel.load(tmp_path / "v.json")
    w = np.random.default_rng(0).uniform(size=(20, 5))
    assert np.array_equal(model.sample_y(w), back.sample_y(w))
