import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faultflow.facies import FaciesModelConfig, FaciesRealization, sample_realization
from faultflow.upscaling import (Ensemble, SdGrid, entry_pressure, fine_scale_pc, fine_scale_pc_inverse,
                                 fine_scale_relperm, generate_ensemble, upscale_flow_functions)


def brute_force_upscale(heights, perms, sd_values, k_sand, p_sand, n):
    """Scalar re-derivation of the six capillary-equilibrium steps, one level at a time."""
    entries = [p_sand * math.sqrt(k_sand / k) for k in perms]
    lam = 1.0 / n
    total_h = sum(heights)
    k_abs = total_h / sum(h / k for h, k in zip(heights, perms))
    pc_out, s_out, krw_out, krnw_out = [], [], [], []
    for sd in sd_values:
        pc = min(entries) * sd ** (-n)
        s_cells = []
        for pe in entries:
            s = 1.0 if pc <= pe else (pc / pe) ** (-lam)
            s_cells.append(min(max(s, 0.0), 1.0))
        s_out.append(sum(h * s for h, s in zip(heights, s_cells)) / total_h)
        phase = []
        for which in ("w", "nw"):
            denom, blocked = 0.0, False
            for h, k, s in zip(heights, perms, s_cells):
                kr = s ** (3.0 + 2.0 / lam) if which == "w" else (1 - s) ** 2 * (1 - s ** (1.0 + 2.0 / lam))
                if kr * k == 0.0:
                    blocked = True
                    break
                denom += h / (kr * k)
            phase.append(0.0 if blocked else total_h / denom / k_abs)
        pc_out.append(pc)
        krw_out.append(phase[0])
        krnw_out.append(phase[1])
    return k_abs, pc_out, s_out, krw_out, krnw_out


def assert_rel(a, b, tol):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.abs(b), 1e-300)
    assert np.all(np.where(b == 0, np.abs(a) <= 1e-300, np.abs(a - b) / scale <= tol)), (a, b)


def test_entry_pressure_examples():
    assert entry_pressure(1000, 1000, 2.5) == pytest.approx(2.5)
    assert entry_pressure(10, 1000, 2.5) == pytest.approx(25.0)
    assert entry_pressure(1e-4, 1000, 2.5) == pytest.approx(2.5 * math.sqrt(1e7))
    with pytest.raises(ValueError):
        entry_pressure(0.0, 1000, 2.5)


def test_fine_pc_examples():
    assert fine_scale_pc(1.0, 2.5, 0.67) == pytest.approx(2.5)
    assert fine_scale_pc(0.5, 2.5, 0.67) == pytest.approx(2.5 * 2 ** 0.67)
    assert fine_scale_pc_inverse(2.5, 2.5, 0.67) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fine_scale_pc(0.0, 2.5, 0.67)


def test_fine_relperm_examples():
    assert fine_scale_relperm(1.0, 0.67) == (1.0, 0.0)
    assert fine_scale_relperm(0.0, 0.67) == (0.0, 1.0)
    krw, krnw = fine_scale_relperm(0.5, 0.67)
    lam = 1 / 0.67
    assert krw == pytest.approx(0.5 ** ((2 + 3 * lam) / lam), rel=1e-14)
    assert (2 + 3 * lam) / lam == pytest.approx(4.34)
    assert krnw == pytest.approx(0.25 * (1 - 0.5 ** ((2 + lam) / lam)), rel=1e-14)


@given(st.floats(0.01, 1.0), st.floats(0.5, 50.0))
def test_fine_pc_round_trip(s, pe):
    assert fine_scale_pc_inverse(fine_scale_pc(s, pe, 0.67), pe, 0.67) == pytest.approx(s, rel=1e-12)


def test_homogeneous_fault_is_identity(grid):
    cfg = FaciesModelConfig()
    real = FaciesRealization(np.full(20, 25.0), np.zeros(20), np.full(20, 7.0))
    ff = upscale_flow_functions(real, grid, cfg)
    pe = entry_pressure(7.0, cfg.k_sand, cfg.p_entry_sand)
    krw, krnw = fine_scale_relperm(grid.values, cfg.bc_exponent)
    np.testing.assert_allclose(ff.sat, grid.values, rtol=1e-12)
    np.testing.assert_allclose(ff.pc, fine_scale_pc(grid.values, pe, cfg.bc_exponent), rtol=1e-12)
    np.testing.assert_allclose(ff.krw, krw, rtol=1e-10)
    np.testing.assert_allclose(ff.krnw, krnw, rtol=1e-10)
    assert ff.k_abs == pytest.approx(7.0)


def test_full_wetting_level(grid, rng):
    cfg = FaciesModelConfig(k_clay=1e-4)
    ff = upscale_flow_functions(sample_realization(cfg, rng), grid, cfg)
    assert ff.sat[-1] == 1.0 and ff.krw[-1] == pytest.approx(1.0, rel=1e-12) and ff.krnw[-1] == 0.0


def test_two_facies_matches_brute_force(grid):
    cfg = FaciesModelConfig()
    real = FaciesRealization([200.0, 300.0], [0, 0], [500.0, 0.2])
    ff = upscale_flow_functions(real, grid, cfg)
    ref = brute_force_upscale(real.heights, real.perms, grid.values, cfg.k_sand, cfg.p_entry_sand, cfg.bc_exponent)
    assert_rel(ff.k_abs, ref[0], 1e-12)
    for got, want in zip((ff.pc, ff.sat, ff.krw, ff.krnw), ref[1:]):
        assert_rel(got, want, 1e-12)


@pytest.mark.parametrize("k_clay", [1e-4, 1e-3, 1.0])
def test_brute_force_oracle_random(grid, k_clay):
    cfg = FaciesModelConfig(k_clay=k_clay)
    rng = np.random.default_rng(int(-math.log10(k_clay)) + 100)
    for _ in range(20):
        real = sample_realization(cfg, rng)
        ff = upscale_flow_functions(real, grid, cfg)
        ref = brute_force_upscale(real.heights, real.perms, grid.values, cfg.k_sand, cfg.p_entry_sand,
                                  cfg.bc_exponent)
        assert_rel(ff.k_abs, ref[0], 1e-12)
        for got, want in zip((ff.pc, ff.sat, ff.krw, ff.krnw), ref[1:]):
            assert_rel(got, want, 1e-12)


def test_ensemble_invariants_and_pc_structure(small_ensemble):
    ens = small_ensemble
    for i in range(len(ens)):
        assert ens[i].violations() == []
    logpc = np.log(ens.pc)
    slopes = np.diff(logpc, axis=1) / np.diff(np.log(ens.grid.values))
    np.testing.assert_allclose(slopes, -0.67, atol=1e-10)
    corr = np.corrcoef(logpc[:, 0], logpc[:, 10])[0, 1]
    assert abs(corr - 1) < 1e-12
    np.testing.assert_array_equal(ens.krw[:, -1] == 1.0, np.isclose(ens.krw[:, -1], 1.0, rtol=0, atol=1e-12))


def test_generate_ensemble_determinism_and_singleton(grid):
    cfg = FaciesModelConfig(k_clay=1e-3)
    a = generate_ensemble(cfg, grid, 50, 4)
    b = generate_ensemble(cfg, grid, 50, 4)
    assert np.array_equal(a.sat, b.sat) and np.array_equal(a.k_abs, b.k_abs)
    assert len(generate_ensemble(cfg, grid, 1, 4)) == 1


def test_sample_path_crossing_exists(grid):
    ens = generate_ensemble(FaciesModelConfig(k_clay=1e-4), grid, 10_000, 0)
    r0 = np.argsort(np.argsort(ens.sat[:, 0], kind="stable"), kind="stable")
    crossed = any(not np.array_equal(r0, np.argsort(np.argsort(ens.sat[:, g], kind="stable"), kind="stable"))
                  for g in range(1, len(grid) - 1))
    assert crossed


def test_grid_validation():
    with pytest.raises(ValueError):
        SdGrid(np.array([1e-7, 1.0]))
    with pytest.raises(ValueError):
        SdGrid(np.array([0.5, 0.9]))
    g = SdGrid.logspace()
    assert len(g) == 21 and g.values[0] == pytest.approx(1e-6) and g.values[-1] == 1.0


def test_ensemble_csv_round_trip(tmp_path, small_ensemble):
    ens = small_ensemble[:30]
    ens.to_csv(tmp_path / "e.csv", meta={"seed": 11})
    back = Ensemble.from_csv(tmp_path / "e.csv")
    assert np.array_equal(back.krnw, ens.krnw) and np.array_equal(back.k_abs, ens.k_abs)
    assert (tmp_path / "e.json").exists()
