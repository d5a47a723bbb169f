"""Five-variable reduced model of the upscaled flow functions.

Y1 = log K; Y2 = Pc offset around the log-linear mean; Y3 and Y4 = log S
and log Krw at the reference level ``sd0``, carried to other levels by a
rank permutation and per-level empirical inverse CDFs; Y5 = standardized
initial slope of Krnw.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ecdf import EmpiricalCDF
from .upscaling import Ensemble, FlowFunctionSample, SdGrid

SCHEMA_VERSION = 1


def _ranks(a: np.ndarray) -> np.ndarray:
    """0-based ranks per column, ties broken by position."""
    order = np.argsort(a, axis=0, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(a.shape[0])[:, None], axis=0)
    return ranks


def fit_rank_maps(values: np.ndarray, ref_index: int = 0) -> np.ndarray:
    """Permutations pairing reference ranks with target ranks, one row per grid level.

    ``values`` is (n_ref, G). Row ``g`` maps the rank of a member at the
    reference level to its rank at level ``g``; it is the identity when no
    sample paths cross between the two levels.
    """
    values = np.asarray(values, dtype=float)
    ranks = _ranks(values)
    ref = ranks[:, ref_index]
    perms = np.empty((values.shape[1], values.shape[0]), dtype=np.int64)
    for g in range(values.shape[1]):
        perms[g, ref] = ranks[:, g]
    return perms


def invert_permutations(perms: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perms)
    idx = np.arange(perms.shape[1])
    for g in range(perms.shape[0]):
        inv[g, perms[g]] = idx
    return inv


@dataclass
class ReducedModelFit:
    grid: np.ndarray
    a_pc: float
    b_pc: float
    a_knw: float
    b_knw: float
    sd_cut: float
    sorted_log_sat: np.ndarray  # (n_ref, G), column g sorted
    sorted_log_krw: np.ndarray
    sorted_krnw: np.ndarray
    perm_sat: np.ndarray  # (G, n_ref)
    perm_krw: np.ndarray
    perm_krnw: np.ndarray
    y_ref: np.ndarray  # (n_ref, 5)
    krnw_mode: str = "rank"
    schema_version: int = field(default=SCHEMA_VERSION)

    @property
    def sd0(self) -> float:
        return float(self.grid[0])

    @property
    def n_ref(self) -> int:
        return self.y_ref.shape[0]

    def inverse_perm_sat(self) -> np.ndarray:
        return invert_permutations(self.perm_sat)

    def inverse_perm_krw(self) -> np.ndarray:
        return invert_permutations(self.perm_krw)

    def save(self, path: str | Path) -> None:
        """JSON header plus an ``.npz`` with the tables and permutations."""
        path = Path(path)
        header = {
            "schema_version": self.schema_version,
            "kind": "ReducedModelFit",
            "grid": self.grid.tolist(),
            "a_pc": self.a_pc, "b_pc": self.b_pc,
            "a_knw": self.a_knw, "b_knw": self.b_knw,
            "sd_cut": self.sd_cut,
            "krnw_mode": self.krnw_mode,
            "n_ref": self.n_ref,
            "tables": path.with_suffix(".npz").name,
        }
        path.write_text(json.dumps(header, indent=2))
        np.savez_compressed(
            path.with_suffix(".npz"),
            sorted_log_sat=self.sorted_log_sat, sorted_log_krw=self.sorted_log_krw,
            sorted_krnw=self.sorted_krnw, perm_sat=self.perm_sat, perm_krw=self.perm_krw,
            perm_krnw=self.perm_krnw, y_ref=self.y_ref,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ReducedModelFit":
        path = Path(path)
        h = json.loads(path.read_text())
        if h.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported reduced-model schema {h.get('schema_version')}")
        t = np.load(path.parent / h["tables"])
        return cls(
            np.asarray(h["grid"]), h["a_pc"], h["b_pc"], h["a_knw"], h["b_knw"], h["sd_cut"],
            t["sorted_log_sat"], t["sorted_log_krw"], t["sorted_krnw"], t["perm_sat"],
            t["perm_krw"], t["perm_krnw"], t["y_ref"], krnw_mode=h["krnw_mode"],
        )


def _pc_regression(ensemble: Ensemble) -> tuple[float, float]:
    x = np.log(ensemble.grid.values)
    y = np.log(ensemble.pc).mean(axis=0)
    b, a = np.polyfit(x, y, 1)
    return float(a), float(b)


def _krnw_coefficients(ensemble: Ensemble) -> tuple[float, float, float]:
    sd0 = ensemble.grid.values[0]
    slope0 = (ensemble.krnw[:, 0] - 1.0) / sd0
    a = float(slope0.mean())
    b = float(slope0.std())
    sd_cut = 1.0 if a >= 0 else float(np.clip(-1.0 / a, sd0, 1.0))
    return a, b, sd_cut


def _check_grid(ensemble: Ensemble, grid: SdGrid | None):
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if grid is not None and not np.array_equal(grid.values, ensemble.grid.values):
        raise ValueError("grid does not match ensemble tabulation")


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def extract_y(ensemble: Ensemble, grid: SdGrid | None = None) -> np.ndarray:
    """(n_ref, 5) matrix of reduced variables evaluated at the reference level."""
    _check_grid(ensemble, grid)
    a_pc, b_pc = _pc_regression(ensemble)
    a_knw, b_knw, _ = _krnw_coefficients(ensemble)
    sd0 = ensemble.grid.values[0]
    y = np.empty((len(ensemble), 5))
    y[:, 0] = np.log(ensemble.k_abs)
    y[:, 1] = np.log(ensemble.pc[:, 0]) - (a_pc + b_pc * np.log(sd0))
    y[:, 2] = _log(ensemble.sat[:, 0])
    y[:, 3] = _log(ensemble.krw[:, 0])
    slope0 = (ensemble.krnw[:, 0] - 1.0) / sd0
    y[:, 4] = (slope0 - a_knw) / b_knw if b_knw > 0 else 0.0
    return y


def degenerate_columns(y: np.ndarray) -> list[int]:
    """Indices of Y columns with zero variance."""
    return [j for j in range(y.shape[1]) if not np.ptp(y[:, j]) > 0]


def fit_reduced_model(ensemble: Ensemble, krnw_mode: str = "rank") -> ReducedModelFit:
    """Fit regression coefficients, per-level sorted tables and rank maps.

    ``krnw_mode="linear"`` evaluates Krnw from the linear-in-s_d form with
    a truncated slope variable; ``"rank"`` carries the reference Krnw value
    to other levels with the same rank-map construction used for S and Krw.
    """
    if krnw_mode not in ("linear", "rank"):
        raise ValueError(f"unknown krnw_mode {krnw_mode!r}")
    _check_grid(ensemble, None)
    a_pc, b_pc = _pc_regression(ensemble)
    a_knw, b_knw, sd_cut = _krnw_coefficients(ensemble)
    log_sat = _log(ensemble.sat)
    log_krw = _log(ensemble.krw)
    return ReducedModelFit(
        grid=ensemble.grid.values.copy(),
        a_pc=a_pc, b_pc=b_pc, a_knw=a_knw, b_knw=b_knw, sd_cut=sd_cut,
        sorted_log_sat=np.sort(log_sat, axis=0),
        sorted_log_krw=np.sort(log_krw, axis=0),
        sorted_krnw=np.sort(ensemble.krnw, axis=0),
        perm_sat=fit_rank_maps(log_sat),
        perm_krw=fit_rank_maps(log_krw),
        perm_krnw=fit_rank_maps(-ensemble.krnw),
        y_ref=extract_y(ensemble),
        krnw_mode=krnw_mode,
    )


def _ref_rank(values_sorted_ref: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rounded reference rank of ``y`` under the empirical CDF at sd0."""
    n = values_sorted_ref.size
    f = EmpiricalCDF(values_sorted_ref).cdf(y)
    return np.clip(np.rint(n * f), 0, n - 1).astype(np.int64)


def _rank_mapped(y, sorted_table, perms):
    """Columns g >= 1 from the rank map; column 0 is ``y`` itself."""
    k = _ref_rank(sorted_table[:, 0], y)
    out = np.empty((y.size, sorted_table.shape[1]))
    out[:, 0] = y
    for g in range(1, sorted_table.shape[1]):
        out[:, g] = sorted_table[perms[g, k], g]
    return out


def evaluate_batch(y: np.ndarray, fit: ReducedModelFit) -> dict[str, np.ndarray]:
    """Vectorized model evaluation for a (N, 5) array of reduced variables."""
    if fit is None:
        raise ValueError("reduced model fit required")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    grid = fit.grid
    log_sd = np.log(grid)

    k_abs = np.exp(y[:, 0])
    pc = np.exp(fit.a_pc + fit.b_pc * log_sd[None, :] + y[:, [1]])

    sat = np.exp(_rank_mapped(y[:, 2], fit.sorted_log_sat, fit.perm_sat))
    krw = np.exp(_rank_mapped(y[:, 3], fit.sorted_log_krw, fit.perm_krw))

    sd = grid[None, :]
    if fit.b_knw > 0:
        bound = -(1.0 + fit.a_knw * sd) / (fit.b_knw * sd)
        y5 = np.maximum(y[:, [4]], bound)
        linear = 1.0 + (fit.a_knw + fit.b_knw * y5) * sd
    else:
        linear = np.broadcast_to(1.0 + fit.a_knw * sd, (y.shape[0], grid.size)).copy()
    linear = np.where(sd <= fit.sd_cut, linear, 0.0)
    if fit.krnw_mode == "linear":
        krnw = linear
    else:
        krnw0 = linear[:, 0]
        krnw = -_rank_mapped(-krnw0, -fit.sorted_krnw[::-1], fit.perm_krnw)

    # physical-range guard: the construction does not exclude every edge case
    sat = np.maximum.accumulate(np.clip(sat, 0.0, 1.0), axis=1)
    krw = np.maximum.accumulate(np.clip(krw, 0.0, 1.0), axis=1)
    krnw = np.minimum.accumulate(np.clip(krnw, 0.0, 1.0), axis=1)
    return {"k_abs": k_abs, "pc": pc, "sat": sat, "krw": krw, "krnw": krnw}


def evaluate_flow_functions(y, grid: SdGrid | None, fit: ReducedModelFit) -> FlowFunctionSample:
    if fit is None:
        raise ValueError("reduced model fit required")
    if grid is not None and not np.allclose(grid.values, fit.grid, rtol=0, atol=0):
        raise ValueError("grid does not match the fitted grid")
    out = evaluate_batch(np.asarray(y, dtype=float)[None, :], fit)
    return FlowFunctionSample(float(out["k_abs"][0]), out["pc"][0], out["sat"][0],
                              out["krw"][0], out["krnw"][0])


def evaluate_ensemble(y: np.ndarray, fit: ReducedModelFit) -> Ensemble:
    out = evaluate_batch(y, fit)
    return Ensemble(SdGrid(fit.grid), **out)
