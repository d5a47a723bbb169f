"""Capillary-equilibrium upscaling of two-phase flow functions.

For each level ``s_d`` a common capillary pressure is imposed on every
facies, chosen from the smallest entry pressure so that all facies can be
invaded. Fine-scale saturations follow from the inverted Brooks-Corey
curve, the coarse saturation is their height-weighted average, and phase
permeabilities are series (harmonic) averages of ``k_r * k``.
"""
from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .facies import (
    FaciesModelConfig,
    FaciesRealization,
    harmonic_mean,
    sample_realizations,
)


@dataclass(frozen=True)
class SdGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("s_d grid must be a non-empty 1-D array")
        if np.any(np.diff(v) <= 0):
            raise ValueError("s_d grid must be strictly increasing")
        if v[0] < 1e-6 or v[-1] != 1.0:
            raise ValueError("s_d grid must lie in [1e-6, 1] and end at 1")

    @classmethod
    def logspace(cls, n: int = 21, lower: float = 1e-6) -> "SdGrid":
        v = np.logspace(np.log10(lower), 0.0, n)
        v[-1] = 1.0
        return cls(v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class FlowFunctionSample:
    """Coarse flow functions tabulated on an s_d grid (pc in kPa, k_abs in mD)."""

    k_abs: float
    pc: np.ndarray
    sat: np.ndarray
    krw: np.ndarray
    krnw: np.ndarray

    def violations(self, atol: float = 1e-12) -> list[str]:
        out = []
        for name in ("sat", "krw", "krnw"):
            a = getattr(self, name)
            if np.any(a < -atol) or np.any(a > 1 + atol):
                out.append(f"{name} outside [0, 1]")
        if not np.all(self.pc > 0):
            out.append("pc not positive")
        if np.any(np.diff(self.pc) >= 0):
            out.append("pc not strictly decreasing")
        if np.any(np.diff(self.sat) < -atol):
            out.append("sat decreasing")
        if np.any(np.diff(self.krw) < -atol):
            out.append("krw decreasing")
        if np.any(np.diff(self.krnw) > atol):
            out.append("krnw increasing")
        if not self.k_abs > 0:
            out.append("k_abs not positive")
        return out


def entry_pressure(k_cell, k_sand: float, p_entry_sand: float):
    """Leverett scaling: entry pressure grows as 1/sqrt(k)."""
    k_cell = np.asarray(k_cell, dtype=float)
    if np.any(k_cell <= 0) or k_sand <= 0 or p_entry_sand <= 0:
        raise ValueError("entry_pressure inputs must be positive")
    return p_entry_sand * np.sqrt(k_sand / k_cell)


def fine_scale_pc(s, p_entry, n: float):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s > 1):
        raise ValueError("saturation must lie in (0, 1]")
    return p_entry * s ** (-n)


def fine_scale_pc_inverse(pc, p_entry, n: float):
    """Wetting saturation at capillary pressure ``pc``; 1 below the entry pressure."""
    return np.minimum((np.asarray(pc, dtype=float) / p_entry) ** (-1.0 / n), 1.0)


def fine_scale_relperm(s, n: float):
    """Brooks-Corey/Burdine relative permeabilities with pore-size index 1/n."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    lam = 1.0 / n
    krw = s ** ((2 + 3 * lam) / lam)
    krnw = (1 - s) ** 2 * (1 - s ** ((2 + lam) / lam))
    return krw, krnw


def _upscale_arrays(heights, perms, grid: np.ndarray, config: FaciesModelConfig):
    """Core computation on (n, n_facies) arrays; returns dict of (n,) / (n, G) arrays."""
    n_exp = config.bc_exponent
    p_entry = entry_pressure(perms, config.k_sand, config.p_entry_sand)
    p_min = p_entry.min(axis=-1)
    k_abs = harmonic_mean(heights, perms)

    pc = p_min[:, None] * grid[None, :] ** (-n_exp)  # (n, G)
    s_fine = fine_scale_pc_inverse(pc[:, :, None], p_entry[:, None, :], n_exp)  # (n, G, F)
    h = heights[:, None, :]
    sat = (h * s_fine).sum(axis=-1) / h.sum(axis=-1)
    krw_f, krnw_f = fine_scale_relperm(s_fine, n_exp)
    k = perms[:, None, :]
    k_w = harmonic_mean(h, krw_f * k)
    k_nw = harmonic_mean(h, krnw_f * k)
    return {
        "k_abs": k_abs,
        "pc": pc,
        "sat": np.clip(sat, 0.0, 1.0),
        "krw": np.clip(k_w / k_abs[:, None], 0.0, 1.0),
        "krnw": np.clip(k_nw / k_abs[:, None], 0.0, 1.0),
    }


def upscale_flow_functions(
    real: FaciesRealization, grid: SdGrid, config: FaciesModelConfig
) -> FlowFunctionSample:
    if len(grid) == 0:
        raise ValueError("empty s_d grid")
    out = _upscale_arrays(real.heights[None, :], real.perms[None, :], grid.values, config)
    return FlowFunctionSample(
        float(out["k_abs"][0]), out["pc"][0], out["sat"][0], out["krw"][0], out["krnw"][0]
    )


@dataclass
class Ensemble(Sequence):
    """Array-backed collection of flow-function samples sharing one grid."""

    grid: SdGrid
    k_abs: np.ndarray
    pc: np.ndarray
    sat: np.ndarray
    krw: np.ndarray
    krnw: np.ndarray

    def __len__(self):
        return self.k_abs.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Ensemble(self.grid, self.k_abs[i], self.pc[i], self.sat[i], self.krw[i], self.krnw[i])
        return FlowFunctionSample(
            float(self.k_abs[i]), self.pc[i], self.sat[i], self.krw[i], self.krnw[i]
        )

    @classmethod
    def from_samples(cls, grid: SdGrid, samples) -> "Ensemble":
        samples = list(samples)
        return cls(
            grid,
            np.array([s.k_abs for s in samples]),
            np.array([s.pc for s in samples]),
            np.array([s.sat for s in samples]),
            np.array([s.krw for s in samples]),
            np.array([s.krnw for s in samples]),
        )

    def mean_sample(self) -> FlowFunctionSample:
        """Pointwise ensemble means; ``k_abs`` is the mean permeability."""
        return FlowFunctionSample(
            float(self.k_abs.mean()),
            self.pc.mean(axis=0),
            self.sat.mean(axis=0),
            self.krw.mean(axis=0),
            self.krnw.mean(axis=0),
        )

    def to_csv(self, path: str | Path, meta: dict | None = None) -> None:
        """One row per (sample, s_d); writes a ``.json`` sidecar next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "s_d", "k_abs_mD", "pc_kPa", "sat", "krw", "krnw"])
            for m in range(len(self)):
                for g, sd in enumerate(self.grid.values):
                    w.writerow([m, repr(float(sd)), repr(float(self.k_abs[m])),
                                repr(float(self.pc[m, g])), repr(float(self.sat[m, g])),
                                repr(float(self.krw[m, g])), repr(float(self.krnw[m, g]))])
        sidecar = {"schema_version": 1, "n_samples": len(self), "n_grid": len(self.grid)}
        sidecar.update(meta or {})
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Ensemble":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        ids = data[:, 0].astype(int)
        n = ids.max() + 1
        G = data.shape[0] // n
        data = data[np.lexsort((data[:, 1], ids))]
        grid = SdGrid(data[:G, 1])
        cols = data[:, 2:].reshape(n, G, 5)
        return cls(grid, cols[:, 0, 0], cols[..., 1], cols[..., 2], cols[..., 3], cols[..., 4])


def upscale_batch(heights, perms, grid: SdGrid, config: FaciesModelConfig, chunk: int = 2000) -> Ensemble:
    parts = []
    for start in range(0, heights.shape[0], chunk):
        parts.append(_upscale_arrays(heights[start:start + chunk], perms[start:start + chunk],
                                     grid.values, config))
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    return Ensemble(grid, **cat)


def generate_ensemble(config: FaciesModelConfig, grid: SdGrid, n_ref: int, seed) -> Ensemble:
    """``n_ref`` independent upscaled samples; deterministic in ``seed``."""
    if n_ref < 1:
        raise ValueError("n_ref must be >= 1")
    rng = np.random.default_rng(seed)
    heights, _, perms = sample_realizations(config, rng, n_ref)
    return upscale_batch(heights, perms, grid, config)
