"""Stochastic 1-D geocellular fault model and absolute-permeability upscaling.

A realization partitions the fault height into ``n_facies`` layers whose
interior boundaries are jittered uniformly around equidistant positions.
Each facies carries a Gaussian shale gouge ratio (SGR) centred on a
depth-interpolated mean profile, mapped to permeability log-linearly
between a sand and a clay end member.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats


def load_sgr_profile(path: str | Path | None = None) -> tuple[tuple[float, float], ...]:
    """Read a ``depth_m,sgr_mean_pct`` CSV; the packaged default if ``path`` is None."""
    if path is None:
        text = resources.files("faultflow").joinpath("data/sgr_profile.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(text.splitlines())
    if rows.fieldnames is None or set(rows.fieldnames) != {"depth_m", "sgr_mean_pct"}:
        raise ValueError("SGR profile needs header 'depth_m,sgr_mean_pct'")
    return tuple((float(r["depth_m"]), float(r["sgr_mean_pct"])) for r in rows)


@dataclass(frozen=True)
class FaciesModelConfig:
    n_facies: int = 20
    depth_top: float = 700.0
    depth_bottom: float = 1200.0
    sgr_profile: tuple[tuple[float, float], ...] = field(default_factory=load_sgr_profile)
    sgr_std: float = 14.0
    k_clay: float = 1.0
    k_sand: float = 1000.0
    p_entry_sand: float = 2.5
    bc_exponent: float = 0.67

    def __post_init__(self):
        profile = tuple((float(d), float(s)) for d, s in self.sgr_profile)
        object.__setattr__(self, "sgr_profile", profile)
        if self.n_facies < 1:
            raise ValueError("n_facies must be >= 1")
        if not self.depth_bottom > self.depth_top:
            raise ValueError("depth_bottom must exceed depth_top")
        depths = np.array([d for d, _ in profile])
        sgr = np.array([s for _, s in profile])
        if len(profile) == 0 or np.any(np.diff(depths) <= 0):
            raise ValueError("SGR profile depths must be strictly increasing")
        if np.any(sgr < 0) or np.any(sgr > 100):
            raise ValueError("mean SGR must lie in [0, 100]")
        if self.sgr_std < 0:
            raise ValueError("sgr_std must be non-negative")
        if self.k_clay <= 0 or self.k_sand <= 0:
            raise ValueError("permeabilities must be positive")
        if not self.k_clay < self.k_sand:
            raise ValueError("k_clay must be smaller than k_sand")
        if self.p_entry_sand <= 0 or self.bc_exponent <= 0:
            raise ValueError("entry pressure and Brooks-Corey exponent must be positive")

    @property
    def height(self) -> float:
        return self.depth_bottom - self.depth_top

    def mean_sgr(self, depth):
        """Piecewise-linear profile, constant beyond the table ends."""
        depths, sgr = zip(*self.sgr_profile)
        return np.interp(depth, depths, sgr)

    def replace(self, **changes) -> "FaciesModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sgr_profile"] = [list(p) for p in self.sgr_profile]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaciesModelConfig":
        d = dict(d)
        if "sgr_profile" in d:
            d["sgr_profile"] = tuple(tuple(p) for p in d["sgr_profile"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "FaciesModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FaciesRealization:
    heights: np.ndarray
    sgr: np.ndarray
    perms: np.ndarray

    def __post_init__(self):
        for name in ("heights", "sgr", "perms"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.heights.shape == self.sgr.shape == self.perms.shape):
            raise ValueError("heights, sgr and perms must have equal length")


def sgr_to_perm(sgr, k_clay: float, k_sand: float):
    """Log-linear SGR to permeability map (mD); SGR 0 gives sand, 100 gives clay."""
    if k_clay <= 0 or k_sand <= 0:
        raise ValueError("permeabilities must be positive")
    sgr = np.asarray(sgr, dtype=float)
    return np.exp(0.01 * sgr * np.log(k_clay / k_sand) + np.log(k_sand))


def _boundaries_from_jitter(config: FaciesModelConfig, jitter: np.ndarray) -> np.ndarray:
    n = config.n_facies
    H = config.height
    expected = np.arange(1, n) * H / n
    interior = np.sort(expected + jitter, axis=-1)
    shape = interior.shape[:-1]
    return np.concatenate(
        [np.zeros(shape + (1,)), interior, np.full(shape + (1,), H)], axis=-1
    )


def sample_realizations(config: FaciesModelConfig, rng: np.random.Generator, n: int):
    """Vectorized draw of ``n`` realizations as ``(heights, sgr, perms)`` arrays of shape (n, n_facies).

    Boundary jitter for all realizations is drawn first, then all SGR
    normals; each realization still uses exactly ``2*n_facies - 1`` variates.
    """
    nf = config.n_facies
    half_width = config.height / (2 * nf)
    jitter = rng.uniform(-half_width, half_width, size=(n, nf - 1))
    z = rng.standard_normal(size=(n, nf))
    bounds = _boundaries_from_jitter(config, jitter)
    heights = np.diff(bounds, axis=-1)
    mid_depth = config.depth_top + 0.5 * (bounds[:, :-1] + bounds[:, 1:])
    sgr = np.clip(config.mean_sgr(mid_depth) + config.sgr_std * z, 0.0, 100.0)
    perms = sgr_to_perm(sgr, config.k_clay, config.k_sand)
    return heights, sgr, perms


def sample_realization(config: FaciesModelConfig, rng: np.random.Generator) -> FaciesRealization:
    heights, sgr, perms = sample_realizations(config, rng, 1)
    return FaciesRealization(heights[0], sgr[0], perms[0])


def expected_realization(config: FaciesModelConfig) -> FaciesRealization:
    """Noise-free realization: equidistant boundaries and profile-mean SGR."""
    bounds = _boundaries_from_jitter(config, np.zeros(config.n_facies - 1))
    heights = np.diff(bounds)
    mid_depth = config.depth_top + 0.5 * (bounds[:-1] + bounds[1:])
    sgr = np.clip(config.mean_sgr(mid_depth), 0.0, 100.0)
    return FaciesRealization(heights, sgr, sgr_to_perm(sgr, config.k_clay, config.k_sand))


def harmonic_mean(heights, perms, axis=-1):
    """Height-weighted harmonic mean; 0 when any permeability is 0."""
    heights = np.asarray(heights, dtype=float)
    perms = np.asarray(perms, dtype=float)
    with np.errstate(divide="ignore"):
        inv = np.where(perms > 0, heights / np.where(perms > 0, perms, 1.0), np.inf)
    return heights.sum(axis=axis) / inv.sum(axis=axis)


def upscale_permeability(real: FaciesRealization) -> float:
    """Series (cross-layer) effective permeability of a realization."""
    if np.any(real.perms <= 0):
        raise ValueError("facies permeabilities must be positive")
    return float(harmonic_mean(real.heights, real.perms))


def arithmetic_permeability(real: FaciesRealization) -> float:
    """Parallel (along-layer) effective permeability, used for flow across the fault."""
    return float(np.sum(real.heights * real.perms) / np.sum(real.heights))


@dataclass(frozen=True)
class LognormalFit:
    mu: float
    sigma: float

    def ppf(self, u, lower: float = 0.0, upper: float = 1.0):
        """Inverse CDF; ``u`` in [0, 1] is first mapped onto the sub-range [lower, upper]."""
        u = lower + (upper - lower) * np.asarray(u, dtype=float)
        if self.sigma == 0:
            return np.full(np.shape(u), np.exp(self.mu))[()]
        return np.exp(self.mu + self.sigma * stats.norm.ppf(u))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma == 0:
            return np.where(x >= np.exp(self.mu), 1.0, 0.0)[()]
        return stats.norm.cdf((np.log(x) - self.mu) / self.sigma)

    @property
    def mean(self) -> float:
        return float(np.exp(self.mu + 0.5 * self.sigma**2))

    @property
    def median(self) -> float:
        return float(np.exp(self.mu))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


def fit_lognormal(samples) -> LognormalFit:
    """Method-of-moments fit in log space (population standard deviation)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if np.any(x <= 0):
        raise ValueError("lognormal fit requires positive samples")
    logs = np.log(x)
    return LognormalFit(float(logs.mean()), float(logs.std()))


def lognormal_from_moments(mean: float, std: float) -> LognormalFit:
    """Lognormal with the given arithmetic mean and standard deviation."""
    sigma2 = np.log1p((std / mean) ** 2)
    return LognormalFit(float(np.log(mean) - 0.5 * sigma2), float(np.sqrt(sigma2)))
