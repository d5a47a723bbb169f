"""Bivariate pair copulas: rotations, h-functions, selection by AIC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .families import FAMILIES, clip

CHECKERBOARD_BINS = 16


@dataclass(frozen=True)
class BivariateCopula:
    """A pair copula ``C(u, v)``.

    ``hfunc2(u, v) = P(U <= u | V = v)`` (derivative in ``v``) and
    ``hfunc1(u, v) = P(V <= v | U = u)``. For the checkerboard family
    ``params`` holds the flattened doubly-stochastic cell mass matrix.
    """

    family: str = "independence"
    rotation: int = 0
    params: tuple = ()
    loglik: float = field(default=0.0, compare=False)
    aic: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.family != "checkerboard" and self.family not in FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}")
        if self.rotation not in (0, 90, 180, 270):
            raise ValueError("rotation must be 0, 90, 180 or 270")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @property
    def n_params(self) -> int:
        if self.family == "checkerboard":
            return (CHECKERBOARD_BINS - 1) ** 2
        return FAMILIES[self.family].n_params

    @property
    def _base(self):
        return FAMILIES[self.family]

    @property
    def _cells(self) -> np.ndarray:
        m = CHECKERBOARD_BINS
        return np.asarray(self.params).reshape(m, m)

    def logpdf(self, u, v):
        u, v = clip(u), clip(v)
        if self.family == "checkerboard":
            return _cb_logpdf(self._cells, u, v)
        r, b, p = self.rotation, self._base, self.params
        if r == 0:
            return b.logpdf(u, v, p)
        if r == 90:
            return b.logpdf(1 - u, v, p)
        if r == 180:
            return b.logpdf(1 - u, 1 - v, p)
        return b.logpdf(u, 1 - v, p)

    def pdf(self, u, v):
        return np.exp(self.logpdf(u, v))

    def hfunc2(self, u, v):
        u, v = clip(u), clip(v)
        if self.family == "checkerboard":
            return _cb_h(self._cells, u, v)
        r, b, p = self.rotation, self._base, self.params
        if r == 0:
            out = b.h(u, v, p)
        elif r == 90:
            out = 1 - b.h(1 - u, v, p)
        elif r == 180:
            out = 1 - b.h(1 - u, 1 - v, p)
        else:
            out = b.h(u, 1 - v, p)
        return clip(out)

    def hfunc1(self, u, v):
        u, v = clip(u), clip(v)
        if self.family == "checkerboard":
            return _cb_h(self._cells.T, v, u)
        r, b, p = self.rotation, self._base, self.params
        if r == 0:
            out = b.h(v, u, p)
        elif r == 90:
            out = b.h(v, 1 - u, p)
        elif r == 180:
            out = 1 - b.h(1 - v, 1 - u, p)
        else:
            out = 1 - b.h(1 - v, u, p)
        return clip(out)

    def hinv2(self, q, v):
        """Solve ``hfunc2(u, v) = q`` for ``u``."""
        q, v = clip(q), clip(v)
        if self.family == "checkerboard":
            return _cb_hinv(self._cells, q, v)
        r, b, p = self.rotation, self._base, self.params
        if r == 0:
            out = b.hinv(q, v, p)
        elif r == 90:
            out = 1 - b.hinv(1 - q, v, p)
        elif r == 180:
            out = 1 - b.hinv(1 - q, 1 - v, p)
        else:
            out = b.hinv(q, 1 - v, p)
        return clip(out)

    def hinv1(self, q, u):
        """Solve ``hfunc1(u, v) = q`` for ``v``."""
        q, u = clip(q), clip(u)
        if self.family == "checkerboard":
            return _cb_hinv(self._cells.T, q, u)
        r, b, p = self.rotation, self._base, self.params
        if r == 0:
            out = b.hinv(q, u, p)
        elif r == 90:
            out = b.hinv(q, 1 - u, p)
        elif r == 180:
            out = 1 - b.hinv(1 - q, 1 - u, p)
        else:
            out = 1 - b.hinv(1 - q, u, p)
        return clip(out)

    @property
    def tau(self) -> float:
        if self.family == "checkerboard":
            return _cb_tau(self._cells)
        t = float(self._base.par_to_tau(self.params))
        return -t if self.rotation in (90, 270) else t

    def simulate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w = rng.uniform(size=(n, 2))
        return np.column_stack([w[:, 0], self.hinv1(w[:, 1], w[:, 0])])

    def to_dict(self) -> dict:
        return {"family": self.family, "rotation": self.rotation, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "BivariateCopula":
        return cls(d["family"], int(d["rotation"]), tuple(d["params"]))


def h_function(c: BivariateCopula, u, v):
    """``dC(u, v)/dv``, the conditional CDF of U given V = v."""
    return c.hfunc2(u, v)


def h_inverse(c: BivariateCopula, p, v):
    return c.hinv2(p, v)


# -- checkerboard -----------------------------------------------------------

def _cb_index(x, m):
    return np.minimum((x * m).astype(int), m - 1)


def _cb_logpdf(cells, u, v):
    m = cells.shape[0]
    return np.log(m * m * cells[_cb_index(u, m), _cb_index(v, m)])


def _cb_h(cells, u, v):
    """P(U <= u | V = v) for cell masses ``cells[i_u, j_v]``."""
    shape = np.broadcast(u, v).shape
    u, v = np.broadcast_to(u, shape).ravel(), np.broadcast_to(v, shape).ravel()
    m = cells.shape[0]
    j = _cb_index(v, m)
    col = cells[:, j] * m  # conditional bin masses, sum to 1 per column
    cum = np.vstack([np.zeros(col.shape[1:]), np.cumsum(col, axis=0)])
    i = _cb_index(u, m)
    frac = u * m - i
    idx = np.arange(u.size)
    return (cum[i, idx] + col[i, idx] * frac).reshape(shape)


def _cb_hinv(cells, q, v):
    shape = np.broadcast(q, v).shape
    q, v = np.broadcast_to(q, shape).ravel(), np.broadcast_to(v, shape).ravel()
    m = cells.shape[0]
    j = _cb_index(v, m)
    col = cells[:, j] * m
    cum = np.cumsum(col, axis=0)
    i = np.minimum((cum < q[None, :]).sum(axis=0), m - 1)
    idx = np.arange(q.size)
    start = cum[i, idx] - col[i, idx]
    return clip((i + (q - start) / col[i, idx]) / m).reshape(shape)


def _cb_tau(cells) -> float:
    """Kendall's tau of a checkerboard copula, by quadrature on a fine grid."""
    g = (np.arange(64) + 0.5) / 64
    uu, vv = np.meshgrid(g, g, indexing="ij")
    m = cells.shape[0]
    cdf = np.cumsum(np.cumsum(cells, 0), 1)
    # bilinear copula CDF
    def C(u, v):
        iu, iv = _cb_index(u, m), _cb_index(v, m)
        fu, fv = u * m - iu, v * m - iv
        pad = np.pad(cdf, ((1, 0), (1, 0)))
        c00, c10 = pad[iu, iv], pad[iu + 1, iv]
        c01, c11 = pad[iu, iv + 1], pad[iu + 1, iv + 1]
        return (c00 * (1 - fu) * (1 - fv) + c10 * fu * (1 - fv)
                + c01 * (1 - fu) * fv + c11 * fu * fv)
    dens = m * m * cells[_cb_index(uu, m), _cb_index(vv, m)]
    return float(4 * np.mean(C(uu, vv) * dens) - 1)


def fit_checkerboard(u, v, bins: int = CHECKERBOARD_BINS, pseudo_count: float = 0.5) -> np.ndarray:
    """Doubly-stochastic cell masses from a smoothed rank histogram (Sinkhorn balancing)."""
    counts, _, _ = np.histogram2d(u, v, bins=bins, range=[[0, 1], [0, 1]])
    p = counts + pseudo_count
    for _ in range(500):
        p /= p.sum(axis=1, keepdims=True) * bins
        p /= p.sum(axis=0, keepdims=True) * bins
        if np.allclose(p.sum(axis=1), 1.0 / bins, rtol=0, atol=1e-14):
            break
    return p


# -- fitting ----------------------------------------------------------------

def _candidates(tau: float, families):
    out = []
    for name in families:
        if name in ("independence", "checkerboard"):
            continue
        fam = FAMILIES[name]
        if fam.rotations == (0,):
            out.append((name, 0))
        else:
            rots = (0, 180) if tau >= 0 else (90, 270)
            out.extend((name, r) for r in rots)
    return out


def _param_window(fam, t0: float, width: float = 0.2):
    """Parameter interval matching Kendall's tau within ``width`` of ``t0``."""
    blo, bhi = fam.bounds[0]
    if fam.name in ("clayton", "gumbel"):
        t_lo, t_hi = max(t0 - width, 1e-4), t0 + width
    elif fam.name == "frank":
        t_lo, t_hi = (max(t0 - width, 1e-4), t0 + width) if t0 >= 0 else (t0 - width, min(t0 + width, -1e-4))
    else:
        t_lo, t_hi = t0 - width, t0 + width
    lo = blo if t_lo <= -0.95 else max(blo, fam.tau_to_par(t_lo)[0])
    hi = bhi if t_hi >= 0.95 else min(bhi, fam.tau_to_par(t_hi)[0])
    return lo, hi


def _fit_one(name, rotation, u, v, tau):
    fam = FAMILIES[name]
    if name == "student_t":
        best = None
        for nu in fam.nu_grid:
            x, y = stats.t.ppf(u, nu), stats.t.ppf(v, nu)

            def nll(rho, nu=nu, x=x, y=y):
                return -np.sum(fam.logpdf_quantiles(x, y, rho, nu))
            rho0 = fam.tau_to_par(tau)[0]
            res = optimize.minimize_scalar(nll, bounds=fam.bounds[0], method="bounded",
                                           options={"xatol": 1e-6})
            rho = res.x if res.fun <= nll(rho0) else rho0
            ll = -nll(rho)
            if best is None or ll > best[1]:
                best = ((rho, nu), ll)
        return best

    t0 = abs(tau) if rotation in (90, 270) else tau
    par0 = fam.tau_to_par(t0)[0]

    def nll(th):
        return -np.sum(BivariateCopula(name, rotation, (th,)).logpdf(u, v))

    lo, hi = _param_window(fam, t0)
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    th = res.x if res.fun <= nll(par0) else par0
    return (th,), -nll(th)


def fit_bivariate(u, v, families=None, alpha: float = 0.05, checkerboard: bool = True) -> BivariateCopula:
    """Select and fit a pair copula by AIC.

    Independence is returned outright when Kendall's tau is not
    significant at level ``alpha``. Parametric candidates start from tau
    inversion and are refined by maximum likelihood; the checkerboard copula
    competes on AIC when ``checkerboard`` is set.
    """
    u, v = clip(u), clip(v)
    if families is None:
        families = ("gaussian", "student_t", "clayton", "gumbel", "frank")
    tau, pval = stats.kendalltau(u, v)
    if not np.isfinite(tau) or not pval < alpha:
        return BivariateCopula("independence", 0, (), 0.0, 0.0)

    best = BivariateCopula("independence", 0, (), 0.0, 0.0)
    for name, rot in _candidates(tau, families):
        par, ll = _fit_one(name, rot, u, v, tau)
        k = FAMILIES[name].n_params
        aic = 2 * k - 2 * ll
        if aic < best.aic:
            best = BivariateCopula(name, rot, par, ll, aic)
    if checkerboard:
        cells = fit_checkerboard(u, v)
        ll = float(np.sum(_cb_logpdf(cells, u, v)))
        aic = 2 * (CHECKERBOARD_BINS - 1) ** 2 - 2 * ll
        if aic < best.aic:
            best = BivariateCopula("checkerboard", 0, tuple(cells.ravel()), ll, aic)
    return best
