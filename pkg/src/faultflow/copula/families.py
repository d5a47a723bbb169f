"""Unrotated bivariate copula families.

Every family here is exchangeable, so a single conditional distribution
``h(a, b) = P(A <= a | B = b)`` and its inverse in ``a`` cover both
directions. Rotations are layered on top in :mod:`.bivariate`.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, optimize, special, stats

EPS = 1e-12


def clip(u):
    return np.clip(np.asarray(u, dtype=float), EPS, 1.0 - EPS)


def invert_monotone(func, p, *args, tol=1e-13, max_iter=200):
    """Vectorized bisection for increasing ``func(x, *args) = p`` on [0, 1]."""
    p = np.asarray(p, dtype=float)
    lo = np.zeros_like(p)
    hi = np.ones_like(p)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = func(mid, *args) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < tol):
            break
    return 0.5 * (lo + hi)


class Family:
    name = ""
    n_params = 1
    bounds: tuple = ()
    rotations = (0,)

    def logpdf(self, u, v, par):
        raise NotImplementedError

    def h(self, a, b, par):
        raise NotImplementedError

    def hinv(self, p, b, par):
        return invert_monotone(lambda x, bb: self.h(x, bb, par), p, b)

    def tau_to_par(self, tau):
        raise NotImplementedError

    def par_to_tau(self, par):
        raise NotImplementedError


class Independence(Family):
    name = "independence"
    n_params = 0

    def logpdf(self, u, v, par):
        return np.zeros(np.broadcast(u, v).shape)

    def h(self, a, b, par):
        return np.broadcast_to(clip(a), np.broadcast(a, b).shape).copy()

    def hinv(self, p, b, par):
        return np.broadcast_to(clip(p), np.broadcast(p, b).shape).copy()

    def tau_to_par(self, tau):
        return ()

    def par_to_tau(self, par):
        return 0.0


class Gaussian(Family):
    name = "gaussian"
    bounds = ((-0.9999, 0.9999),)

    def logpdf(self, u, v, par):
        (rho,) = par
        x, y = stats.norm.ppf(clip(u)), stats.norm.ppf(clip(v))
        r2 = 1.0 - rho * rho
        return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2 * rho * x * y) / (2 * r2)

    def h(self, a, b, par):
        (rho,) = par
        x, y = stats.norm.ppf(clip(a)), stats.norm.ppf(clip(b))
        return stats.norm.cdf((x - rho * y) / np.sqrt(1 - rho * rho))

    def hinv(self, p, b, par):
        (rho,) = par
        q, y = stats.norm.ppf(clip(p)), stats.norm.ppf(clip(b))
        return stats.norm.cdf(q * np.sqrt(1 - rho * rho) + rho * y)

    def tau_to_par(self, tau):
        return (float(np.clip(np.sin(np.pi * tau / 2), *self.bounds[0])),)

    def par_to_tau(self, par):
        return 2.0 / np.pi * np.arcsin(par[0])


class StudentT(Family):
    name = "student_t"
    n_params = 2
    bounds = ((-0.9999, 0.9999), (2.0, 50.0))
    nu_grid = (2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 30.0)

    def logpdf(self, u, v, par):
        rho, nu = par
        return self.logpdf_quantiles(stats.t.ppf(clip(u), nu), stats.t.ppf(clip(v), nu), rho, nu)

    @staticmethod
    def logpdf_quantiles(x, y, rho, nu):
        """Log density from t quantiles; lets a fit reuse ``t.ppf`` across ``rho`` values."""
        r2 = 1.0 - rho * rho
        const = (special.gammaln((nu + 2) / 2) + special.gammaln(nu / 2)
                 - 2 * special.gammaln((nu + 1) / 2) - 0.5 * np.log(r2))
        quad = (x * x + y * y - 2 * rho * x * y) / (nu * r2)
        return (const - (nu + 2) / 2 * np.log1p(quad)
                + (nu + 1) / 2 * (np.log1p(x * x / nu) + np.log1p(y * y / nu)))

    def h(self, a, b, par):
        rho, nu = par
        x, y = stats.t.ppf(clip(a), nu), stats.t.ppf(clip(b), nu)
        scale = np.sqrt((nu + y * y) * (1 - rho * rho) / (nu + 1))
        return stats.t.cdf((x - rho * y) / scale, nu + 1)

    def hinv(self, p, b, par):
        rho, nu = par
        q, y = stats.t.ppf(clip(p), nu + 1), stats.t.ppf(clip(b), nu)
        scale = np.sqrt((nu + y * y) * (1 - rho * rho) / (nu + 1))
        return stats.t.cdf(q * scale + rho * y, nu)

    def tau_to_par(self, tau):
        return (float(np.clip(np.sin(np.pi * tau / 2), *self.bounds[0])), 6.0)

    def par_to_tau(self, par):
        return 2.0 / np.pi * np.arcsin(par[0])


def _log_sum_minus_one(a, b):
    """log(e^a + e^b - 1) for a, b >= 0 without overflow."""
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


class Clayton(Family):
    name = "clayton"
    bounds = ((1e-4, 200.0),)
    rotations = (0, 90, 180, 270)

    def logpdf(self, u, v, par):
        (th,) = par
        lu, lv = np.log(clip(u)), np.log(clip(v))
        ls = _log_sum_minus_one(-th * lu, -th * lv)
        return np.log1p(th) + (-th - 1) * (lu + lv) + (-2 - 1 / th) * ls

    def h(self, a, b, par):
        (th,) = par
        la, lb = np.log(clip(a)), np.log(clip(b))
        ls = _log_sum_minus_one(-th * la, -th * lb)
        return np.exp((-th - 1) * lb + (-1 - 1 / th) * ls)

    def hinv(self, p, b, par):
        (th,) = par
        lp, lb = np.log(clip(p)), np.log(clip(b))
        e = np.expm1(-th / (1 + th) * lp)  # >= 0
        with np.errstate(divide="ignore"):
            z = -th * lb + np.log(e)
        return clip(np.exp(-np.logaddexp(0.0, z) / th))

    def tau_to_par(self, tau):
        tau = float(np.clip(abs(tau), 1e-4, 0.995))
        return (float(np.clip(2 * tau / (1 - tau), *self.bounds[0])),)

    def par_to_tau(self, par):
        return par[0] / (par[0] + 2)


class Gumbel(Family):
    name = "gumbel"
    bounds = ((1.0, 200.0),)
    rotations = (0, 90, 180, 270)

    @staticmethod
    def _parts(a, b, th):
        x, y = -np.log(clip(a)), -np.log(clip(b))
        lx, ly = np.log(x), np.log(y)
        la = np.logaddexp(th * lx, th * ly)  # log A
        return x, y, lx, ly, la

    def logpdf(self, u, v, par):
        (th,) = par
        x, y, lx, ly, la = self._parts(u, v, th)
        a1 = np.exp(la / th)
        return (-a1 + x + y + (th - 1) * (lx + ly) + (2 / th - 2) * la
                + np.log1p((th - 1) * np.exp(-la / th)))

    def h(self, a, b, par):
        (th,) = par
        x, y, lx, ly, la = self._parts(a, b, th)
        return np.exp(-np.exp(la / th) + y + (th - 1) * ly + (1 / th - 1) * la)

    def tau_to_par(self, tau):
        tau = float(np.clip(abs(tau), 0.0, 0.995))
        return (float(np.clip(1 / (1 - tau), *self.bounds[0])),)

    def par_to_tau(self, par):
        return 1 - 1 / par[0]


def _debye1(theta):
    if theta == 0:
        return 1.0
    val = integrate.quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0, abs(theta))[0] / abs(theta)
    return val if theta > 0 else val + abs(theta) / 2


class Frank(Family):
    name = "frank"
    bounds = ((-200.0, 200.0),)

    def logpdf(self, u, v, par):
        (th,) = par
        u, v = clip(u), clip(v)
        if abs(th) < 1e-8:
            return np.zeros(np.broadcast(u, v).shape)
        if th < 0:
            # c_{-t}(u, v) = c_t(1 - u, v)
            u, th = 1 - u, -th
        # denominator split into two positive terms to avoid cancellation
        log_den = np.logaddexp(-th * u + np.log(-np.expm1(-th * v)),
                               -th * v + np.log(-np.expm1(-th * (1 - v))))
        return np.log(th) + np.log(-np.expm1(-th)) - th * (u + v) - 2 * log_den

    def h(self, a, b, par):
        (th,) = par
        a, b = clip(a), clip(b)
        if abs(th) < 1e-8:
            return a
        ea, eb, d = np.expm1(-th * a), np.expm1(-th * b), np.expm1(-th)
        return np.exp(-th * b) * ea / (d + ea * eb)

    def hinv(self, p, b, par):
        (th,) = par
        p, b = clip(p), clip(b)
        if abs(th) < 1e-8:
            return p
        eb, d = np.expm1(-th * b), np.expm1(-th)
        a = p * d / (np.exp(-th * b) - p * eb)
        return clip(-np.log1p(a) / th)

    def par_to_tau(self, par):
        (th,) = par
        if abs(th) < 1e-8:
            return 0.0
        return 1 - 4 / th * (1 - _debye1(th))

    def tau_to_par(self, tau):
        tau = float(np.clip(tau, -0.95, 0.95))
        if abs(tau) < 1e-6:
            return (1e-6,)
        lo, hi = (1e-6, 200.0) if tau > 0 else (-200.0, -1e-6)
        return (optimize.brentq(lambda t: self.par_to_tau((t,)) - tau, lo, hi),)


FAMILIES: dict[str, Family] = {
    f.name: f for f in (Independence(), Gaussian(), StudentT(), Clayton(), Gumbel(), Frank())
}
