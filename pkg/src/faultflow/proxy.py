"""Few-cell two-phase (CO2/brine) leakage simulator.

A vertical stack of reservoir layers is coupled to a Top aquifer through a
fault cell carrying the upscaled fault flow functions and to a Troll aquifer
through a cross-fault connection. Each layer also drains laterally to a
constant-pressure far field. Fluxes use two-point transmissibilities with
upstream mobility; time stepping is backward Euler with Newton iterations.

Cells whose state is held fixed (far field, and aquifers whose pore volume is
too large to resolve a state change in double precision) act as boundary
conditions. The fault cell is the first cell of the Top aquifer, so gas
entering it from the uppermost layer is booked as leaked; gas reaching the far
field counts as migrated within the formation and stays in the stored total.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .upscaling import FlowFunctionSample

MD_TO_M2 = 9.869233e-16
GRAVITY = 9.80665
SECONDS_PER_DAY = 86400.0
DAYS_PER_YEAR = 365.25
FIXED_PV_FACTOR = 1e6  # aquifers with a larger porosity multiplier are held at constant state


class AquiferAssumptionWarning(UserWarning):
    """The fault-side transmissibility is not small against the aquifer side."""


class SimulationError(RuntimeError):
    pass


# -- transmissibilities (mD*m) ---------------------------------------------

def transmissibility(k_a, k_b, area, d_a, d_b) -> float:
    """Series combination of the two one-sided transmissibilities ``k * A / d``."""
    if min(area, d_a, d_b) <= 0 or min(k_a, k_b) < 0:
        raise ValueError("areas and distances must be positive, permeabilities non-negative")
    t_a, t_b = k_a * area / d_a, k_b * area / d_b
    if t_a == 0 or t_b == 0:
        return 0.0
    return t_a * t_b / (t_a + t_b)


def aquifer_transmissibility(t_r, k_f, area_f, length_f, aquifer_side: float | None = None,
                             ratio: float = 0.1) -> float:
    """Reservoir-to-aquifer connection through a fault of permeability ``k_f``.

    The aquifer side is represented by ``2 k_f A_f / L_f``. When
    ``aquifer_side`` (the aquifer's own ``k A / L``) is given and the fault
    term is not at most ``ratio`` times it, an :class:`AquiferAssumptionWarning`
    is emitted.
    """
    if t_r < 0 or k_f < 0 or area_f <= 0 or length_f <= 0:
        raise ValueError("invalid aquifer connection parameters")
    t_aq = 2.0 * k_f * area_f / length_f
    if aquifer_side is not None and k_f * area_f / length_f > ratio * aquifer_side:
        warnings.warn("fault transmissibility is not small compared to the aquifer side",
                      AquiferAssumptionWarning, stacklevel=2)
    if t_r == 0 or t_aq == 0:
        return 0.0
    if math.isinf(t_r):
        return t_aq
    return t_r * t_aq / (t_r + t_aq)


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class FluidProps:
    rho_gas: float = 700.0  # kg/m3 at p_ref
    rho_brine: float = 1000.0
    mu_gas: float = 0.06e-3  # Pa s
    mu_brine: float = 0.8e-3
    c_gas: float = 5e-9  # 1/Pa
    c_brine: float = 4.5e-10
    p_ref: float = 1.0e7  # Pa


@dataclass(frozen=True)
class ProxyConfig:
    layer_perms: tuple = (1000.0, 50.0, 1000.0, 50.0, 850.0, 25.0)  # mD, horizontal
    layer_thickness: tuple = (40.0, 15.0, 40.0, 15.0, 40.0, 20.0)  # m
    layer_porosity: tuple = (0.25, 0.15, 0.25, 0.15, 0.25, 0.15)
    vertical_ratio: float = 0.1
    cell_dx: float = 400.0
    cell_dy: float = 400.0
    reservoir_top: float = 1200.0  # m depth
    injection_layer: int = 4
    injection_rate: float = 1.6  # Mt/yr
    duration: float = 59.0  # years
    timestep: float = 182.625  # days
    lateral_distance: float = 2000.0  # m, layer centre to far-field boundary
    lateral_width: float = 1600.0  # m, perimeter open to the far field
    fault_area: float = 40.0  # m2
    fault_half_length: float = 250.0  # m
    fault_porosity: float = 0.1
    top_porosity_factor: float = 1e12
    troll_area: float = 40.0
    troll_half_length: float = 250.0
    troll_depth: float = 1100.0
    troll_pressure: float = 110.0  # bar
    troll_porosity_factor: float = 1e12
    aquifer_perm: float = 1000.0  # mD, used only for the assumption check
    p_entry_res: float = 2.5  # kPa
    bc_exponent_res: float = 0.67
    fluid: FluidProps = field(default_factory=FluidProps)
    newton_tol: float = 1e-8
    max_newton: int = 30
    min_timestep: float = 1e-4  # days

    def __post_init__(self):
        if len(self.layer_perms) != len(self.layer_thickness) or len(self.layer_perms) != len(self.layer_porosity):
            raise ValueError("layer_perms, layer_thickness and layer_porosity must have equal length")
        if any(k < 0 for k in self.layer_perms):
            raise ValueError("layer permeabilities must be non-negative")
        positive = (self.cell_dx, self.cell_dy, self.fault_area, self.fault_half_length, self.troll_area,
                    self.troll_half_length, self.duration, self.timestep, self.lateral_distance,
                    self.lateral_width, *self.layer_thickness, *self.layer_porosity)
        if any(not v > 0 for v in positive):
            raise ValueError("areas, lengths, porosities, duration and timestep must be positive")
        if self.injection_rate < 0:
            raise ValueError("injection rate must be non-negative")
        if not 0 <= self.injection_layer < len(self.layer_perms):
            raise ValueError("injection layer out of range")

    def replace(self, **kw) -> "ProxyConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProxyConfig":
        d = dict(d)
        fluid = FluidProps(**d.pop("fluid", {}))
        for k in ("layer_perms", "layer_thickness", "layer_porosity"):
            if k in d:
                d[k] = tuple(float(x) for x in d[k])
        return cls(fluid=fluid, **d)

    @classmethod
    def from_json(cls, path) -> "ProxyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SimResult:
    times: np.ndarray  # days
    leaked_top: np.ndarray  # t, cumulative, reservoir into the fault cell of the Top aquifer
    leaked_troll: np.ndarray
    stored: np.ndarray  # t, in the reservoir layers or migrated laterally
    injected: np.ndarray
    pressure: np.ndarray  # bar, (n_times, n_cells)
    saturation: np.ndarray  # brine saturation, (n_times, n_cells)
    cell_names: tuple
    flags: tuple = ()
    solver_stats: dict = field(default_factory=dict)

    @property
    def leaked_total(self) -> np.ndarray:
        return self.leaked_top + self.leaked_troll

    @property
    def mass_balance_error(self) -> np.ndarray:
        """Relative gap |injected - stored - leaked| / injected (0 when nothing injected)."""
        gap = np.abs(self.injected - self.stored - self.leaked_total)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(self.injected > 0, gap / np.where(self.injected > 0, self.injected, 1.0), gap)
        return rel

    def summary(self) -> dict:
        return {
            "schema_version": 1,
            "leaked_top_t": float(self.leaked_top[-1]),
            "leaked_troll_t": float(self.leaked_troll[-1]),
            "stored_t": float(self.stored[-1]),
            "injected_t": float(self.injected[-1]),
            "max_mass_balance_error": float(self.mass_balance_error.max()),
            "flags": list(self.flags),
        }

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_days", "leaked_top_t", "leaked_troll_t", "stored_t", "injected_t"]
                       + [f"p_{n}_bar" for n in self.cell_names] + [f"sw_{n}" for n in self.cell_names])
            for k in range(self.times.size):
                w.writerow([repr(float(v)) for v in (self.times[k], self.leaked_top[k], self.leaked_troll[k],
                                                     self.stored[k], self.injected[k])]
                           + [repr(float(v)) for v in self.pressure[k]]
                           + [repr(float(v)) for v in self.saturation[k]])
        path.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2))


# -- fault saturation tables -----------------------------------------------

def fault_saturation_table(ff: FlowFunctionSample):
    """Re-index tabulated flow functions by saturation.

    Returns ascending unique saturations with log-Pc (Pa), Krw and Krnw;
    entries sharing a saturation are averaged.
    """
    s = np.asarray(ff.sat, dtype=float)
    order = np.argsort(s, kind="stable")
    s = s[order]
    lpc = np.log(np.asarray(ff.pc, dtype=float)[order] * 1e3)
    krw = np.asarray(ff.krw, dtype=float)[order]
    krnw = np.asarray(ff.krnw, dtype=float)[order]
    uniq, inv = np.unique(s, return_inverse=True)
    counts = np.bincount(inv)
    avg = lambda a: np.bincount(inv, weights=a) / counts  # noqa: E731
    return uniq, avg(lpc), avg(krw), avg(krnw)


# -- numerical core --------------------------------------------------------
# fl layout: rho_w0, rho_g0, mu_w, mu_g, c_w, c_g, p_ref, g
# props layout per cell: pc, krw, krnw, rho_w, rho_g


@numba.njit(cache=True, nogil=True)
def _satfun(kind, sw, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab):
    s = min(max(sw, 0.0), 1.0)
    if kind == 0:
        krw = s ** (3.0 + 2.0 * n)
        krnw = (1.0 - s) ** 2 * (1.0 - s ** (1.0 + 2.0 * n))
        s_reg = 0.01
        if s >= s_reg:
            pc = pe * s ** (-n)
        else:
            pc = pe * s_reg ** (-n) * (1.0 - n * (s - s_reg) / s_reg)
        return pc, krw, krnw
    m = s_tab.size
    if s <= s_tab[0] or m == 1:
        return math.exp(lpc_tab[0]), krw_tab[0], krnw_tab[0]
    if s >= s_tab[m - 1]:
        return math.exp(lpc_tab[m - 1]), krw_tab[m - 1], krnw_tab[m - 1]
    k = np.searchsorted(s_tab, s) - 1
    w = (s - s_tab[k]) / (s_tab[k + 1] - s_tab[k])
    pc = math.exp(lpc_tab[k] + w * (lpc_tab[k + 1] - lpc_tab[k]))
    return pc, krw_tab[k] + w * (krw_tab[k + 1] - krw_tab[k]), krnw_tab[k] + w * (krnw_tab[k + 1] - krnw_tab[k])


@numba.njit(cache=True, nogil=True)
def _props(i, p, sw, kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, out):
    pc, krw, krnw = _satfun(kind[i], sw, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab)
    out[0] = pc
    out[1] = krw
    out[2] = krnw
    out[3] = fl[0] * math.exp(fl[4] * (p - fl[6]))
    out[4] = fl[1] * math.exp(fl[5] * (p + pc - fl[6]))


@numba.njit(cache=True, nogil=True)
def _flux(t, pi, pj, a, b, dz, fl):
    """Mass fluxes (brine, gas) from cell i to cell j given their property rows."""
    dphi = (pi - pj) - 0.5 * (a[3] + b[3]) * fl[7] * dz
    if dphi >= 0:
        fw = t * a[3] * a[1] / fl[2] * dphi
    else:
        fw = t * b[3] * b[1] / fl[2] * dphi
    dphi = (pi + a[0] - pj - b[0]) - 0.5 * (a[4] + b[4]) * fl[7] * dz
    if dphi >= 0:
        fg = t * a[4] * a[2] / fl[3] * dphi
    else:
        fg = t * b[4] * b[2] / fl[3] * dphi
    return fw, fg


@numba.njit(cache=True, nogil=True)
def _accum(pv, p, sw, p_old, sw_old, pc, pc_old, fl):
    """Brine and gas mass change, written to stay accurate for tiny changes."""
    rw_old = fl[0] * math.exp(fl[4] * (p_old - fl[6]))
    dmw = pv * rw_old * (sw * math.expm1(fl[4] * (p - p_old)) + (sw - sw_old))
    pg, pg_old = p + pc, p_old + pc_old
    rg_old = fl[1] * math.exp(fl[5] * (pg_old - fl[6]))
    dmg = pv * rg_old * ((1.0 - sw) * math.expm1(fl[5] * (pg - pg_old)) + (sw_old - sw))
    return dmw, dmg


@numba.njit(cache=True, nogil=True)
def _assemble(x, dyn, slot, adj_ptr, adj_conn, p, sw, p_old, sw_old, pc_old, pv, z, kind, ci, cj, trans, fl, pe, n,
              s_tab, lpc_tab, krw_tab, krnw_tab, q_gas, dt, props, fw, fg, r, jac, with_jac):
    """Scaled residual ``r`` and, if requested, its finite-difference Jacobian.

    Residual rows are divided by the cell's pore volume times the reference
    density, so they read as saturation-equivalent mass errors per step.
    """
    nd = dyn.size
    for k in range(nd):
        p[dyn[k]] = x[2 * k]
        sw[dyn[k]] = x[2 * k + 1]
    nc = p.size
    for i in range(nc):
        _props(i, p[i], sw[i], kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, props[i])
    for k in range(nd):
        i = dyn[k]
        dmw, dmg = _accum(pv[i], p[i], sw[i], p_old[i], sw_old[i], props[i, 0], pc_old[i], fl)
        r[2 * k] = dmw / dt
        r[2 * k + 1] = dmg / dt - q_gas[i]
    for c in range(ci.size):
        i, j = ci[c], cj[c]
        fw[c], fg[c] = _flux(trans[c], p[i], p[j], props[i], props[j], z[i] - z[j], fl)
        a, b = slot[i], slot[j]
        if a >= 0:
            r[2 * a] += fw[c]
            r[2 * a + 1] += fg[c]
        if b >= 0:
            r[2 * b] -= fw[c]
            r[2 * b + 1] -= fg[c]
    if with_jac:
        jac[:, :] = 0.0
        pert = np.empty(5)
        for k in range(nd):
            i = dyn[k]
            # unscaled accumulation part of this cell's rows
            base_w, base_g = r[2 * k], r[2 * k + 1]
            for e in range(adj_ptr[i], adj_ptr[i + 1]):
                c = adj_conn[e]
                sign = 1.0 if ci[c] == i else -1.0
                base_w -= sign * fw[c]
                base_g -= sign * fg[c]
            for v in range(2):
                col = 2 * k + v
                pi, si = p[i], sw[i]
                if v == 0:
                    h = 1.0 + 1e-8 * abs(pi)
                    pi += h
                else:
                    h = 1e-7 if si + 1e-7 <= 1.0 else -1e-7
                    si += h
                _props(i, pi, si, kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, pert)
                dmw, dmg = _accum(pv[i], pi, si, p_old[i], sw_old[i], pert[0], pc_old[i], fl)
                jac[2 * k, col] += (dmw / dt - base_w) / h
                jac[2 * k + 1, col] += (dmg / dt - q_gas[i] - base_g) / h
                for e in range(adj_ptr[i], adj_ptr[i + 1]):
                    c = adj_conn[e]
                    a_cell, b_cell = ci[c], cj[c]
                    if a_cell == i:
                        w2, g2 = _flux(trans[c], pi, p[b_cell], pert, props[b_cell], z[a_cell] - z[b_cell], fl)
                    else:
                        w2, g2 = _flux(trans[c], p[a_cell], pi, props[a_cell], pert, z[a_cell] - z[b_cell], fl)
                    dw, dg = (w2 - fw[c]) / h, (g2 - fg[c]) / h
                    a, b = slot[a_cell], slot[b_cell]
                    if a >= 0:
                        jac[2 * a, col] += dw
                        jac[2 * a + 1, col] += dg
                    if b >= 0:
                        jac[2 * b, col] -= dw
                        jac[2 * b + 1, col] -= dg
    for k in range(nd):
        i = dyn[k]
        sw_scale = dt / (pv[i] * fl[0])
        sg_scale = dt / (pv[i] * fl[1])
        r[2 * k] *= sw_scale
        r[2 * k + 1] *= sg_scale
        if with_jac:
            for col in range(2 * nd):
                jac[2 * k, col] *= sw_scale
                jac[2 * k + 1, col] *= sg_scale


@numba.njit(cache=True, nogil=True)
def _newton(x, dyn, slot, adj_ptr, adj_conn, p, sw, p_old, sw_old, pc_old, pv, z, kind, ci, cj, trans, fl, pe, n,
            s_tab, lpc_tab, krw_tab, krnw_tab, q_gas, dt, tol, max_iter):
    m = x.size
    nc = p.size
    props = np.empty((nc, 5))
    fw = np.empty(ci.size)
    fg = np.empty(ci.size)
    r = np.empty(m)
    jac = np.empty((m, m))
    for it in range(max_iter + 1):
        _assemble(x, dyn, slot, adj_ptr, adj_conn, p, sw, p_old, sw_old, pc_old, pv, z, kind, ci, cj, trans, fl, pe, n,
                  s_tab, lpc_tab, krw_tab, krnw_tab, q_gas, dt, props, fw, fg, r, jac, it < max_iter)
        err = 0.0
        for k in range(m):
            if not np.isfinite(r[k]):
                return False, it
            err = max(err, abs(r[k]))
        if err < tol:
            return True, it
        if it == max_iter:
            break
        dx = np.linalg.solve(jac, -r)
        for k in range(m):
            if not np.isfinite(dx[k]):
                return False, it
        for k in range(m):
            if k % 2 == 1:
                x[k] = min(max(x[k] + min(max(dx[k], -0.2), 0.2), 0.0), 1.0)
            else:
                x[k] += dx[k]
    return False, max_iter


@numba.njit(cache=True, nogil=True)
def _run(p0, sw0, dyn, pv, z, kind, ci, cj, trans, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab,
         q_gas, dt_nom, t_end, tol, max_iter, dt_min):
    """Integrate to ``t_end``.

    Returns status, report times, pressures, saturations, cumulative gas flow
    per connection, gas mass per cell, and solver counters.
    """
    nc = p0.size
    slot = np.full(nc, -1, np.int64)
    for k in range(dyn.size):
        slot[dyn[k]] = k
    # connections touching each cell, CSR layout
    adj_ptr = np.zeros(nc + 1, np.int64)
    for c in range(ci.size):
        adj_ptr[ci[c] + 1] += 1
        adj_ptr[cj[c] + 1] += 1
    for i in range(nc):
        adj_ptr[i + 1] += adj_ptr[i]
    adj_conn = np.empty(2 * ci.size, np.int64)
    fill = adj_ptr[:-1].copy()
    for c in range(ci.size):
        adj_conn[fill[ci[c]]] = c
        fill[ci[c]] += 1
        adj_conn[fill[cj[c]]] = c
        fill[cj[c]] += 1
    n_rep = int(math.ceil(t_end / dt_nom - 1e-9))
    times = np.zeros(n_rep + 1)
    pres = np.zeros((n_rep + 1, nc))
    sats = np.zeros((n_rep + 1, nc))
    cum = np.zeros((n_rep + 1, ci.size))
    gmass = np.zeros((n_rep + 1, nc))
    stats = np.zeros(3, np.int64)  # accepted steps, Newton iterations, timestep cuts
    pres[0] = p0
    sats[0] = sw0
    p, sw = p0.copy(), sw0.copy()
    p_old, sw_old = p0.copy(), sw0.copy()
    pc_old = np.empty(nc)
    props = np.empty(5)
    x = np.empty(2 * dyn.size)
    acc = np.zeros(ci.size)
    t = 0.0
    dt = dt_nom
    for rep in range(1, n_rep + 1):
        t_target = min(rep * dt_nom, t_end)
        while t < t_target - 1e-9 * dt_nom:
            step = min(dt, t_target - t)
            for i in range(nc):
                pc_old[i] = _satfun(kind[i], sw_old[i], pe, n, s_tab, lpc_tab, krw_tab, krnw_tab)[0]
            for k in range(dyn.size):
                x[2 * k] = p_old[dyn[k]]
                x[2 * k + 1] = sw_old[dyn[k]]
            ok, its = _newton(x, dyn, slot, adj_ptr, adj_conn, p, sw, p_old, sw_old, pc_old, pv, z, kind, ci, cj, trans, fl,
                              pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, q_gas, step, tol, max_iter)
            stats[1] += its
            if not ok:
                stats[2] += 1
                dt = step * 0.5
                if dt < dt_min:
                    return 1, times, pres, sats, cum, gmass, stats
                p[:] = p_old
                sw[:] = sw_old
                continue
            for k in range(dyn.size):
                p[dyn[k]] = x[2 * k]
                sw[dyn[k]] = x[2 * k + 1]
            pa = np.empty(5)
            for c in range(ci.size):
                i, j = ci[c], cj[c]
                _props(i, p[i], sw[i], kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, pa)
                _props(j, p[j], sw[j], kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, props)
                acc[c] += _flux(trans[c], p[i], p[j], pa, props, z[i] - z[j], fl)[1] * step
            p_old[:] = p
            sw_old[:] = sw
            t += step
            stats[0] += 1
            dt = min(dt * 2.0, dt_nom)
        times[rep] = t
        pres[rep] = p
        sats[rep] = sw
        cum[rep] = acc
    for rep in range(n_rep + 1):
        for k in range(dyn.size):
            i = dyn[k]
            _props(i, pres[rep, i], sats[rep, i], kind, fl, pe, n, s_tab, lpc_tab, krw_tab, krnw_tab, props)
            gmass[rep, i] = pv[i] * (1.0 - sats[rep, i]) * props[4]
    return 0, times, pres, sats, cum, gmass, stats


# -- model assembly --------------------------------------------------------

@dataclass(frozen=True)
class _Model:
    names: tuple
    z: np.ndarray
    pv: np.ndarray
    kind: np.ndarray
    dynamic: np.ndarray  # bool
    ci: np.ndarray
    cj: np.ndarray
    trans: np.ndarray  # m3
    roles: tuple  # per connection: "internal", "lateral", "top", "aquifer", "troll"
    inj_cell: int
    fault_cell: int
    top_cell: int
    troll_cell: int
    flags: tuple


def _build_model(cfg: ProxyConfig, k_fault: float, k_troll: float) -> _Model:
    n_l = len(cfg.layer_perms)
    area = cfg.cell_dx * cfg.cell_dy
    tops = cfg.reservoir_top + np.concatenate([[0.0], np.cumsum(cfg.layer_thickness)[:-1]])
    z_layers = tops + 0.5 * np.asarray(cfg.layer_thickness)
    names, z, pv, kind, dyn = [], [], [], [], []
    for i in range(n_l):
        names.append(f"layer{i + 1}")
        z.append(z_layers[i])
        pv.append(area * cfg.layer_thickness[i] * cfg.layer_porosity[i])
        kind.append(0)
        dyn.append(True)
    fault = len(names)
    names.append("fault")
    z.append(cfg.reservoir_top - cfg.fault_half_length)
    pv.append(cfg.fault_area * 2 * cfg.fault_half_length * cfg.fault_porosity)
    kind.append(1)
    dyn.append(True)
    top = len(names)
    names.append("top_aquifer")
    z.append(cfg.reservoir_top - 2 * cfg.fault_half_length)
    pv.append(cfg.fault_area * 2 * cfg.fault_half_length * cfg.top_porosity_factor)
    kind.append(1)
    dyn.append(cfg.top_porosity_factor < FIXED_PV_FACTOR)
    troll = len(names)
    names.append("troll")
    z.append(cfg.troll_depth)
    pv.append(cfg.troll_area * 2 * cfg.troll_half_length * cfg.troll_porosity_factor)
    kind.append(0)
    dyn.append(cfg.troll_porosity_factor < FIXED_PV_FACTOR)
    far = []
    for i in range(n_l):
        far.append(len(names))
        names.append(f"farfield{i + 1}")
        z.append(z_layers[i])
        pv.append(1.0)
        kind.append(0)
        dyn.append(False)

    flags = []
    ci, cj, tr, roles = [], [], [], []
    kh = np.asarray(cfg.layer_perms, dtype=float)
    kv = kh * cfg.vertical_ratio
    h = np.asarray(cfg.layer_thickness, dtype=float)
    for i in range(n_l - 1):
        ci.append(i)
        cj.append(i + 1)
        tr.append(transmissibility(kv[i], kv[i + 1], area, h[i] / 2, h[i + 1] / 2))
        roles.append("internal")
    for i in range(n_l):
        ci.append(i)
        cj.append(far[i])
        tr.append(transmissibility(kh[i], kh[i], cfg.lateral_width * h[i], cfg.cell_dx / 2, cfg.lateral_distance))
        roles.append("lateral")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AquiferAssumptionWarning)
        t_r = kh[0] * cfg.fault_area / (cfg.cell_dx / 2)
        ci.append(0)
        cj.append(fault)
        tr.append(aquifer_transmissibility(t_r, k_fault, cfg.fault_area, cfg.fault_half_length))
        roles.append("top")
        side = cfg.aquifer_perm * area / cfg.fault_half_length
        ci.append(fault)
        cj.append(top)
        tr.append(aquifer_transmissibility(math.inf, k_fault, cfg.fault_area, cfg.fault_half_length, side)
                  if k_fault > 0 else 0.0)
        roles.append("aquifer")
        t_r6 = kh[-1] * cfg.troll_area / (cfg.cell_dx / 2)
        side = cfg.aquifer_perm * cfg.troll_area / cfg.troll_half_length
        ci.append(n_l - 1)
        cj.append(troll)
        tr.append(aquifer_transmissibility(t_r6, k_troll, cfg.troll_area, cfg.troll_half_length, side))
        roles.append("troll")
    for w in caught:
        if issubclass(w.category, AquiferAssumptionWarning):
            flags.append("aquifer_assumption_violated")
    if not dyn[top]:
        flags.append("top_aquifer_fixed_state")
    if not dyn[troll]:
        flags.append("troll_aquifer_fixed_state")
    return _Model(tuple(names), np.asarray(z), np.asarray(pv), np.asarray(kind, dtype=np.int64),
                  np.asarray(dyn), np.asarray(ci, dtype=np.int64), np.asarray(cj, dtype=np.int64),
                  np.asarray(tr) * MD_TO_M2, tuple(roles), cfg.injection_layer, fault, top, troll,
                  tuple(sorted(set(flags))))


def _hydrostatic(model: _Model, cfg: ProxyConfig) -> np.ndarray:
    """Brine pressures in discrete equilibrium, anchored at the Troll cell."""
    fl = cfg.fluid
    nc = len(model.names)
    adj = {i: [] for i in range(nc)}
    for a, b in zip(model.ci, model.cj):
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    p = np.full(nc, np.nan)
    p[model.troll_cell] = cfg.troll_pressure * 1e5
    queue = [model.troll_cell]
    rho = lambda x: fl.rho_brine * math.exp(fl.c_brine * (x - fl.p_ref))  # noqa: E731
    while queue:
        i = queue.pop(0)
        for j in adj[i]:
            if not np.isnan(p[j]):
                continue
            dz = model.z[j] - model.z[i]
            pj = p[i] + rho(p[i]) * GRAVITY * dz
            for _ in range(50):
                new = p[i] + 0.5 * (rho(p[i]) + rho(pj)) * GRAVITY * dz
                if new == pj:
                    break
                pj = new
            p[j] = pj
            queue.append(j)
    if np.any(np.isnan(p)):
        raise SimulationError("disconnected cell in proxy model")
    return p


def _fluid_vector(fl: FluidProps) -> np.ndarray:
    return np.array([fl.rho_brine, fl.rho_gas, fl.mu_brine, fl.mu_gas, fl.c_brine, fl.c_gas, fl.p_ref, GRAVITY])


def simulate(cfg: ProxyConfig, fault_flow: FlowFunctionSample, k_troll: float,
             k_fault: float | None = None) -> SimResult:
    """Inject CO2 for ``cfg.duration`` years and report cumulative leakage.

    ``k_fault`` overrides ``fault_flow.k_abs`` when given; the fault
    relative permeabilities and capillary pressure always come from
    ``fault_flow``.
    """
    k_f = float(fault_flow.k_abs if k_fault is None else k_fault)
    if k_f < 0 or k_troll < 0:
        raise ValueError("permeabilities must be non-negative")
    model = _build_model(cfg, k_f, float(k_troll))
    s_tab, lpc_tab, krw_tab, krnw_tab = fault_saturation_table(fault_flow)
    p0 = _hydrostatic(model, cfg)
    sw0 = np.ones(len(model.names))
    q_gas = np.zeros(len(model.names))
    rate = cfg.injection_rate * 1e9 / (DAYS_PER_YEAR * SECONDS_PER_DAY)  # kg/s
    q_gas[model.inj_cell] = rate
    dyn = np.flatnonzero(model.dynamic).astype(np.int64)
    fl = _fluid_vector(cfg.fluid)
    # time integration runs in seconds
    status, times, pres, sats, cum, gas_mass, stats = _run(
        p0, sw0, dyn, model.pv, model.z, model.kind, model.ci, model.cj, model.trans, fl,
        cfg.p_entry_res * 1e3, cfg.bc_exponent_res, s_tab, lpc_tab, krw_tab, krnw_tab, q_gas,
        cfg.timestep * SECONDS_PER_DAY, cfg.duration * DAYS_PER_YEAR * SECONDS_PER_DAY,
        cfg.newton_tol, cfg.max_newton, cfg.min_timestep * SECONDS_PER_DAY)
    if status != 0:
        raise SimulationError(
            f"Newton failed below the minimum timestep (k_fault={k_f:g} mD, k_troll={k_troll:g} mD)")

    roles = np.asarray(model.roles)
    top = cum[:, roles == "top"].sum(axis=1)
    troll = cum[:, roles == "troll"].sum(axis=1)
    lateral = cum[:, roles == "lateral"].sum(axis=1)
    reservoir = list(range(len(cfg.layer_perms)))
    stored = gas_mass[:, reservoir].sum(axis=1) - gas_mass[0, reservoir].sum() + lateral
    injected = rate * times
    t_days = times / SECONDS_PER_DAY
    return SimResult(t_days, top / 1e3, troll / 1e3, stored / 1e3, injected / 1e3,
                     pres / 1e5, sats, model.names, model.flags,
                     {"steps": int(stats[0]), "newton_iterations": int(stats[1]), "timestep_cuts": int(stats[2])})
