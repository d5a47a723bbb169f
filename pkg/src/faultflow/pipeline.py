"""Test-case wiring: unit-cube inputs to proxy leakage, plus study reports.

Component order inside ``u`` is fixed for every case: fault inputs first
(one fault-permeability coordinate or five copula coordinates), then the six
layer permeabilities, then the Troll connection permeability.
"""
from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .copula import VineModel, fit_vine_to_data
from .facies import FaciesModelConfig, LognormalFit, fit_lognormal, lognormal_from_moments, sample_realizations
from .proxy import ProxyConfig, simulate
from .reduced import ReducedModelFit, evaluate_flow_functions, extract_y, fit_reduced_model
from .sampling import EstimatorResult, SpeedupResult, measure_speedup, run_adaptive, run_smc
from .upscaling import FlowFunctionSample, SdGrid, generate_ensemble

SCHEMA_VERSION = 1
CASES = ("I", "II", "III", "IV", "V", "VI")
K_CLAY_SCENARIOS = (1e-4, 1e-3, 1.0)
LAYER_MEANS = (1000.0, 50.0, 1000.0, 50.0, 850.0, 25.0)
LAYER_STD = 100.0
TROLL_TOP, TROLL_BOTTOM = 1500.0, 1600.0
N_HIST_BINS = 40

# (fault component, stochastic layers, stochastic Troll)
_LAYOUT = {
    "I": ("lognormal", False, False),
    "II": ("lognormal", True, False),
    "III": ("copula", False, False),
    "IV": ("copula", False, True),
    "V": ("copula", True, False),
    "VI": ("copula", True, True),
}


class MissingArtifactError(LookupError):
    pass


# -- fitted inputs ----------------------------------------------------------

@dataclass
class CaseArtifacts:
    """Everything fitted from the fine-scale ensembles for one clay scenario."""
    k_clay: float
    fault_lognormal: LognormalFit | None = None
    mean_flow: FlowFunctionSample | None = None
    reduced: ReducedModelFit | None = None
    vine: VineModel | None = None
    troll_lognormal: LognormalFit | None = None
    meta: dict = field(default_factory=dict)

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise MissingArtifactError(f"fitted artifact '{name}' is not available")

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"schema_version": SCHEMA_VERSION, "kind": "CaseArtifacts", "k_clay": self.k_clay,
               "meta": self.meta}
        if self.fault_lognormal is not None:
            doc["fault_lognormal"] = self.fault_lognormal.to_dict()
        if self.troll_lognormal is not None:
            doc["troll_lognormal"] = self.troll_lognormal.to_dict()
        if self.mean_flow is not None:
            ff = self.mean_flow
            doc["mean_flow"] = {"k_abs": ff.k_abs, "pc": list(map(float, ff.pc)), "sat": list(map(float, ff.sat)),
                                "krw": list(map(float, ff.krw)), "krnw": list(map(float, ff.krnw))}
        if self.reduced is not None:
            self.reduced.save(out / "reduced_model.json")
            doc["reduced_model"] = "reduced_model.json"
        if self.vine is not None:
            self.vine.save(out / "vine.json")
            doc["vine"] = "vine.json"
        (out / "artifacts.json").write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, out_dir) -> "CaseArtifacts":
        out = Path(out_dir)
        path = out / "artifacts.json"
        if not path.exists():
            raise MissingArtifactError(f"no artifacts.json in {out}")
        doc = json.loads(path.read_text())
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported artifact schema {doc.get('schema_version')}")
        ln = lambda d: None if d is None else LognormalFit(d["mu"], d["sigma"])  # noqa: E731
        mf = doc.get("mean_flow")
        mean_flow = None if mf is None else FlowFunctionSample(
            mf["k_abs"], np.asarray(mf["pc"]), np.asarray(mf["sat"]), np.asarray(mf["krw"]), np.asarray(mf["krnw"]))
        reduced = ReducedModelFit.load(out / doc["reduced_model"]) if "reduced_model" in doc else None
        vine = VineModel.load(out / doc["vine"]) if "vine" in doc else None
        return cls(doc["k_clay"], ln(doc.get("fault_lognormal")), mean_flow, reduced, vine,
                   ln(doc.get("troll_lognormal")), doc.get("meta", {}))


def troll_config(k_clay: float, base: FaciesModelConfig | None = None) -> FaciesModelConfig:
    base = base or FaciesModelConfig()
    return base.replace(k_clay=k_clay, depth_top=TROLL_TOP, depth_bottom=TROLL_BOTTOM)


def fit_troll_lognormal(k_clay: float, n: int, seed, base: FaciesModelConfig | None = None) -> LognormalFit:
    """Lognormal fit of arithmetic facies averages over the Troll depth segment."""
    cfg = troll_config(k_clay, base)
    heights, _, perms = sample_realizations(cfg, np.random.default_rng(seed), n)
    k = np.sum(heights * perms, axis=1) / np.sum(heights, axis=1)
    return fit_lognormal(k)


def fit_artifacts(k_clay: float, n_ref: int = 10_000, seed=0, copula: bool = True,
                  base: FaciesModelConfig | None = None) -> CaseArtifacts:
    """Generate the reference ensemble and fit every model the cases draw on."""
    fault_seed, troll_seed = np.random.SeedSequence(seed).spawn(2)
    cfg = (base or FaciesModelConfig()).replace(k_clay=k_clay)
    ens = generate_ensemble(cfg, SdGrid.logspace(), n_ref, fault_seed)
    art = CaseArtifacts(k_clay, fault_lognormal=fit_lognormal(ens.k_abs), mean_flow=ens.mean_sample(),
                        troll_lognormal=fit_troll_lognormal(k_clay, n_ref, troll_seed, base),
                        meta={"n_ref": n_ref, "seed": seed if isinstance(seed, int) else None})
    if copula:
        art.reduced = fit_reduced_model(ens)
        art.vine = fit_vine_to_data(extract_y(ens))
    return art


# -- case evaluators --------------------------------------------------------

@dataclass
class CaseSpec:
    case_id: str
    k_clay: float
    n_dims: int
    components: tuple  # names of the u coordinates, in order

    def to_dict(self) -> dict:
        return {"case": self.case_id, "k_clay": self.k_clay, "n_dims": self.n_dims,
                "components": list(self.components)}


class CaseEvaluator:
    """Pure map from a point of [0, 1]^n to cumulative leaked CO2 in tonnes.

    Deterministic inputs sit at their expected values: the ensemble-mean
    flow functions, the layer means and the Troll lognormal mean.
    """

    def __init__(self, spec: CaseSpec, art: CaseArtifacts, proxy: ProxyConfig | None = None):
        self.spec = spec
        self.art = art
        self.proxy = proxy or ProxyConfig()
        fault, layers, troll = _LAYOUT[spec.case_id]
        self._fault, self._layers, self._troll = fault, layers, troll
        self._layer_dists = [lognormal_from_moments(m, LAYER_STD) for m in LAYER_MEANS]
        self.k_troll_ref = art.troll_lognormal.mean
        self._lock = threading.Lock()
        self.max_mass_balance_error = 0.0
        self.n_calls = 0

    @property
    def dim(self) -> int:
        return self.spec.n_dims

    def inputs(self, u) -> tuple[FlowFunctionSample, tuple, float]:
        """Fault flow functions, layer permeabilities and Troll permeability for ``u``."""
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.dim:
            raise ValueError(f"case {self.spec.case_id} takes {self.dim} inputs, got {u.size}")
        pos = 0
        if self._fault == "lognormal":
            mf = self.art.mean_flow
            k = float(self.art.fault_lognormal.ppf(u[0]))
            ff = FlowFunctionSample(k, mf.pc, mf.sat, mf.krw, mf.krnw)
            pos = 1
        else:
            y = self.art.vine.sample_y(u[None, :5])[0]
            ff = evaluate_flow_functions(y, None, self.art.reduced)
            pos = 5
        if self._layers:
            layers = tuple(float(d.ppf(x)) for d, x in zip(self._layer_dists, u[pos:pos + 6]))
            pos += 6
        else:
            layers = self.proxy.layer_perms
        k_troll = float(self.art.troll_lognormal.ppf(u[pos])) if self._troll else self.k_troll_ref
        return ff, layers, k_troll

    def __call__(self, u) -> float:
        ff, layers, k_troll = self.inputs(u)
        cfg = self.proxy if layers == self.proxy.layer_perms else self.proxy.replace(layer_perms=layers)
        res = simulate(cfg, ff, k_troll)
        mb = float(res.mass_balance_error.max())
        with self._lock:
            self.n_calls += 1
            self.max_mass_balance_error = max(self.max_mass_balance_error, mb)
        return float(res.leaked_total[-1])


def build_case(case_id: str, k_clay: float, art: CaseArtifacts, proxy: ProxyConfig | None = None):
    """Case specification and its leakage evaluator."""
    if case_id not in _LAYOUT:
        raise ValueError(f"unknown case {case_id!r}; expected one of {CASES}")
    if not np.isclose(art.k_clay, k_clay, rtol=1e-12):
        raise ValueError(f"artifacts were fitted for k_clay={art.k_clay}, not {k_clay}")
    fault, layers, troll = _LAYOUT[case_id]
    if fault == "lognormal":
        art.require("fault_lognormal", "mean_flow")
        comps = ["fault_k"]
    else:
        art.require("reduced", "vine")
        comps = ["log_k", "pc_shift", "log_sat_ref", "log_krw_ref", "krnw_slope"]
    art.require("troll_lognormal")
    if layers:
        comps += [f"layer{i + 1}_k" for i in range(6)]
    if troll:
        comps.append("troll_k")
    spec = CaseSpec(case_id, float(k_clay), len(comps), tuple(comps))
    return spec, CaseEvaluator(spec, art, proxy)


# -- reports ----------------------------------------------------------------

def weighted_percentiles(values, weights, qs) -> np.ndarray:
    """Percentiles of a weighted sample; equal weights reproduce linear order-statistic interpolation."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    if np.allclose(w, w[0]):
        return np.percentile(v, qs)
    cum = np.cumsum(w) - 0.5 * w
    cum /= w.sum()
    return np.interp(np.asarray(qs) / 100.0, cum, v)


def histogram(values, weights=None, bins: int = N_HIST_BINS):
    """Equal-width bins over the observed range, normalised to probability mass."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        hi = lo + 1.0
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    mass, edges = np.histogram(v, bins=bins, range=(lo, hi), weights=w)
    return edges, mass / w.sum()


@dataclass
class StudyReport:
    spec: CaseSpec
    method: str
    budget: int
    seed: int
    alpha: float
    batch: int
    result: EstimatorResult
    weights: np.ndarray
    max_mass_balance_error: float
    speedup: SpeedupResult | None = None

    @property
    def values(self) -> np.ndarray:
        return self.result.log_values

    def percentiles(self) -> dict:
        p10, p50, p90 = weighted_percentiles(self.values, self.weights, [10, 50, 90])
        return {"p10": float(p10), "p50": float(p50), "p90": float(p90)}

    def summary(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, **self.spec.to_dict(), "method": self.method,
             "budget": self.budget, "seed": self.seed, "alpha": self.alpha, "batch": self.batch,
             "estimate": self.result.estimate, "variance": self.result.variance,
             "n_evals": self.result.n_evals, **self.percentiles(),
             "max_mass_balance_error": self.max_mass_balance_error}
        if self.method == "adss":
            d["variance_kind"] = "nominal"
            d["variance_stratified"] = self.result.stratified_variance
            d["n_strata"] = len(self.result.stratification.strata)
        if self.speedup is not None:
            d["speedup"] = self.speedup.to_dict()
        return d

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2))
        with (out / "samples.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"# schema_version={SCHEMA_VERSION}"])
            w.writerow(["iteration", "stratum_id"] + list(self.spec.components) + ["q_value", "weight"])
            r = self.result
            for k in range(r.log_values.size):
                w.writerow([int(r.log_iteration[k]), int(r.log_stratum[k])]
                           + [repr(float(x)) for x in r.log_points[k]]
                           + [repr(float(r.log_values[k])), repr(float(self.weights[k]))])
        write_histogram(out / "histogram.csv", self.values, self.weights)
        if self.method == "adss":
            r.write_snapshot(out / "stratification.json")
        return out


def write_histogram(path, values, weights) -> None:
    edges, mass = histogram(values, weights)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# schema_version={SCHEMA_VERSION}"])
        w.writerow(["bin_low_t", "bin_high_t", "probability"])
        for i in range(mass.size):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), repr(float(mass[i]))])


def sample_weights(result: EstimatorResult) -> np.ndarray:
    """Probability weight per logged evaluation: ``p_S / N_S`` for its final stratum."""
    if result.method == "smc":
        return np.full(result.n_evals, 1.0 / result.n_evals)
    strata = result.stratification.strata
    w = np.empty(result.n_evals)
    for st in strata:
        inside = st.contains(result.log_points)
        w[inside] = st.p / st.n_samples
    return w


def run_study(spec: CaseSpec, evaluator: CaseEvaluator, method: str = "smc", budget: int = 1000,
              repeats: int = 20, seed: int = 0, alpha: float = 0.5, batch: int = 50,
              workers: int | None = None) -> StudyReport:
    """SMC or ADSS leakage study; ``method="speedup"`` adds repeated ADSS runs for the speedup ratio."""
    if method not in ("smc", "adss", "speedup"):
        raise ValueError(f"unknown method {method!r}")
    if budget < batch:
        raise ValueError("budget must be at least one batch")
    sp = None
    evaluator.max_mass_balance_error = 0.0
    if method == "smc":
        res = run_smc(evaluator, spec.n_dims, budget, seed, workers)
    elif method == "adss":
        res = run_adaptive(evaluator, spec.n_dims, budget, alpha, batch, seed, workers=workers)
    else:
        sp = measure_speedup(evaluator, spec.n_dims, budget, repeats, seed, alpha, batch, workers=workers)
        res = sp.smc
    return StudyReport(spec, method, budget, seed, alpha, batch, res,
                       sample_weights(res), evaluator.max_mass_balance_error, sp)
