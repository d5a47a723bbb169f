"""Command-line entry point: ``faultflow <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .facies import FaciesModelConfig
from .pipeline import (CASES, SCHEMA_VERSION, CaseArtifacts, build_case, fit_artifacts, run_study,
                       weighted_percentiles, write_histogram)
from .proxy import ProxyConfig, simulate
from .upscaling import SdGrid, generate_ensemble

K_CLAY_CHOICES = {"1e-4": 1e-4, "1e-3": 1e-3, "1": 1.0}


def _kclay(text: str) -> float:
    if text in K_CLAY_CHOICES:
        return K_CLAY_CHOICES[text]
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid clay permeability {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("clay permeability must be positive")
    return value


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))


def _artifacts(args, copula: bool) -> CaseArtifacts:
    if args.artifacts:
        art = CaseArtifacts.load(args.artifacts)
        if not np.isclose(art.k_clay, args.kclay):
            raise SystemExit(f"artifacts in {args.artifacts} were fitted for k_clay={art.k_clay}")
        return art
    return fit_artifacts(args.kclay, args.n_ref, args.fit_seed, copula=copula)


def cmd_upscale(args) -> int:
    cfg = FaciesModelConfig().replace(k_clay=args.kclay)
    ens = generate_ensemble(cfg, SdGrid.logspace(), args.n_ref, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ens.to_csv(out / "ensemble.csv", meta={"k_clay": args.kclay, "seed": args.seed})
    _write_json(out / "ensemble_summary.json", {
        "schema_version": SCHEMA_VERSION, "k_clay": args.kclay, "n_ref": args.n_ref, "seed": args.seed,
        "k_abs_p10_p50_p90": np.percentile(ens.k_abs, [10, 50, 90]).tolist()})
    print(f"wrote {len(ens)} samples to {out / 'ensemble.csv'}")
    return 0


def cmd_fit(args) -> int:
    art = fit_artifacts(args.kclay, args.n_ref, args.seed)
    art.save(args.out)
    print(f"wrote fitted artifacts to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    art = _artifacts(args, copula=False)
    art.require("mean_flow", "troll_lognormal")
    cfg = ProxyConfig.from_json(args.config) if args.config else ProxyConfig()
    k_fault = art.fault_lognormal.median if args.kfault is None else args.kfault
    k_troll = art.troll_lognormal.mean if args.ktroll is None else args.ktroll
    res = simulate(cfg, art.mean_flow, k_troll, k_fault=k_fault)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "simulation.csv")
    s = res.summary()
    print(f"leaked {s['leaked_top_t'] + s['leaked_troll_t']:.6g} t of {s['injected_t']:.6g} t injected")
    return 0


def _study(args, method: str) -> int:
    art = _artifacts(args, copula=args.case not in ("I", "II"))
    spec, ev = build_case(args.case, args.kclay, art)
    rep = run_study(spec, ev, method, args.budget, getattr(args, "repeats", 20), args.seed, args.alpha,
                    args.batch)
    out = rep.write(args.out)
    s = rep.summary()
    line = f"case {spec.case_id} k_clay={spec.k_clay:g}: mean {s['estimate']:.6g} t, P10/P50/P90 " \
           f"{s['p10']:.4g}/{s['p50']:.4g}/{s['p90']:.4g} t"
    if rep.speedup is not None:
        line += f", speedup {rep.speedup.speedup:.3g}"
    print(line)
    print(f"outputs in {out}")
    return 0


def cmd_study(args) -> int:
    return _study(args, args.method)


def cmd_speedup(args) -> int:
    return _study(args, "speedup")


def cmd_report(args) -> int:
    src = Path(args.source)
    summary = json.loads((src / "summary.json").read_text())
    with (src / "samples.csv").open() as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    q = np.array([float(r[header.index("q_value")]) for r in body])
    w = np.array([float(r[header.index("weight")]) for r in body])
    p10, p50, p90 = weighted_percentiles(q, w, [10, 50, 90])
    out = Path(args.out) if args.out else src
    out.mkdir(parents=True, exist_ok=True)
    write_histogram(out / "histogram.csv", q, w)
    report = {"schema_version": SCHEMA_VERSION, "case": summary["case"], "k_clay": summary["k_clay"],
              "method": summary["method"], "n_samples": int(q.size), "estimate": summary["estimate"],
              "p10": float(p10), "p50": float(p50), "p90": float(p90)}
    if "speedup" in summary:
        report["speedup"] = summary["speedup"]["speedup"]
    _write_json(out / "report.json", report)
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faultflow", description="Fault flow-function uncertainty studies")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_help="random seed"):
        sp.add_argument("--kclay", type=_kclay, default=1e-3, help="clay permeability in mD (1e-4, 1e-3, 1)")
        sp.add_argument("--seed", type=int, default=0, help=seed_help)
        sp.add_argument("--out", default="out", help="output directory")

    def fitted(sp):
        sp.add_argument("--artifacts", help="directory written by 'fit'; fitted on the fly when omitted")
        sp.add_argument("--n-ref", type=int, default=10_000, help="ensemble size for on-the-fly fits")
        sp.add_argument("--fit-seed", type=int, default=0, help="seed for on-the-fly fits")

    sp = sub.add_parser("upscale", help="generate an upscaled flow-function ensemble")
    common(sp)
    sp.add_argument("--n-ref", type=int, default=10_000)
    sp.set_defaults(func=cmd_upscale)

    sp = sub.add_parser("fit", help="fit lognormals, the reduced model and the vine copula")
    common(sp)
    sp.add_argument("--n-ref", type=int, default=10_000)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="single proxy run with reference flow functions")
    common(sp)
    fitted(sp)
    sp.add_argument("--kfault", type=float, help="fault permeability in mD (default: lognormal median)")
    sp.add_argument("--ktroll", type=float, help="Troll connection permeability in mD")
    sp.add_argument("--config", help="proxy configuration JSON")
    sp.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("study", cmd_study, "SMC or ADSS leakage study"),
                                 ("speedup", cmd_speedup, "paired SMC/ADSS speedup study")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        fitted(sp)
        sp.add_argument("--case", choices=CASES, default="I")
        sp.add_argument("--budget", type=int, default=1000)
        sp.add_argument("--batch", type=int, default=50)
        sp.add_argument("--alpha", type=float, default=0.5)
        if name == "study":
            sp.add_argument("--method", choices=("smc", "adss"), default="smc")
        else:
            sp.add_argument("--repeats", type=int, default=20)
        sp.set_defaults(func=func)

    sp = sub.add_parser("report", help="re-render percentiles and histogram from a study directory")
    sp.add_argument("source", help="directory holding summary.json and samples.csv")
    sp.add_argument("--out", help="output directory (default: the source directory)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
