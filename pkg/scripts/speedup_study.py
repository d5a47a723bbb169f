"""Speedup of adaptive stratified sampling over plain Monte Carlo across budgets.

Usage: python3 scripts/speedup_study.py --cases I --budgets 500 1000 2000 --repeats 20
"""
import argparse
import json
from pathlib import Path

from faultflow.pipeline import CASES, K_CLAY_SCENARIOS, build_case, fit_artifacts, run_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cases", nargs="+", default=["I"], choices=CASES)
    ap.add_argument("--kclay", nargs="+", type=float, default=list(K_CLAY_SCENARIOS))
    ap.add_argument("--budgets", nargs="+", type=int, default=[500, 1000, 2000])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-ref", type=int, default=10_000)
    ap.add_argument("--out", default="results/speedup")
    args = ap.parse_args()

    rows = []
    for k_clay in args.kclay:
        copula = any(c not in ("I", "II") for c in args.cases)
        art = fit_artifacts(k_clay, args.n_ref, args.seed, copula=copula)
        for case in args.cases:
            spec, ev = build_case(case, k_clay, art)
            for budget in args.budgets:
                rep = run_study(spec, ev, "speedup", budget, args.repeats, args.seed)
                sp = rep.speedup
                rows.append({"case": case, "k_clay": k_clay, "budget": budget, "speedup": sp.speedup,
                             "var_mc": sp.var_mc, "var_adss": sp.var_adss})
                print(f"{case:>3} k_clay={k_clay:<7g} N={budget:<6d} speedup={sp.speedup:8.3g}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "speedup.json").write_text(json.dumps({"schema_version": 1, "rows": rows}, indent=2))


if __name__ == "__main__":
    main()
