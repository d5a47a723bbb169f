"""Leakage histograms and P10/P50/P90 for every case and clay scenario (plain Monte Carlo).

Usage: python3 scripts/leakage_histograms.py --budget 1000 --out results/histograms
"""
import argparse
import json
from pathlib import Path

from faultflow.pipeline import CASES, K_CLAY_SCENARIOS, build_case, fit_artifacts, run_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-ref", type=int, default=10_000)
    ap.add_argument("--cases", nargs="+", default=list(CASES))
    ap.add_argument("--out", default="results/histograms")
    args = ap.parse_args()

    table = []
    for k_clay in K_CLAY_SCENARIOS:
        art = fit_artifacts(k_clay, args.n_ref, args.seed)
        for case in args.cases:
            spec, ev = build_case(case, k_clay, art)
            rep = run_study(spec, ev, "smc", args.budget, seed=args.seed)
            rep.write(Path(args.out) / f"case_{case}_kclay_{k_clay:g}")
            s = rep.summary()
            table.append({k: s[k] for k in ("case", "k_clay", "estimate", "p10", "p50", "p90")})
            print(f"{case:>3} k_clay={k_clay:<7g} mean={s['estimate']:10.4g} t  "
                  f"P10={s['p10']:10.4g}  P50={s['p50']:10.4g}  P90={s['p90']:10.4g}")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "percentiles.json").write_text(json.dumps(table, indent=2))


if __name__ == "__main__":
    main()
