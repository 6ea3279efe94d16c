"""Train each descriptor/matching variant on the synthetic benchmark and print a MOTA table.

    python3 scripts/run_ablation.py --seeds 0 1 2 --json ablation.json
"""

import argparse
import json
import statistics
import time

from quadtrack.synthlab import AblationConfig, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--steps", type=int, default=AblationConfig.steps)
    ap.add_argument("--sequences", type=int, default=AblationConfig.sequences)
    ap.add_argument("--json", help="also write the raw numbers here")
    args = ap.parse_args()

    table: dict[str, list[dict]] = {}
    for seed in args.seeds:
        t0 = time.perf_counter()
        res, _ = run_ablation(AblationConfig(seed=seed, steps=args.steps, sequences=args.sequences))
        print(f"seed {seed}: {time.perf_counter() - t0:.1f} s")
        for name, r in res.items():
            table.setdefault(name, []).append({"seed": seed, "mota": r.mota, "motp": r.motp, "idsw": r.idsw,
                                               "fp": r.fp, "fn": r.fn})

    print(f"\n{'variant':<18}{'MOTA':>8}{'sd':>7}{'MOTP':>8}{'IDSW':>7}")
    for name, rows in table.items():
        m = [r["mota"] for r in rows]
        sd = statistics.stdev(m) if len(m) > 1 else 0.0
        print(f"{name:<18}{statistics.fmean(m):8.2f}{sd:7.2f}{statistics.fmean(r['motp'] for r in rows):8.3f}"
              f"{statistics.fmean(r['idsw'] for r in rows):7.1f}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(table, f, indent=2)


if __name__ == "__main__":
    main()
