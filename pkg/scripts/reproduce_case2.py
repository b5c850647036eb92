"""Case 2: learned controller against high-order MFAC on the switching nonlinear plant."""

from __future__ import annotations

import argparse
from pathlib import Path

from modelfollow.experiment import compare_runs, load_config, metrics_path_for, run_experiment, write_metrics


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/case2.yaml")
    ap.add_argument("--outdir", default="runs")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    runs = []
    for controller in ("rl", "mfac"):
        for seed in args.seeds if controller == "rl" else args.seeds[:1]:
            out = Path(args.outdir) / f"case2_{controller}_s{seed}.csv"
            cfg = load_config(args.config, controller=controller, seed=seed, out_path=str(out))
            m = run_experiment(cfg)
            write_metrics([m], metrics_path_for(out))
            runs.append(m)
    table = compare_runs(runs)
    print(table.to_text(), end="")
    (Path(args.outdir) / "case2_comparison.csv").write_text(table.to_csv())
    for m in runs:
        if m.controller == "rl":
            print(f"seed {m.seed}: gains {[round(g, 4) for g in m.converged_gains]}")


if __name__ == "__main__":
    main()
