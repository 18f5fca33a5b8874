"""End-to-end run on the packaged drug-trial environment.

Writes a complete run directory (dataset, tables, evaluations, oracle and
bounds files, figure CSVs) and prints the headline tables.

    python scripts/run_drug_trial.py --out runs/drug_trial --seed 0
"""
import argparse
import json
from pathlib import Path

import numpy as np

from pbql import experiment as ex
from pbql.pbql import BoundedQTable
from pbql.vanilla_q import QTable


def show(name, arr):
    print(f"{name}:")
    for s, row in enumerate(np.asarray(arr)):
        print(f"  s={s}  " + "  ".join(f"x={x}: {v:7.3f}" for x, v in enumerate(row)))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/drug_trial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--eval-episodes", type=int, default=5000)
    args = p.parse_args()

    cfg = ex.ExperimentConfig(out_dir=args.out, seed=args.seed, episodes=args.episodes,
                              eval_episodes=args.eval_episodes)
    ex.cmd_gen(cfg)
    for algo in ("q", "pbql"):
        ex.cmd_train(cfg, algo)
    modes = ["optimal", "greedy", "thompson", "fixed:0", "fixed:1"]
    for mode in modes:
        ex.cmd_eval(cfg, mode)
    ex.cmd_oracle(cfg)
    ex.cmd_bounds(cfg)
    ex.cmd_report(cfg.out)

    run = Path(cfg.out)
    oracle = json.loads((run / "oracle.json").read_text())
    bounds = json.loads((run / "bounds.json").read_text())
    q = QTable.load(run / "q_table.json")
    t = BoundedQTable.load(run / "pbql_table.json")

    show("Q* (value iteration)", oracle["optimal_q"])
    show("natural bound a", bounds["a"])
    show("natural bound b", bounds["b"])
    show("vanilla Q", q.values)
    show("confounded fixed point", oracle["confounded_q"])
    show("PBQL q_low", t.q_low)
    show("PBQL q_high", t.q_high)

    print(f"\n{'policy':10s} {'mean':>8s} {'stderr':>8s} {'regret':>8s}")
    for mode in modes:
        summ = json.loads((run / f"eval_{ex.mode_label(mode)}.json").read_text())
        reg = summ.get("regret_vs_optimal", {}).get("regret", float("nan"))
        print(f"{ex.mode_label(mode):10s} {summ['mean']:8.3f} {summ['stderr']:8.3f} {reg:8.3f}")
    print(f"\nrun directory: {run}")


if __name__ == "__main__":
    main()
