"""Containment of Q* by the PBQL interval on random confounded environments.

For each seed: draw an environment, check the infinite-data fixed points,
then optionally train PBQL on sampled data and check the learned interval.

    python scripts/containment_sweep.py --n-envs 200 --train 20
"""
import argparse

import numpy as np

from pbql import BatchingConfig, BoundedQTable, bound_fixed_points, containment_check, optimal_q, train_pbql
from pbql.env import random_environment
from pbql.experiment import ExperimentConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-envs", type=int, default=200)
    p.add_argument("--train", type=int, default=20, help="how many of the envs to also train on")
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--confounders", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--horizon", type=int, default=250)
    p.add_argument("--epochs", type=int, default=5000)
    args = p.parse_args()

    fp_margins, trained_margins, widths = [], [], []
    for seed in range(args.n_envs):
        env = random_environment(seed, args.states, args.actions, args.confounders,
                                 horizon=args.horizon, discount=args.gamma)
        qstar = optimal_q(env, args.gamma)
        lo, hi = bound_fixed_points(env, args.gamma)
        rep = containment_check(BoundedQTable(lo, hi), qstar)
        fp_margins.append(min(rep.margin_low.min(), rep.margin_high.min()))
        widths.append(float((hi - lo).mean()))
        if seed < args.train:
            cfg = ExperimentConfig(episodes=args.episodes, horizon=args.horizon, seed=seed)
            t = train_pbql(generate(cfg, env), 0.05, args.gamma, args.epochs, BatchingConfig(num_batches=1))
            r = containment_check(t, qstar)
            trained_margins.append(min(r.margin_low.min(), r.margin_high.min()))

    fp = np.array(fp_margins)
    print(f"fixed points: {int((fp >= 0).sum())}/{len(fp)} contain Q*, "
          f"min margin {fp.min():.4f}, mean width {np.mean(widths):.3f}")
    if trained_margins:
        tr = np.array(trained_margins)
        print(f"trained PBQL: {int((tr >= 0).sum())}/{len(tr)} contain Q*, min margin {tr.min():.4f}")


if __name__ == "__main__":
    main()
