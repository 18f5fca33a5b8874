"""Seed-to-seed spread of vanilla Q-learning with a constant step size.

Compares the raw final iterate with the average over the final epoch, both
measured against the confounded fixed point.

    python scripts/vanilla_seed_sweep.py --seeds 10
"""
import argparse

import numpy as np

from pbql import confounded_q, train_q
from pbql.env import drug_trial_env
from pbql.experiment import ExperimentConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    args = p.parse_args()

    env = drug_trial_env()
    target = confounded_q(env, env.discount).values
    raw, avg = [], []
    for seed in range(args.seeds):
        data = generate(ExperimentConfig(episodes=args.episodes, seed=seed), env)
        q = train_q(data, args.alpha, env.discount, args.epochs, average_final_epoch=True,
                    record_snapshots=False)
        raw.append(np.abs(np.array(q.metadata["last_iterate"]) - target).max())
        avg.append(np.abs(q.values - target).max())
        print(f"seed {seed:3d}  last-iterate dev {raw[-1]:.4f}  averaged dev {avg[-1]:.4f}")
    print(f"max over seeds: last iterate {max(raw):.4f}, averaged {max(avg):.4f}")


if __name__ == "__main__":
    main()
