"""Executable policies, interventional rollouts, and regret."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ValidatedEnvironment, sample_episodes
from .errors import ConfigMismatch, DimensionMismatch, DomainError
from .pbql import BoundedQTable
from .seeding import as_generator
from .vanilla_q import DeterministicPolicy, QTable, greedy_policy


class IntervalPolicy:
    """Thompson-style policy: draw each action's value uniformly from ``[q_low, q_high]``, act greedily."""

    def __init__(self, table: BoundedQTable):
        if np.any(table.q_low > table.q_high):
            raise DomainError("interval policy needs q_low <= q_high")
        self.table = table
        self.low = table.q_low
        self.width = table.q_high - table.q_low

    @property
    def n_states(self) -> int:
        return self.low.shape[0]

    @property
    def n_actions(self) -> int:
        return self.low.shape[1]

    def select(self, s: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        draws = self.low[s] + self.width[s] * uniforms[:, : self.n_actions]
        # first maximal index == running max started at -inf with strict '>'
        return np.argmax(draws, axis=1)


def thompson_action(policy: IntervalPolicy, s: int, seed=None) -> int:
    rng = as_generator(seed)
    u = rng.random(policy.n_actions)
    return int(policy.select(np.array([s]), u[None])[0])


def _p_strictly_greater(b1: float, b2: float, a1: float, a2: float) -> float:
    """P(B > A) for independent B ~ U[b1, b2], A ~ U[a1, a2]; zero-width intervals are point masses."""
    wa, wb = a2 - a1, b2 - b1
    if wa == 0 and wb == 0:
        return 1.0 if b1 > a1 else 0.0
    if wa == 0:
        return min(max((b2 - a1) / wb, 0.0), 1.0)
    if wb == 0:
        return min(max((b1 - a1) / wa, 0.0), 1.0)

    def antiderivative_cdf_b(t):
        if t <= b1:
            return 0.0
        if t >= b2:
            return wb / 2 + (t - b2)
        return (t - b1) ** 2 / (2 * wb)

    p_a_greater = (antiderivative_cdf_b(a2) - antiderivative_cdf_b(a1)) / wa
    return 1.0 - p_a_greater


def action_probabilities(policy: IntervalPolicy, s: int, n_draws: int = 100_000,
                         seed=0) -> np.ndarray:
    """Probability that each action wins the draw in state ``s``.

    Exact for two actions; Monte Carlo with ``n_draws`` seeded draws otherwise.
    """
    lo, hi = policy.low[s], policy.low[s] + policy.width[s]
    if policy.n_actions == 1:
        return np.ones(1)
    if policy.n_actions == 2:
        p1 = _p_strictly_greater(lo[1], hi[1], lo[0], hi[0])
        return np.array([1.0 - p1, p1])
    rng = as_generator(seed)
    u = rng.random((n_draws, policy.n_actions))
    picks = policy.select(np.full(n_draws, s), u)
    return np.bincount(picks, minlength=policy.n_actions) / n_draws


def fixed_action_policy(action: int, n_states: int, n_actions: int) -> DeterministicPolicy:
    if not 0 <= action < n_actions:
        raise DomainError(f"action {action} out of range")
    return DeterministicPolicy(np.full(n_states, action), n_actions)


def optimal_policy(env: ValidatedEnvironment, gamma: float | None = None) -> DeterministicPolicy:
    from .oracles import optimal_q

    return greedy_policy(optimal_q(env, gamma))


def as_policy(env: ValidatedEnvironment, policy, gamma: float | None = None):
    """Coerce tables, action ids and ``"optimal"`` to something with ``select``."""
    if isinstance(policy, str):
        if policy == "optimal":
            return optimal_policy(env, gamma)
        raise DomainError(f"unknown policy {policy!r}")
    if isinstance(policy, (int, np.integer)):
        return fixed_action_policy(int(policy), env.n_states, env.n_actions)
    if isinstance(policy, QTable):
        policy = greedy_policy(policy)
    elif isinstance(policy, BoundedQTable):
        policy = IntervalPolicy(policy)
    if (policy.n_states, policy.n_actions) != (env.n_states, env.n_actions):
        raise DimensionMismatch(
            f"policy is {policy.n_states}x{policy.n_actions}, env is {env.n_states}x{env.n_actions}")
    return policy


@dataclass(eq=False)
class RolloutReport:
    returns: np.ndarray
    cumulative_sum: np.ndarray  # (T,) sum over episodes of discounted reward up to t
    action_counts: np.ndarray  # (S, X)
    gamma: float
    horizon: int
    policy_name: str = ""
    seed: int | None = None
    env_hash: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return len(self.returns)

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    @property
    def stderr(self) -> float:
        if self.episodes < 2:
            return float("nan")
        return float(self.returns.std(ddof=1) / math.sqrt(self.episodes))

    @property
    def cumulative_mean(self) -> np.ndarray:
        return self.cumulative_sum / self.episodes

    @property
    def action_frequencies(self) -> np.ndarray:
        totals = self.action_counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            return np.where(totals > 0, self.action_counts / np.maximum(totals, 1), np.nan)

    def merge(self, other: "RolloutReport") -> "RolloutReport":
        if (self.gamma, self.horizon) != (other.gamma, other.horizon):
            raise ConfigMismatch("cannot merge reports with different gamma or horizon")
        return RolloutReport(
            returns=np.concatenate([self.returns, other.returns]),
            cumulative_sum=self.cumulative_sum + other.cumulative_sum,
            action_counts=self.action_counts + other.action_counts,
            gamma=self.gamma, horizon=self.horizon, policy_name=self.policy_name,
            seed=self.seed, env_hash=self.env_hash, metadata=dict(self.metadata),
        )

    def summary(self) -> dict:
        return {
            "policy": self.policy_name, "episodes": self.episodes, "horizon": self.horizon,
            "gamma": self.gamma, "seed": self.seed, "env_hash": self.env_hash,
            "mean": self.mean, "stderr": self.stderr,
            "action_frequencies": self.action_frequencies.tolist(),
            "cumulative_mean": self.cumulative_mean.tolist(),
            **self.metadata,
        }

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        """``<stem>.csv`` with one row per episode and ``<stem>.json`` with the summary."""
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "return"])
            for i, r in enumerate(self.returns):
                w.writerow([i, repr(float(r))])
        json_path.write_text(json.dumps(self.summary(), indent=1) + "\n")
        return csv_path, json_path

    @classmethod
    def read(cls, stem: str | Path) -> "RolloutReport":
        stem = Path(stem)
        summary = json.loads(stem.with_suffix(".json").read_text())
        with open(stem.with_suffix(".csv"), newline="") as fh:
            returns = np.array([float(r["return"]) for r in csv.DictReader(fh)])
        n = len(returns)
        freq = np.nan_to_num(np.asarray(summary["action_frequencies"], dtype=float))
        known = {"policy", "episodes", "horizon", "gamma", "seed", "env_hash", "mean", "stderr",
                 "action_frequencies", "cumulative_mean"}
        return cls(returns=returns, cumulative_sum=np.asarray(summary["cumulative_mean"]) * n,
                   action_counts=freq, gamma=summary["gamma"], horizon=summary["horizon"],
                   policy_name=summary["policy"], seed=summary["seed"], env_hash=summary["env_hash"],
                   metadata={k: v for k, v in summary.items() if k not in known})


def rollout(env: ValidatedEnvironment, policy, episodes: int, horizon: int | None = None,
            gamma: float | None = None, seed: int = 0, *, label: str = "eval",
            policy_name: str | None = None, chunk: int = 1000) -> RolloutReport:
    """Interventional episodes; returns accumulate ``y * gamma**t`` from ``t = 0``.

    Episode ``i`` draws from the seed stream ``(seed, label, i)`` regardless of
    chunking, and every policy sees the same environment noise for a given
    ``(seed, label, i)``.
    """
    if episodes < 1:
        raise DomainError("episodes must be >= 1")
    T = env.horizon if horizon is None else int(horizon)
    gamma = env.discount if gamma is None else float(gamma)
    if not 0 <= gamma < 1:
        raise DomainError(f"gamma must be in [0, 1), got {gamma}")
    name = policy_name or (policy if isinstance(policy, str) else type(policy).__name__)
    policy = as_policy(env, policy, gamma)
    disc = gamma ** np.arange(T)
    returns = np.empty(episodes)
    cum = np.zeros(T)
    counts = np.zeros((env.n_states, env.n_actions), dtype=np.int64)
    for lo, arr in sample_episodes(env, policy, master_seed=seed, label=label,
                                   episodes=episodes, horizon=T, chunk=chunk):
        flow = arr["y"] * disc
        returns[lo:lo + len(flow)] = flow.sum(axis=1)
        cum += np.cumsum(flow, axis=1).sum(axis=0)
        np.add.at(counts, (arr["s"].ravel(), arr["x"].ravel()), 1)
    return RolloutReport(returns=returns, cumulative_sum=cum, action_counts=counts, gamma=gamma,
                         horizon=T, policy_name=str(name), seed=seed, env_hash=env.spec_hash)


@dataclass(frozen=True)
class RegretEstimate:
    mean: float
    stderr: float
    z: float = 1.96

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.z * self.stderr, self.mean + self.z * self.stderr

    def to_dict(self) -> dict:
        return {"regret": self.mean, "stderr": self.stderr, "ci95": list(self.ci)}


def regret(report_policy: RolloutReport, report_optimal: RolloutReport) -> RegretEstimate:
    """Mean discounted return lost relative to the optimal report."""
    a, b = report_policy, report_optimal
    if (a.episodes, a.horizon, a.gamma) != (b.episodes, b.horizon, b.gamma):
        raise ConfigMismatch("reports differ in episodes, horizon or gamma")
    if a.env_hash and b.env_hash and a.env_hash != b.env_hash:
        raise ConfigMismatch("reports come from different environments")
    return RegretEstimate(mean=b.mean - a.mean, stderr=math.hypot(a.stderr, b.stderr))
