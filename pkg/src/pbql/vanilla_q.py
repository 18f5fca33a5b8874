"""Tabular Q-learning on fixed observational data, blind to confounding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import DomainError, EmptyDatasetError, MissingArtifact
from .trajectory import TrajectoryDataset


@dataclass(eq=False)
class QTable:
    values: np.ndarray
    alpha: float | None = None
    gamma: float | None = None
    epochs: int | None = None
    seed: int | None = None
    snapshots: np.ndarray | None = None  # (epochs, S, X), end-of-epoch iterates
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_dict(self) -> dict:
        d = {
            "kind": "q_table",
            "values": self.values.tolist(),
            "alpha": self.alpha, "gamma": self.gamma, "epochs": self.epochs, "seed": self.seed,
            "metadata": self.metadata,
        }
        if self.snapshots is not None:
            d["snapshots"] = self.snapshots.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        snaps = d.get("snapshots")
        return cls(values=np.asarray(d["values"], dtype=float), alpha=d.get("alpha"),
                   gamma=d.get("gamma"), epochs=d.get("epochs"), seed=d.get("seed"),
                   snapshots=None if snaps is None else np.asarray(snaps, dtype=float),
                   metadata=d.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        if not Path(path).exists():
            raise MissingArtifact(f"Q-table not found: {path}")
        return cls.from_dict(json.loads(Path(path).read_text()))


@numba.njit(cache=True)
def _td_sweeps(s, x, y, sn, order, q, alpha, gamma, epochs, snapshots, avg):
    n = s.shape[0]
    n_act = q.shape[1]
    for e in range(epochs):
        last = e == epochs - 1
        for j in range(n):
            i = order[e, j] if order.shape[0] > 0 else j
            best = q[sn[i], 0]
            for k in range(1, n_act):
                if q[sn[i], k] > best:
                    best = q[sn[i], k]
            q[s[i], x[i]] += alpha * (y[i] + gamma * best - q[s[i], x[i]])
            if last:
                avg += q
        snapshots[e] = q
    avg /= n


def train_q(data: TrajectoryDataset, alpha: float = 0.05, gamma: float = 0.9, epochs: int = 500,
            *, shuffle_seed: int | None = None, average_final_epoch: bool = False,
            record_snapshots: bool = True) -> QTable:
    """One TD(0) update per record, records in dataset order, ``epochs`` passes.

    With a constant step size the final iterate keeps fluctuating around the
    fixed point (std ~ sqrt(alpha / (1 - gamma)) * reward std).  Setting
    ``average_final_epoch`` returns the mean of the iterates over the last
    pass instead; the raw iterate is kept in ``metadata["last_iterate"]``.
    """
    if len(data) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must be in (0, 1], got {alpha}")
    if not 0 <= gamma < 1:
        raise DomainError(f"gamma must be in [0, 1), got {gamma}")
    if epochs < 1:
        raise DomainError(f"epochs must be >= 1, got {epochs}")

    n = len(data)
    if shuffle_seed is None:
        order = np.empty((0, n), dtype=np.int64)
    else:
        rng = np.random.default_rng(shuffle_seed)
        order = np.stack([rng.permutation(n) for _ in range(epochs)])
    q = np.zeros((data.n_states, data.n_actions))
    snaps = np.empty((epochs, *q.shape))
    avg = np.zeros_like(q)
    _td_sweeps(data.s, data.x, data.y.astype(np.float64), data.s_next, order, q,
               float(alpha), float(gamma), int(epochs), snaps, avg)

    meta = {"n_records": n, "average_final_epoch": average_final_epoch,
            "shuffle_seed": shuffle_seed, "last_iterate": q.tolist(),
            "provenance": data.provenance}
    return QTable(values=avg if average_final_epoch else q, alpha=alpha, gamma=gamma,
                  epochs=epochs, seed=data.provenance.get("seed"),
                  snapshots=snaps if record_snapshots else None, metadata=meta)


class DeterministicPolicy:
    """State -> action lookup; also usable as a rollout policy."""

    def __init__(self, actions, n_actions: int):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.n_actions = int(n_actions)

    def __call__(self, s: int) -> int:
        return int(self.actions[s])

    @property
    def n_states(self) -> int:
        return self.actions.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.eye(self.n_actions)[self.actions]

    def select(self, s: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        return self.actions[s]


def greedy_policy(q: QTable | np.ndarray) -> DeterministicPolicy:
    """argmax over actions, ties to the lowest action id."""
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    return DeterministicPolicy(np.argmax(values, axis=1), values.shape[1])
