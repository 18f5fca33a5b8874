"""Partial Bound Q-learning: paired lower/upper action-value tables.

Each batch yields the empirical natural bounds ``a_hat <= b_hat`` on the
one-step interventional reward of every ``(s, x)``; ``q_low`` and ``q_high``
are learned by bootstrapping with ``a_hat`` and ``b_hat`` respectively.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import DimensionMismatch, DomainError, EmptyDatasetError, MissingArtifact
from .trajectory import BatchingConfig, TrajectoryDataset, batch_bounds, batch_counts
from .vanilla_q import QTable

UPDATE_MODES = ("expected", "literal")


@dataclass(eq=False)
class BoundedQTable:
    q_low: np.ndarray
    q_high: np.ndarray
    alpha: float | None = None
    gamma: float | None = None
    epochs: int | None = None
    batching: dict | None = None
    update_mode: str | None = None
    seed: int | None = None
    snapshots_low: np.ndarray | None = None
    snapshots_high: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q_low = np.asarray(self.q_low, dtype=float)
        self.q_high = np.asarray(self.q_high, dtype=float)
        if self.q_low.shape != self.q_high.shape:
            raise DimensionMismatch("q_low and q_high differ in shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.q_low.shape

    def to_dict(self) -> dict:
        d = {
            "kind": "bounded_q_table",
            "q_low": self.q_low.tolist(), "q_high": self.q_high.tolist(),
            "alpha": self.alpha, "gamma": self.gamma, "epochs": self.epochs,
            "batching": self.batching, "update_mode": self.update_mode, "seed": self.seed,
            "metadata": self.metadata,
        }
        if self.snapshots_low is not None:
            d["snapshots_low"] = self.snapshots_low.tolist()
            d["snapshots_high"] = self.snapshots_high.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundedQTable":
        def arr(key):
            return None if d.get(key) is None else np.asarray(d[key], dtype=float)

        return cls(q_low=arr("q_low"), q_high=arr("q_high"), alpha=d.get("alpha"),
                   gamma=d.get("gamma"), epochs=d.get("epochs"), batching=d.get("batching"),
                   update_mode=d.get("update_mode"), seed=d.get("seed"),
                   snapshots_low=arr("snapshots_low"), snapshots_high=arr("snapshots_high"),
                   metadata=d.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BoundedQTable":
        if not Path(path).exists():
            raise MissingArtifact(f"bounded table not found: {path}")
        return cls.from_dict(json.loads(Path(path).read_text()))


@numba.njit(cache=True)
def _pbql_epochs(count_s, count_sx, count_ysx, kernel_counts, pooled, literal,
                 q_lo, q_hi, alpha, gamma, epochs, snaps_lo, snaps_hi):
    n_batches, n_s, n_x = count_sx.shape
    for e in range(epochs):
        for b in range(n_batches):
            for s in range(n_s):
                cs = count_s[b, s]
                if cs == 0:
                    continue  # estimator undefined: skip rather than bias toward 0
                for x in range(n_x):
                    a_hat = count_ysx[b, s, x] / cs
                    b_hat = a_hat + (cs - count_sx[b, s, x]) / cs
                    if literal:
                        for sp in range(n_s):
                            n = kernel_counts[b, s, 0, sp] if pooled else kernel_counts[b, s, x, sp]
                            if n > 0:
                                step = min(n * alpha, 1.0)
                                q_lo[s, x] += step * (a_hat + gamma * q_lo[sp].max() - q_lo[s, x])
                                q_hi[s, x] += step * (b_hat + gamma * q_hi[sp].max() - q_hi[s, x])
                    else:
                        total = 0.0
                        for sp in range(n_s):
                            total += kernel_counts[b, s, x, sp]
                        if total == 0:
                            continue
                        v_lo = 0.0
                        v_hi = 0.0
                        for sp in range(n_s):
                            w = kernel_counts[b, s, x, sp] / total
                            if w > 0:
                                v_lo += w * q_lo[sp].max()
                                v_hi += w * q_hi[sp].max()
                        q_lo[s, x] += alpha * (a_hat + gamma * v_lo - q_lo[s, x])
                        q_hi[s, x] += alpha * (b_hat + gamma * v_hi - q_hi[s, x])
        snaps_lo[e] = q_lo
        snaps_hi[e] = q_hi


def train_pbql(data: TrajectoryDataset, alpha: float = 0.05, gamma: float = 0.9,
               epochs: int = 500, batching: BatchingConfig | None = None,
               update_mode: str = "expected", *, pooled_counts: bool = False,
               record_snapshots: bool = True) -> BoundedQTable:
    """Learn ``(q_low, q_high)`` from observational data.

    ``update_mode="expected"`` bootstraps from the batch's empirical kernel
    ``n(s, x, s') / n(s, x)`` with step ``alpha``.  ``"literal"`` applies one
    update per visited ``s'`` with step ``min(n * alpha, 1)``;
    ``pooled_counts`` then counts ``(s, s')`` pairs regardless of action.
    Both tables start at zero, and ``(s, x)`` cells are swept in ascending order.
    """
    if len(data) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must be in (0, 1], got {alpha}")
    if not 0 <= gamma < 1:
        raise DomainError(f"gamma must be in [0, 1), got {gamma}")
    if epochs < 1:
        raise DomainError(f"epochs must be >= 1, got {epochs}")
    if update_mode not in UPDATE_MODES:
        raise DomainError(f"update_mode must be one of {UPDATE_MODES}")
    if pooled_counts and update_mode != "literal":
        raise DomainError("pooled_counts only applies to literal mode")
    batching = batching or BatchingConfig()

    bounds = batch_bounds(len(data), batching)
    count_s, count_sx, count_ysx, count_sxs = batch_counts(data, bounds)
    kernel = count_sxs.sum(axis=2, keepdims=True) if pooled_counts else count_sxs

    nS, nX = data.n_states, data.n_actions
    q_lo, q_hi = np.zeros((nS, nX)), np.zeros((nS, nX))
    snaps_lo, snaps_hi = np.empty((epochs, nS, nX)), np.empty((epochs, nS, nX))
    _pbql_epochs(count_s, count_sx, count_ysx.astype(np.float64), kernel.astype(np.float64),
                 pooled_counts, update_mode == "literal", q_lo, q_hi,
                 float(alpha), float(gamma), int(epochs), snaps_lo, snaps_hi)

    return BoundedQTable(
        q_low=q_lo, q_high=q_hi, alpha=alpha, gamma=gamma, epochs=epochs,
        batching=batching.to_dict(), update_mode=update_mode, seed=data.provenance.get("seed"),
        snapshots_low=snaps_lo if record_snapshots else None,
        snapshots_high=snaps_hi if record_snapshots else None,
        metadata={"n_records": len(data), "n_batches": len(bounds),
                  "pooled_counts": pooled_counts, "provenance": data.provenance},
    )


@dataclass(frozen=True, eq=False)
class ContainmentReport:
    contained: np.ndarray
    margin_low: np.ndarray  # truth - q_low
    margin_high: np.ndarray  # q_high - truth

    @property
    def all_contained(self) -> bool:
        return bool(self.contained.all())

    def violations(self) -> list[tuple[int, int]]:
        return [tuple(int(i) for i in ix) for ix in np.argwhere(~self.contained)]

    def to_dict(self) -> dict:
        return {"all_contained": self.all_contained, "contained": self.contained.tolist(),
                "margin_low": self.margin_low.tolist(), "margin_high": self.margin_high.tolist()}


def containment_check(table: BoundedQTable, truth: QTable | np.ndarray,
                      tol: float = 0.0) -> ContainmentReport:
    values = truth.values if isinstance(truth, QTable) else np.asarray(truth, dtype=float)
    if values.shape != table.shape:
        raise DimensionMismatch(f"truth {values.shape} vs bounds {table.shape}")
    lo = values - table.q_low
    hi = table.q_high - values
    return ContainmentReport(contained=(lo >= -tol) & (hi >= -tol), margin_low=lo, margin_high=hi)
