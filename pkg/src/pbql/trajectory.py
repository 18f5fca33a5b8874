"""Observational datasets, batching, and the empirical bound estimators."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .env import ObservationalTables
from .errors import DegenerateError, DomainError, EmptyDatasetError, MissingArtifact, UndefinedEstimate

COLUMNS = ("episode", "t", "s", "x", "y", "s_next")


@dataclass(frozen=True)
class TransitionRecord:
    episode: int
    t: int
    s: int
    x: int
    y: int
    s_next: int
    u: int | None = None


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Columnar store of transition records.

    Slicing (``data[lo:hi]``) returns another dataset sharing the arrays, which
    is what the learners treat as a batch.  ``u`` is kept for diagnostics only.
    """

    episode: np.ndarray
    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    s_next: np.ndarray
    n_states: int
    n_actions: int
    u: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.s)
        for name in COLUMNS:
            if len(getattr(self, name)) != n:
                raise DomainError(f"column {name} has inconsistent length")
        if n:
            if self.s.min() < 0 or self.s.max() >= self.n_states or \
                    self.s_next.min() < 0 or self.s_next.max() >= self.n_states:
                raise DomainError("state id out of range")
            if self.x.min() < 0 or self.x.max() >= self.n_actions:
                raise DomainError("action id out of range")
            if not np.isin(self.y, (0, 1)).all():
                raise DomainError("y must be binary")

    @classmethod
    def from_episodes(cls, arrays: dict, n_states: int, n_actions: int, *,
                      first_episode: int = 0, keep_u: bool = False,
                      provenance: dict | None = None) -> "TrajectoryDataset":
        """Flatten ``(N, T)`` arrays from :func:`pbql.env.simulate`, episode-major."""
        N, T = arrays["s"].shape
        return cls(
            episode=np.repeat(np.arange(first_episode, first_episode + N), T),
            t=np.tile(np.arange(T), N),
            s=arrays["s"].ravel(), x=arrays["x"].ravel(), y=arrays["y"].ravel(),
            s_next=arrays["s_next"].ravel(),
            n_states=n_states, n_actions=n_actions,
            u=arrays["u"].ravel() if keep_u else None,
            provenance=dict(provenance or {}),
        )

    @classmethod
    def concat(cls, parts: list["TrajectoryDataset"], provenance: dict | None = None):
        if not parts:
            raise EmptyDatasetError("nothing to concatenate")
        keep_u = all(p.u is not None for p in parts)
        return cls(
            **{c: np.concatenate([getattr(p, c) for p in parts]) for c in COLUMNS},
            n_states=parts[0].n_states, n_actions=parts[0].n_actions,
            u=np.concatenate([p.u for p in parts]) if keep_u else None,
            provenance=dict(provenance or parts[0].provenance),
        )

    @classmethod
    def from_records(cls, records, n_states: int, n_actions: int, provenance=None):
        records = list(records)
        cols = {c: np.array([getattr(r, c) for r in records], dtype=np.int64) for c in COLUMNS}
        keep_u = bool(records) and all(r.u is not None for r in records)
        u = np.array([r.u for r in records], dtype=np.int64) if keep_u else None
        return cls(**cols, n_states=n_states, n_actions=n_actions, u=u, provenance=dict(provenance or {}))

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, item: slice) -> "TrajectoryDataset":
        if not isinstance(item, slice):
            raise TypeError("datasets are sliced, not indexed; use records()")
        return TrajectoryDataset(
            **{c: getattr(self, c)[item] for c in COLUMNS},
            n_states=self.n_states, n_actions=self.n_actions,
            u=None if self.u is None else self.u[item], provenance=self.provenance,
        )

    def records(self) -> Iterator[TransitionRecord]:
        for i in range(len(self)):
            yield TransitionRecord(
                int(self.episode[i]), int(self.t[i]), int(self.s[i]), int(self.x[i]),
                int(self.y[i]), int(self.s_next[i]), None if self.u is None else int(self.u[i]))

    def is_continuous(self) -> bool:
        """Within an episode, ``s_next`` at ``t`` equals ``s`` at ``t + 1``."""
        same = (self.episode[1:] == self.episode[:-1]) & (self.t[1:] == self.t[:-1] + 1)
        return bool(np.all(self.s_next[:-1][same] == self.s[1:][same]))


# --- file formats ----------------------------------------------------------

def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def write_dataset(data: TrajectoryDataset, path: str | Path) -> None:
    """JSON Lines (or CSV for a ``.csv`` suffix) plus a ``<stem>.meta.json`` sidecar."""
    path = Path(path)
    cols = [getattr(data, c).tolist() for c in COLUMNS]
    with_u = data.u is not None
    if with_u:
        cols.append(data.u.tolist())
    names = COLUMNS + (("u",) if with_u else ())
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            w.writerows(zip(*cols))
    else:
        with open(path, "w") as fh:
            for row in zip(*cols):
                fh.write("{" + ", ".join(f'"{k}": {v}' for k, v in zip(names, row)) + "}\n")
    meta = dict(data.provenance, n_states=data.n_states, n_actions=data.n_actions,
                n_records=len(data), log_hidden=with_u)
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(path: str | Path, n_states: int | None = None,
                 n_actions: int | None = None) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"dataset not found: {path}")
    meta = {}
    if _meta_path(path).exists():
        meta = json.loads(_meta_path(path).read_text())
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    else:
        with open(path) as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise EmptyDatasetError(f"{path} holds no records")
    cols = {c: np.array([int(r[c]) for r in rows], dtype=np.int64) for c in COLUMNS}
    u = np.array([int(r["u"]) for r in rows], dtype=np.int64) if "u" in rows[0] else None
    nS = n_states or meta.get("n_states") or int(max(cols["s"].max(), cols["s_next"].max()) + 1)
    nX = n_actions or meta.get("n_actions") or int(cols["x"].max() + 1)
    provenance = {k: v for k, v in meta.items() if k not in ("n_states", "n_actions", "n_records", "log_hidden")}
    return TrajectoryDataset(**cols, n_states=nS, n_actions=nX, u=u, provenance=provenance)


# --- batching ----------------------------------------------------------------

@dataclass(frozen=True)
class BatchingConfig:
    """Exactly one of ``num_batches`` (B equal slices) or ``batch_size`` (k records each)."""

    num_batches: int | None = 1
    batch_size: int | None = None

    def __post_init__(self):
        if (self.num_batches is None) == (self.batch_size is None):
            raise DomainError("set exactly one of num_batches, batch_size")

    @classmethod
    def parse(cls, semantics: str, value: int) -> "BatchingConfig":
        if semantics in ("num-batches", "num_batches"):
            return cls(num_batches=value)
        if semantics in ("batch-size", "batch_size"):
            return cls(num_batches=None, batch_size=value)
        raise DomainError(f"unknown batch semantics {semantics!r}")

    def to_dict(self) -> dict:
        return {"num_batches": self.num_batches, "batch_size": self.batch_size}


def batch_bounds(n: int, batching: BatchingConfig) -> list[tuple[int, int]]:
    if batching.num_batches is not None:
        B = batching.num_batches
        if B <= 0 or B > n:
            raise DomainError(f"num_batches={B} invalid for {n} records")
        size = n // B
        return [(b * size, n if b == B - 1 else (b + 1) * size) for b in range(B)]
    k = batching.batch_size
    if k <= 0 or k > n:
        raise DomainError(f"batch_size={k} invalid for {n} records")
    return [(lo, min(lo + k, n)) for lo in range(0, n, k)]


def partition(data: TrajectoryDataset, batching: BatchingConfig) -> list[TrajectoryDataset]:
    return [data[lo:hi] for lo, hi in batch_bounds(len(data), batching)]


# --- estimators ----------------------------------------------------------------

def estimate_bounds(batch: TrajectoryDataset, s: int, x: int) -> tuple[float, float]:
    """Empirical natural bounds on p(y=1 | do(x), s) from one batch."""
    in_s = batch.s == s
    n_s = int(in_s.sum())
    if n_s == 0:
        raise UndefinedEstimate(f"state {s} absent from batch")
    in_sx = in_s & (batch.x == x)
    a_hat = float((in_sx & (batch.y == 1)).sum()) / n_s
    # b = a + p(x' != x | s), written so that p(x|s) = 1 gives b == a exactly
    return a_hat, a_hat + float(n_s - in_sx.sum()) / n_s


def transition_count(batch: TrajectoryDataset, s: int, x: int, s_next: int,
                     literal: bool = False) -> int:
    """Records matching ``(s, x, s_next)``; ``literal=True`` ignores the action."""
    m = (batch.s == s) & (batch.s_next == s_next)
    if not literal:
        m &= batch.x == x
    return int(m.sum())


@dataclass(frozen=True, eq=False)
class EmpiricalEstimates:
    a_hat: np.ndarray  # nan where the state is absent
    b_hat: np.ndarray
    count_s: np.ndarray
    count_sx: np.ndarray
    count_ysx: np.ndarray
    count_sxs: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.broadcast_to((self.count_s > 0)[:, None], self.a_hat.shape)


def batch_counts(data: TrajectoryDataset, bounds: list[tuple[int, int]]):
    """Per-batch counts ``(count_s[B,S], count_sx[B,S,X], count_ysx[B,S,X], count_sxs[B,S,X,S])``."""
    nS, nX, B = data.n_states, data.n_actions, len(bounds)
    sizes = np.array([hi - lo for lo, hi in bounds])
    start = bounds[0][0]
    stop = bounds[-1][1]
    bid = np.repeat(np.arange(B), sizes)
    s, x, y, sn = (a[start:stop] for a in (data.s, data.x, data.y, data.s_next))
    sx = (bid * nS + s) * nX + x
    count_s = np.bincount(bid * nS + s, minlength=B * nS).reshape(B, nS)
    count_sx = np.bincount(sx, minlength=B * nS * nX).reshape(B, nS, nX)
    count_ysx = np.bincount(sx, weights=y, minlength=B * nS * nX).reshape(B, nS, nX)
    count_sxs = np.bincount(sx * nS + sn, minlength=B * nS * nX * nS).reshape(B, nS, nX, nS)
    return count_s, count_sx, count_ysx.astype(np.int64), count_sxs


def empirical_estimates(batch: TrajectoryDataset) -> EmpiricalEstimates:
    if len(batch) == 0:
        raise EmptyDatasetError("empty batch")
    cs, csx, cysx, csxs = (c[0] for c in batch_counts(batch, [(0, len(batch))]))
    with np.errstate(invalid="ignore", divide="ignore"):
        a = cysx / cs[:, None]
        b = a + (cs[:, None] - csx) / cs[:, None]
    return EmpiricalEstimates(a_hat=a, b_hat=b, count_s=cs, count_sx=csx,
                              count_ysx=cysx, count_sxs=csxs)


def empirical_tables(batch: TrajectoryDataset) -> ObservationalTables:
    """Plug-in :class:`ObservationalTables` built from counts."""
    est = empirical_estimates(batch)
    if np.any(est.count_sx == 0):
        raise DegenerateError("some (s, x) never observed; empirical kernel undefined")
    cs = est.count_s[:, None]
    return ObservationalTables(
        p_yx=est.count_ysx / cs,
        p_x=est.count_sx / cs,
        p_next_sx=est.count_sxs / est.count_sx[..., None],
        p_next_s=est.count_sxs.sum(axis=1) / est.count_s[:, None],
    )
