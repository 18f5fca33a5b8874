"""Ground-truth computations that need the full environment tables.

Nothing here is visible to the learners; these are the references the
learned tables are checked against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ObservationalTables, ValidatedEnvironment, observational_conditionals
from .errors import DomainError, InfeasibleObservation, NonConvergence
from .vanilla_q import QTable

_FEAS_TOL = 1e-12


def value_iteration(reward: np.ndarray, kernel: np.ndarray, gamma: float,
                    tol: float = 1e-10, max_iter: int = 100_000) -> tuple[np.ndarray, int]:
    """Optimal Q of the MDP with ``reward[s, x]`` and ``kernel[s, x, s']``.

    Stops once one more backup moves no entry by more than ``tol``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not 0 <= gamma < 1:
        raise DomainError(f"gamma must be in [0, 1), got {gamma}")
    q = np.zeros_like(reward, dtype=float)
    for it in range(1, max_iter + 1):
        q_new = reward + gamma * kernel @ q.max(axis=1)
        delta = np.abs(q_new - q).max()
        q = q_new
        if delta <= tol:
            return q, it
    raise NonConvergence(f"value iteration did not reach tol={tol} in {max_iter} sweeps")


def interventional_tables(env: ValidatedEnvironment) -> tuple[np.ndarray, np.ndarray]:
    """``p(y=1 | do(x), s)`` and ``p(s' | do(x), s)`` with ``u`` marginalized."""
    reward = np.einsum("u,usx->sx", env.p_u, env.reward)
    kernel = np.einsum("u,usxk->sxk", env.p_u, env.transition)
    return reward, kernel


def optimal_q(env: ValidatedEnvironment, gamma: float | None = None,
              tol: float = 1e-10, max_iter: int = 100_000) -> QTable:
    """Q* under intervention, with the i.i.d. confounder averaged out each step."""
    gamma = env.discount if gamma is None else gamma
    reward, kernel = interventional_tables(env)
    q, iters = value_iteration(reward, kernel, gamma, tol, max_iter)
    return QTable(values=q, gamma=gamma, metadata={"source": "optimal_q", "iterations": iters, "tol": tol})


def confounded_q(obs: ObservationalTables | ValidatedEnvironment, gamma: float,
                 tol: float = 1e-10, max_iter: int = 100_000) -> QTable:
    """Fixed point of Q-learning on observational data: rewards p(y=1|x,s), kernel p(s'|s,x)."""
    if isinstance(obs, ValidatedEnvironment):
        obs = observational_conditionals(obs)
    q, iters = value_iteration(obs.p_y_given_sx, obs.p_next_sx, gamma, tol, max_iter)
    return QTable(values=q, gamma=gamma, metadata={"source": "confounded_q", "iterations": iters, "tol": tol})


def natural_bounds_closed_form(obs: ObservationalTables | ValidatedEnvironment) -> tuple[np.ndarray, np.ndarray]:
    """``a = p(y=1, x | s)`` and ``b = 1 + p(y=1, x | s) - p(x | s)``, both indexed ``[s, x]``."""
    if isinstance(obs, ValidatedEnvironment):
        obs = observational_conditionals(obs, allow_degenerate=True)
    return np.array(obs.p_yx), obs.p_yx + (1.0 - obs.p_x)


def bound_fixed_points(obs: ObservationalTables | ValidatedEnvironment, gamma: float,
                       tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Fixed points that expected-mode PBQL converges to on infinite data."""
    if isinstance(obs, ValidatedEnvironment):
        obs = observational_conditionals(obs)
    a, b = natural_bounds_closed_form(obs)
    q_lo, _ = value_iteration(a, obs.p_next_sx, gamma, tol)
    q_hi, _ = value_iteration(b, obs.p_next_sx, gamma, tol)
    return q_lo, q_hi


def fixed_confounder_q(env: ValidatedEnvironment, gamma: float | None = None,
                       continuation_action: int = 0) -> np.ndarray:
    """One-step closed form that freezes ``u`` and plays a fixed action afterwards.

    ``Q[s, x] = sum_u R(s,x,u) + gamma * sum_s' p(s'|x,s,u) R(s',k,u) / (1 - gamma)``
    with ``R(s,x,u) = p(y=1|x,s,u) p(u)``.  Not a Bellman fixed point; kept for
    audit output next to :func:`optimal_q`.
    """
    gamma = env.discount if gamma is None else gamma
    R = env.reward * env.p_u[:, None, None]  # [u, s, x]
    cont = R[:, :, continuation_action] / (1 - gamma)  # [u, s']
    return np.einsum("usx->sx", R) + gamma * np.einsum("usxk,uk->sx", env.transition, cont)


def audit_table(env: ValidatedEnvironment, gamma: float | None = None) -> dict:
    """Q* alongside alternative evaluations that are sometimes quoted for this model."""
    gamma = env.discount if gamma is None else gamma
    reward, kernel = interventional_tables(env)
    qstar = optimal_q(env, gamma).values
    v = qstar.max(axis=1)
    uniform_next = reward + gamma * np.full_like(reward, v.mean())
    return {
        "optimal_q_value_iteration": qstar.tolist(),
        "fixed_confounder_closed_form": fixed_confounder_q(env, gamma).tolist(),
        "uniform_next_state_backup": uniform_next.tolist(),
        "note": "value iteration is authoritative; other rows are alternative evaluations for comparison",
    }


# --- non-identifiability by enumeration ------------------------------------

@dataclass(frozen=True)
class ScmRange:
    low: float
    high: float
    witness_low: dict
    witness_high: dict
    n_feasible: int

    @property
    def width(self) -> float:
        return self.high - self.low

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "n_feasible": self.n_feasible,
                "witness_pair": [self.witness_low, self.witness_high]}


def _witness(pi, c0, c1, q0, q1) -> dict:
    p_u = [1 - pi, pi]
    return {
        "p_u": p_u,
        "p_x_given_u": [c0, c1],
        "p_y_given_x_u": [q0, q1],
        "observational": {"p_x": p_u[0] * c0 + p_u[1] * c1,
                          "p_yx": p_u[0] * c0 * q0 + p_u[1] * c1 * q1},
        "interventional": p_u[0] * q0 + p_u[1] * q1,
    }


def enumerate_cell(p_x: float, p_yx: float, grid: int = 101,
                   latent: tuple[np.ndarray, np.ndarray] | None = None) -> ScmRange:
    """Range of ``p(y=1 | do(x), s)`` over binary-confounder SCMs reproducing ``(p_x, p_yx)``.

    Grid axes are ``p(u=1)``, ``p(x | s, u=1)`` and ``p(y=1 | x, s, u=1)``;
    the ``u=0`` quantities are solved from the observational constraints so the
    match is exact.  ``latent=(p_u, p_x_given_u)`` holds the first two fixed.
    """
    if grid < 11:
        raise DomainError("grid must have at least 11 points")
    g = np.linspace(0.0, 1.0, grid)
    if latent is None:
        pi, c1, q1 = (a.ravel() for a in np.meshgrid(g, g, g, indexing="ij"))
    else:
        p_u, p_x_u = (np.asarray(a, dtype=float) for a in latent)
        if p_u.shape != (2,) or p_x_u.shape != (2,):
            raise DomainError("enumeration supports a binary confounder only")
        pi = np.full(grid, p_u[1])
        c1 = np.full(grid, p_x_u[1])
        q1 = g.copy()

    with np.errstate(divide="ignore", invalid="ignore"):
        if latent is None:
            c0 = np.where(pi < 1, (p_x - pi * c1) / (1 - pi), p_x)
        else:
            c0 = np.full(grid, p_x_u[0])
        ok_latent = (c0 >= -_FEAS_TOL) & (c0 <= 1 + _FEAS_TOL)
        ok_latent &= np.abs((1 - pi) * c0 + pi * c1 - p_x) <= 1e-9
        c0 = np.clip(c0, 0.0, 1.0)
        w0, w1 = (1 - pi) * c0, pi * c1
        q0 = (p_yx - w1 * q1) / w0

    regular = ok_latent & (w0 > _FEAS_TOL) & (q0 >= -_FEAS_TOL) & (q0 <= 1 + _FEAS_TOL)
    # w0 = 0 leaves p(y|x,u=0) unconstrained; its extremes are 0 and 1
    free = ok_latent & (w0 <= _FEAS_TOL) & (np.abs(w1 * q1 - p_yx) <= 1e-9)

    cand_v, cand_ix, cand_q0 = [], [], []
    if regular.any():
        q0r = np.clip(q0[regular], 0.0, 1.0)
        cand_v.append((1 - pi[regular]) * q0r + pi[regular] * q1[regular])
        cand_ix.append(np.flatnonzero(regular))
        cand_q0.append(q0r)
    for extreme in (0.0, 1.0):
        if free.any():
            cand_v.append((1 - pi[free]) * extreme + pi[free] * q1[free])
            cand_ix.append(np.flatnonzero(free))
            cand_q0.append(np.full(free.sum(), extreme))
    if not cand_v:
        raise InfeasibleObservation(f"no SCM on the grid reproduces p_x={p_x}, p_yx={p_yx}")
    v = np.concatenate(cand_v)
    ix = np.concatenate(cand_ix)
    q0c = np.concatenate(cand_q0)
    lo, hi = int(np.argmin(v)), int(np.argmax(v))

    def wit(k):
        i = ix[k]
        return _witness(float(pi[i]), float(c0[i]), float(c1[i]), float(q0c[k]), float(q1[i]))

    return ScmRange(low=float(v[lo]), high=float(v[hi]), witness_low=wit(lo),
                    witness_high=wit(hi), n_feasible=int(regular.sum() + 2 * free.sum()))


def enumerate_compatible_scms(obs: ObservationalTables | ValidatedEnvironment,
                              grid: int = 101) -> dict[tuple[int, int], ScmRange]:
    """Attainable interventional range for every ``(s, x)``."""
    if isinstance(obs, ValidatedEnvironment):
        obs = observational_conditionals(obs, allow_degenerate=True)
    nS, nX = obs.p_x.shape
    return {(s, x): enumerate_cell(float(obs.p_x[s, x]), float(obs.p_yx[s, x]), grid)
            for s in range(nS) for x in range(nX)}


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    a: np.ndarray
    b: np.ndarray
    truth: np.ndarray
    ranges: dict
    grid: int

    @property
    def grid_step(self) -> float:
        return 1.0 / (self.grid - 1)

    def truth_inside(self) -> bool:
        return bool(np.all((self.a <= self.truth + 1e-12) & (self.truth <= self.b + 1e-12)))

    def ranges_inside(self) -> bool:
        eps = self.grid_step
        return all(self.a[k] - eps <= r.low and r.high <= self.b[k] + eps for k, r in self.ranges.items())

    def endpoints_sharp(self) -> bool:
        eps = self.grid_step
        return all(abs(r.low - self.a[k]) <= eps and abs(r.high - self.b[k]) <= eps
                   for k, r in self.ranges.items())

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "cells": [
                {"s": s, "x": x, "a": float(self.a[s, x]), "b": float(self.b[s, x]),
                 "truth": float(self.truth[s, x]), **r.to_dict()}
                for (s, x), r in sorted(self.ranges.items())
            ],
            "truth_inside": self.truth_inside(),
            "ranges_inside": self.ranges_inside(),
            "endpoints_sharp": self.endpoints_sharp(),
        }


def bound_certificate(env: ValidatedEnvironment, grid: int = 101) -> BoundCertificate:
    obs = observational_conditionals(env, allow_degenerate=True)
    a, b = natural_bounds_closed_form(obs)
    truth, _ = interventional_tables(env)
    return BoundCertificate(a=a, b=b, truth=truth, ranges=enumerate_compatible_scms(obs, grid), grid=grid)
