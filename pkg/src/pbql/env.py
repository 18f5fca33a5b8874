"""Table-driven confounded MDP (hidden per-step confounder ``u``).

Tables are indexed ``[u][s][x]`` (behavior, reward) and ``[u][s][x][s']``
(transition).  The confounder is redrawn i.i.d. from ``p_u`` every step, so
the current state and the current ``u`` are independent.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateError, DomainError, NormalizationError
from .seeding import as_generator, config_hash, episode_rng

SUM_TOL = 1e-9

# uniform draws per step: u, behavior x, y, s'; policy draws follow
_U, _X, _Y, _S = 0, 1, 2, 3
_N_ENV_DRAWS = 4


@dataclass
class EnvironmentSpec:
    n_states: int
    n_actions: int
    n_confounders: int
    p_u: list
    p_s_init: list
    behavior_policy: list  # p(x | s, u), [u][s][x]
    reward_table: list  # p(y=1 | x, s, u), [u][s][x]
    transition_table: list  # p(s' | x, s, u), [u][s][x][s']
    horizon: int = 500
    discount: float = 0.9

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        keys = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - keys
        if unknown:
            raise DomainError(f"unknown environment fields: {sorted(unknown)}")
        missing = keys - set(d) - {"horizon", "discount"}
        if missing:
            raise DomainError(f"missing environment fields: {sorted(missing)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepOutcome:
    t: int
    s: int
    u: int
    x: int
    y: int
    s_next: int


@dataclass(frozen=True, eq=False)
class ValidatedEnvironment:
    """Immutable, validated view of an :class:`EnvironmentSpec`."""

    spec: EnvironmentSpec
    p_u: np.ndarray
    p_s_init: np.ndarray
    behavior: np.ndarray
    reward: np.ndarray
    transition: np.ndarray
    horizon: int
    discount: float
    _hash: str = field(default="", repr=False)

    @property
    def n_states(self) -> int:
        return self.p_s_init.shape[0]

    @property
    def n_actions(self) -> int:
        return self.behavior.shape[2]

    @property
    def n_confounders(self) -> int:
        return self.p_u.shape[0]

    @property
    def spec_hash(self) -> str:
        return self._hash


@dataclass(frozen=True, eq=False)
class ObservationalTables:
    """Exact observational quantities with ``u`` marginalized out.

    ``p_yx[s, x] = p(y=1, x | s)``, ``p_x[s, x] = p(x | s)``,
    ``p_next_sx[s, x, s'] = p(s' | s, x)`` and ``p_next_s[s, s'] = p(s' | s)``.
    """

    p_yx: np.ndarray
    p_x: np.ndarray
    p_next_sx: np.ndarray
    p_next_s: np.ndarray

    @property
    def p_y_given_sx(self) -> np.ndarray:
        return self.p_yx / self.p_x


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_table(name: str, arr: np.ndarray, shape: tuple, distribution: bool) -> None:
    if arr.shape != shape:
        raise DomainError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"{name} has entries outside [0, 1]")
    if distribution:
        sums = arr.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > SUM_TOL):
            raise NormalizationError(f"{name} rows do not sum to 1: {sums.ravel().tolist()}")


def validate_spec(raw: EnvironmentSpec | dict) -> ValidatedEnvironment:
    if isinstance(raw, dict):
        raw = EnvironmentSpec.from_dict(raw)
    nS, nX, nU = raw.n_states, raw.n_actions, raw.n_confounders
    for name, n in (("n_states", nS), ("n_actions", nX), ("n_confounders", nU)):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise DomainError(f"{name} must be a positive integer, got {n!r}")
    if not isinstance(raw.horizon, (int, np.integer)) or raw.horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {raw.horizon!r}")
    if not 0.0 < float(raw.discount) < 1.0:
        raise DomainError(f"discount must lie in (0, 1), got {raw.discount!r}")

    try:
        tables = {
            "p_u": np.asarray(raw.p_u, dtype=float),
            "p_s_init": np.asarray(raw.p_s_init, dtype=float),
            "behavior_policy": np.asarray(raw.behavior_policy, dtype=float),
            "reward_table": np.asarray(raw.reward_table, dtype=float),
            "transition_table": np.asarray(raw.transition_table, dtype=float),
        }
    except ValueError as exc:  # ragged nesting
        raise DomainError(f"malformed probability table: {exc}") from None

    _check_table("p_u", tables["p_u"], (nU,), True)
    _check_table("p_s_init", tables["p_s_init"], (nS,), True)
    _check_table("behavior_policy", tables["behavior_policy"], (nU, nS, nX), True)
    _check_table("reward_table", tables["reward_table"], (nU, nS, nX), False)
    _check_table("transition_table", tables["transition_table"], (nU, nS, nX, nS), True)

    return ValidatedEnvironment(
        spec=raw,
        p_u=_readonly(tables["p_u"]),
        p_s_init=_readonly(tables["p_s_init"]),
        behavior=_readonly(tables["behavior_policy"]),
        reward=_readonly(tables["reward_table"]),
        transition=_readonly(tables["transition_table"]),
        horizon=int(raw.horizon),
        discount=float(raw.discount),
        _hash=config_hash(raw.to_dict()),
    )


def load_env(path: str | Path) -> ValidatedEnvironment:
    with open(path) as fh:
        return validate_spec(json.load(fh))


def save_env(env: ValidatedEnvironment | EnvironmentSpec, path: str | Path) -> None:
    spec = env.spec if isinstance(env, ValidatedEnvironment) else env
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def drug_trial_env() -> ValidatedEnvironment:
    """The two-state drug-trial environment shipped as ``drug_trial.json``."""
    text = resources.files("pbql.data").joinpath("drug_trial.json").read_text()
    return validate_spec(json.loads(text))


def random_environment(seed=None, n_states: int = 2, n_actions: int = 2,
                       n_confounders: int = 2, min_behavior: float = 0.05,
                       horizon: int = 500, discount: float = 0.9) -> ValidatedEnvironment:
    """Random valid environment; every behavior probability is at least ``min_behavior``."""
    rng = as_generator(seed)
    nS, nX, nU = n_states, n_actions, n_confounders

    def simplex(*shape):
        return rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])

    behavior = min_behavior + (1 - nX * min_behavior) * simplex(nU, nS, nX)
    spec = EnvironmentSpec(
        n_states=nS, n_actions=nX, n_confounders=nU,
        p_u=rng.dirichlet(np.ones(nU)).tolist(),
        p_s_init=rng.dirichlet(np.ones(nS)).tolist(),
        behavior_policy=behavior.tolist(),
        reward_table=rng.uniform(size=(nU, nS, nX)).tolist(),
        transition_table=simplex(nU, nS, nX, nS).tolist(),
        horizon=horizon, discount=discount,
    )
    return validate_spec(_renormalize(spec))


def _renormalize(spec: EnvironmentSpec) -> EnvironmentSpec:
    # tolist() round trips can leave rows 1 ulp off; fold the residue into the last entry
    def fix(rows):
        a = np.asarray(rows, dtype=float)
        a[..., -1] = 1.0 - a[..., :-1].sum(axis=-1)
        return np.clip(a, 0.0, 1.0).tolist()

    spec.p_u = fix(spec.p_u)
    spec.p_s_init = fix(spec.p_s_init)
    spec.behavior_policy = fix(spec.behavior_policy)
    spec.transition_table = fix(spec.transition_table)
    return spec


def observational_conditionals(env: ValidatedEnvironment,
                               allow_degenerate: bool = False) -> ObservationalTables:
    """Raises :class:`DegenerateError` when some ``p(x | s) = 0`` unless
    ``allow_degenerate``, in which case those kernel rows are NaN."""
    pu = env.p_u
    joint_x = np.einsum("u,usx->sx", pu, env.behavior)
    if np.any(joint_x <= 0) and not allow_degenerate:
        s, x = np.argwhere(joint_x <= 0)[0]
        raise DegenerateError(f"p(x={x} | s={s}) = 0; conditional transition undefined")
    p_yx = np.einsum("u,usx,usx->sx", pu, env.behavior, env.reward)
    joint_next = np.einsum("u,usx,usxk->sxk", pu, env.behavior, env.transition)
    return ObservationalTables(
        p_yx=_readonly(p_yx),
        p_x=_readonly(joint_x),
        p_next_sx=_readonly(np.divide(joint_next, joint_x[..., None],
                                      out=np.full_like(joint_next, np.nan),
                                      where=joint_x[..., None] > 0)),
        p_next_s=_readonly(joint_next.sum(axis=1)),
    )


# --- sampling -------------------------------------------------------------

def _inverse_cdf(cdf: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Row-wise categorical sampling; ``cdf`` is (N, K), ``draws`` is (N,)."""
    idx = (cdf < draws[:, None]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def n_draws(env: ValidatedEnvironment) -> int:
    return _N_ENV_DRAWS + env.n_actions


def episode_draws(env: ValidatedEnvironment, rng: np.random.Generator, horizon: int):
    """One episode's uniforms: the initial-state draw and a (horizon, K) block."""
    return rng.random(), rng.random((horizon, n_draws(env)))


def simulate(env: ValidatedEnvironment, init_draws: np.ndarray, draws: np.ndarray,
             policy=None) -> dict:
    """Vectorized simulation of ``N`` episodes from pre-drawn uniforms.

    ``policy=None`` samples actions from the behavior policy (observational
    mode).  Otherwise ``policy.select(s, uniforms)`` chooses actions from the
    state alone, which is the do() intervention.
    """
    N, T, _ = draws.shape
    cdf_u = np.cumsum(env.p_u)
    cdf_s0 = np.cumsum(env.p_s_init)
    cdf_b = np.cumsum(env.behavior, axis=-1)
    cdf_t = np.cumsum(env.transition, axis=-1)
    out = {k: np.empty((N, T), dtype=np.int64) for k in ("s", "u", "x", "y", "s_next")}
    s = _inverse_cdf(np.broadcast_to(cdf_s0, (N, cdf_s0.size)), init_draws)
    for t in range(T):
        d = draws[:, t]
        u = _inverse_cdf(np.broadcast_to(cdf_u, (N, cdf_u.size)), d[:, _U])
        if policy is None:
            x = _inverse_cdf(cdf_b[u, s], d[:, _X])
        else:
            x = np.asarray(policy.select(s, d[:, _N_ENV_DRAWS:]), dtype=np.int64)
        y = (d[:, _Y] < env.reward[u, s, x]).astype(np.int64)
        s_next = _inverse_cdf(cdf_t[u, s, x], d[:, _S])
        out["s"][:, t], out["u"][:, t], out["x"][:, t] = s, u, x
        out["y"][:, t], out["s_next"][:, t] = y, s_next
        s = s_next
    return out


def sample_episodes(env: ValidatedEnvironment, policy=None, *, master_seed: int = 0,
                    label: str = "gen", episodes: int = 1, horizon: int | None = None,
                    start: int = 0, chunk: int = 1000):
    """Yield ``(first_episode_index, arrays)`` chunks; episode ``i`` uses seed ``(master, label, i)``."""
    T = env.horizon if horizon is None else int(horizon)
    if T < 1:
        raise DomainError("horizon must be >= 1")
    for lo in range(start, start + episodes, chunk):
        hi = min(lo + chunk, start + episodes)
        init = np.empty(hi - lo)
        block = np.empty((hi - lo, T, n_draws(env)))
        for j, i in enumerate(range(lo, hi)):
            init[j], block[j] = episode_draws(env, episode_rng(master_seed, label, i), T)
        yield lo, simulate(env, init, block, policy)


def sample_episode(env: ValidatedEnvironment, policy=None, seed=0,
                   horizon: int | None = None) -> list[StepOutcome]:
    T = env.horizon if horizon is None else int(horizon)
    if T < 1:
        raise DomainError("horizon must be >= 1")
    s0, block = episode_draws(env, as_generator(seed), T)
    arr = simulate(env, np.array([s0]), block[None], policy)
    return [
        StepOutcome(t=t, s=int(arr["s"][0, t]), u=int(arr["u"][0, t]), x=int(arr["x"][0, t]),
                    y=int(arr["y"][0, t]), s_next=int(arr["s_next"][0, t]))
        for t in range(T)
    ]
