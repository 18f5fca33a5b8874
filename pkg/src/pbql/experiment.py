"""End-to-end experiment pipeline: generate, train, evaluate, oracle, bounds, report.

Every stage reads and writes files in one run directory:

    config.json            resolved ExperimentConfig
    dataset.jsonl          observational records (+ dataset.meta.json)
    q_table.json           vanilla Q-learning table
    pbql_table.json        lower/upper tables
    eval_<mode>.csv/.json  per-episode returns and rollout summary
    oracle.json            Q*, confounded fixed point, bound fixed points
    bounds.json            natural bounds, enumeration certificate, empirical estimates
    figures/*.csv          learning curves, return histograms, cumulative reward
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .env import ValidatedEnvironment, load_env, observational_conditionals, drug_trial_env, sample_episodes
from .errors import DegenerateError, DomainError, MissingArtifact
from .oracles import (audit_table, bound_certificate, bound_fixed_points, confounded_q,
                      natural_bounds_closed_form, optimal_q)
from .pbql import BoundedQTable, containment_check, train_pbql
from .planning import RolloutReport, regret, rollout
from .seeding import config_hash
from .trajectory import BatchingConfig, TrajectoryDataset, empirical_estimates, read_dataset, write_dataset
from .vanilla_q import QTable, greedy_policy, train_q


@dataclass(frozen=True)
class ExperimentConfig:
    env_path: str | None = None  # None: the packaged two-state drug-trial environment
    episodes: int = 1000
    horizon: int = 500
    gamma: float = 0.9
    alpha: float = 0.05
    epochs: int = 500
    pbql_epochs: int = 5000
    batch_semantics: str = "num-batches"
    batch_value: int = 1
    update_mode: str = "expected"
    average_final_epoch: bool = True
    eval_episodes: int = 5000
    seed: int = 0
    out_dir: str = "runs/default"
    log_hidden: bool = False

    def __post_init__(self):
        for name in ("episodes", "horizon", "epochs", "pbql_epochs", "batch_value", "eval_episodes"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.update_mode not in ("expected", "literal"):
            raise DomainError(f"unknown update_mode {self.update_mode!r}")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        self.batching  # validates semantics

    @property
    def batching(self) -> BatchingConfig:
        return BatchingConfig.parse(self.batch_semantics, self.batch_value)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return config_hash(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        if not Path(path).exists():
            raise MissingArtifact(f"config not found: {path}")
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_environment(cfg: ExperimentConfig) -> ValidatedEnvironment:
    return drug_trial_env() if cfg.env_path is None else load_env(cfg.env_path)


def _provenance(cfg: ExperimentConfig, env: ValidatedEnvironment) -> dict:
    return {"config_hash": cfg.hash, "seed": cfg.seed, "env_hash": env.spec_hash}


def _dump(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")
    return path


def _write_config(cfg: ExperimentConfig) -> None:
    _dump(cfg.out / "config.json", cfg.to_dict())


# --- stages ---------------------------------------------------------------------

def generate(cfg: ExperimentConfig, env: ValidatedEnvironment | None = None) -> TrajectoryDataset:
    env = env or load_environment(cfg)
    prov = dict(_provenance(cfg, env), episodes=cfg.episodes, horizon=cfg.horizon)
    parts = [
        TrajectoryDataset.from_episodes(arr, env.n_states, env.n_actions, first_episode=lo,
                                        keep_u=cfg.log_hidden, provenance=prov)
        for lo, arr in sample_episodes(env, None, master_seed=cfg.seed, label="gen",
                                       episodes=cfg.episodes, horizon=cfg.horizon)
    ]
    return TrajectoryDataset.concat(parts, provenance=prov)


def cmd_gen(cfg: ExperimentConfig) -> Path:
    data = generate(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg)
    path = cfg.out / "dataset.jsonl"
    write_dataset(data, path)
    return path


def _dataset(cfg: ExperimentConfig) -> TrajectoryDataset:
    return read_dataset(cfg.out / "dataset.jsonl")


def train(cfg: ExperimentConfig, data: TrajectoryDataset, algo: str):
    if algo == "q":
        table = train_q(data, cfg.alpha, cfg.gamma, cfg.epochs,
                        average_final_epoch=cfg.average_final_epoch)
    elif algo == "pbql":
        table = train_pbql(data, cfg.alpha, cfg.gamma, cfg.pbql_epochs, cfg.batching, cfg.update_mode)
    else:
        raise DomainError(f"unknown algo {algo!r}")
    table.seed = cfg.seed
    table.metadata["config_hash"] = cfg.hash
    return table


TABLE_FILES = {"q": "q_table.json", "pbql": "pbql_table.json"}


def cmd_train(cfg: ExperimentConfig, algo: str) -> Path:
    table = train(cfg, _dataset(cfg), algo)
    path = cfg.out / TABLE_FILES[algo]
    table.save(path)
    return path


def parse_mode(mode: str) -> tuple[str, int | None]:
    if mode in ("greedy", "thompson", "optimal"):
        return mode, None
    if mode.startswith("fixed:"):
        try:
            return "fixed", int(mode.split(":", 1)[1])
        except ValueError:
            pass
    raise DomainError(f"unknown eval mode {mode!r}; use greedy, thompson, optimal or fixed:K")


def mode_label(mode: str) -> str:
    kind, k = parse_mode(mode)
    return f"fixed{k}" if kind == "fixed" else kind


def resolve_policy(cfg: ExperimentConfig, mode: str, policy_path: str | Path | None = None):
    kind, k = parse_mode(mode)
    if kind == "optimal":
        return "optimal"
    if kind == "fixed":
        return k
    if kind == "greedy":
        return QTable.load(policy_path or cfg.out / TABLE_FILES["q"])
    return BoundedQTable.load(policy_path or cfg.out / TABLE_FILES["pbql"])


def evaluate(cfg: ExperimentConfig, mode: str, policy_source=None,
             env: ValidatedEnvironment | None = None) -> RolloutReport:
    env = env or load_environment(cfg)
    policy = resolve_policy(cfg, mode) if policy_source is None else policy_source
    report = rollout(env, policy, cfg.eval_episodes, cfg.horizon, cfg.gamma, cfg.seed,
                     policy_name=mode_label(mode))
    report.metadata.update(config_hash=cfg.hash)
    return report


def cmd_eval(cfg: ExperimentConfig, mode: str, policy_path: str | Path | None = None) -> Path:
    env = load_environment(cfg)
    report = evaluate(cfg, mode, resolve_policy(cfg, mode, policy_path), env)
    if parse_mode(mode)[0] != "optimal":
        ref = evaluate(cfg, "optimal", env=env)
        report.metadata["regret_vs_optimal"] = regret(report, ref).to_dict()
    csv_path, _ = report.write(cfg.out / f"eval_{mode_label(mode)}")
    return csv_path


def oracle_summary(cfg: ExperimentConfig, env: ValidatedEnvironment | None = None) -> dict:
    env = env or load_environment(cfg)
    qstar = optimal_q(env, cfg.gamma)
    out = {
        **_provenance(cfg, env),
        "gamma": cfg.gamma,
        "optimal_q": qstar.values.tolist(),
        "optimal_policy": greedy_policy(qstar).actions.tolist(),
        "audit": audit_table(env, cfg.gamma),
    }
    try:
        obs = observational_conditionals(env)
    except DegenerateError:
        return out
    q_lo, q_hi = bound_fixed_points(obs, cfg.gamma)
    out.update(
        confounded_q=confounded_q(obs, cfg.gamma).values.tolist(),
        bound_fixed_points={"q_low": q_lo.tolist(), "q_high": q_hi.tolist()},
        containment=containment_check(BoundedQTable(q_lo, q_hi), qstar).to_dict(),
    )
    return out


def cmd_oracle(cfg: ExperimentConfig) -> Path:
    return _dump(cfg.out / "oracle.json", oracle_summary(cfg))


def cmd_bounds(cfg: ExperimentConfig, grid: int = 101) -> Path:
    env = load_environment(cfg)
    a, b = natural_bounds_closed_form(env)
    out = {**_provenance(cfg, env), "a": a.tolist(), "b": b.tolist(),
           "certificate": bound_certificate(env, grid).to_dict()}
    ds_path = cfg.out / "dataset.jsonl"
    if ds_path.exists():
        est = empirical_estimates(read_dataset(ds_path))
        out["empirical"] = {"a_hat": est.a_hat.tolist(), "b_hat": est.b_hat.tolist(),
                            "count_s": est.count_s.tolist(), "count_sx": est.count_sx.tolist()}
    return _dump(cfg.out / "bounds.json", out)


# --- figure data ----------------------------------------------------------------

LEARNING_CURVE_HEADER = ["algo", "table", "epoch", "s", "x", "value"]
N_HIST_BINS = 50


def _learning_curve_rows(run: Path):
    if (run / TABLE_FILES["q"]).exists():
        q = QTable.load(run / TABLE_FILES["q"])
        if q.snapshots is not None:
            yield from _snapshot_rows("q", "q", q.snapshots)
    if (run / TABLE_FILES["pbql"]).exists():
        t = BoundedQTable.load(run / TABLE_FILES["pbql"])
        if t.snapshots_low is not None:
            yield from _snapshot_rows("pbql", "q_low", t.snapshots_low)
            yield from _snapshot_rows("pbql", "q_high", t.snapshots_high)


def _snapshot_rows(algo, table, snaps):
    E, S, X = snaps.shape
    for e in range(E):
        for s in range(S):
            for x in range(X):
                yield [algo, table, e + 1, s, x, repr(float(snaps[e, s, x]))]


def cmd_report(run_dir: str | Path) -> list[Path]:
    """Figure-ready CSVs; needs at least one trained table and one evaluation."""
    run = Path(run_dir)
    tables = [run / f for f in TABLE_FILES.values() if (run / f).exists()]
    evals = sorted(run.glob("eval_*.json"))
    missing = []
    if not tables:
        missing.append("q_table.json or pbql_table.json")
    if not evals:
        missing.append("eval_<mode>.json")
    if missing:
        raise MissingArtifact(f"{run}: missing {', '.join(missing)}")

    fig = run / "figures"
    fig.mkdir(exist_ok=True)
    lc = fig / "learning_curve.csv"
    with open(lc, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEARNING_CURVE_HEADER)
        w.writerows(_learning_curve_rows(run))

    reports = {p.stem[len("eval_"):]: RolloutReport.read(p.with_suffix("")) for p in evals}
    names = list(reports)
    first = reports[names[0]]
    top = (1 - first.gamma ** first.horizon) / (1 - first.gamma)
    edges = np.linspace(0.0, top, N_HIST_BINS + 1)
    hist = fig / "return_histogram.csv"
    with open(hist, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", *names])
        counts = [np.histogram(reports[n].returns, bins=edges)[0] for n in names]
        for i in range(N_HIST_BINS):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), *(int(c[i]) for c in counts)])

    cum = fig / "cumulative_reward.csv"
    regret_cols = [n for n in names if n != "optimal"] if "optimal" in reports else []
    with open(cum, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names, *(f"regret_{n}" for n in regret_cols)])
        curves = {n: reports[n].cumulative_mean for n in names}
        T = min(len(c) for c in curves.values())
        for t in range(T):
            row = [t, *(repr(float(curves[n][t])) for n in names)]
            row += [repr(float(curves["optimal"][t] - curves[n][t])) for n in regret_cols]
            w.writerow(row)
    return [lc, hist, cum]
