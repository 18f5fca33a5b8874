"""Command line entry point: ``pbql {gen,train,eval,oracle,bounds,report}``.

Exit status is 0 on success, 1 on invalid input, 2 on I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .errors import ValidationError

log = logging.getLogger("pbql")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="ExperimentConfig JSON")
    p.add_argument("--out", metavar="DIR", help="run directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--env", metavar="PATH", help="environment spec JSON (default: packaged drug-trial env)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--pbql-epochs", type=int)
    p.add_argument("--eval-episodes", type=int)
    p.add_argument("--batch-semantics", choices=["num-batches", "batch-size"])
    p.add_argument("--batch-value", type=int, help="B for num-batches, k for batch-size")
    p.add_argument("--update-mode", choices=["expected", "literal"])
    p.add_argument("--log-hidden", action="store_true", default=None,
                   help="keep the confounder u in the dataset (diagnostics only)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pbql", description="Offline RL on confounded MDPs: data, learners, oracles, evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(sub.add_parser("gen", help="sample an observational dataset"))
    p = sub.add_parser("train", help="fit vanilla Q-learning or PBQL")
    _common(p)
    p.add_argument("--algo", choices=["q", "pbql"], required=True)
    p = sub.add_parser("eval", help="interventional rollouts of a policy")
    _common(p)
    p.add_argument("--mode", required=True, help="greedy | thompson | optimal | fixed:K")
    p.add_argument("--policy", metavar="PATH", help="table file (default: from the run directory)")
    _common(sub.add_parser("oracle", help="ground-truth Q tables"))
    p = sub.add_parser("bounds", help="natural bounds and SCM enumeration certificate")
    _common(p)
    p.add_argument("--grid", type=int, default=101)
    p = sub.add_parser("report", help="figure CSVs from a run directory")
    p.add_argument("run_dir", nargs="?", help="run directory (default: --out or config out_dir)")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    return parser


def resolve_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return cfg.with_overrides(
        out_dir=get("out"), seed=get("seed"), env_path=get("env"), episodes=get("episodes"),
        horizon=get("horizon"), gamma=get("gamma"), alpha=get("alpha"), epochs=get("epochs"),
        pbql_epochs=get("pbql_epochs"), eval_episodes=get("eval_episodes"),
        batch_semantics=get("batch_semantics"), batch_value=get("batch_value"),
        update_mode=get("update_mode"), log_hidden=get("log_hidden"),
    )


def run(args) -> str:
    if args.command == "report":
        run_dir = args.run_dir or args.out or resolve_config(args).out_dir
        return "\n".join(str(p) for p in ex.cmd_report(run_dir))
    cfg = resolve_config(args)
    if args.command == "gen":
        return str(ex.cmd_gen(cfg))
    if args.command == "train":
        return str(ex.cmd_train(cfg, args.algo))
    if args.command == "eval":
        return str(ex.cmd_eval(cfg, args.mode, args.policy))
    if args.command == "oracle":
        return str(ex.cmd_oracle(cfg))
    if args.command == "bounds":
        return str(ex.cmd_bounds(cfg, args.grid))
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        print(run(args))
    except ValidationError as exc:
        print(f"pbql: invalid input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"pbql: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
