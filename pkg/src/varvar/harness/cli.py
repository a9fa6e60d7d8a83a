"""Command line entry point: ``varvar {toy,regress,vae,summarize}``."""
import argparse
import json
import sys

from .experiment import ConfigError, ExperimentConfig, run_experiment, summarize

DEFAULT_METHODS = {
    "toy": [{"model": "normal"}, {"model": "student"}]
    + [{"model": "variational", "prior": p} for p in ("VAP", "Standard", "VAMP", "VAMP*", "xVAMP", "xVAMP*", "VBEM", "VBEM*")],
    "uci": [{"model": "normal"}, {"model": "student"}]
    + [{"model": "variational", "prior": p} for p in ("VAP", "Standard", "VAMP", "VAMP*", "xVAMP", "xVAMP*", "VBEM", "VBEM*")],
    "vae": [{"model": "fixed", "fixed_variance": 1.0}, {"model": "vae"}, {"model": "vae", "batch_norm": True},
            {"model": "vae_split"}, {"model": "student"}, {"model": "map"},
            {"model": "v3ae", "prior": "Standard"}, {"model": "v3ae", "prior": "VAMP"}],
}


def build_parser():
    parser = argparse.ArgumentParser(prog="varvar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("toy", "heteroscedastic toy regression"),
                        ("regress", "regression on a numeric CSV"),
                        ("vae", "image VAEs")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="experiment JSON (see configs/)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--trials", type=int, help="number of trials (overrides config)")
        p.add_argument("--workers", type=int, help="parallel trial workers (overrides config)")
        p.add_argument("--out", help="results directory (overrides config)")
    p = sub.add_parser("summarize", help="aggregate existing trial JSON into CSV tables")
    p.add_argument("--out", default="results")
    p.add_argument("--task", choices=("toy", "uci", "regress", "vae"))
    return parser


def load_config(args):
    task = {"regress": "uci"}.get(args.command, args.command)
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    raw.setdefault("task", task)
    if {"regress": "uci"}.get(raw["task"], raw["task"]) != task:
        raise ConfigError(f"config task {raw['task']!r} does not match subcommand {args.command!r}")
    raw.setdefault("methods", DEFAULT_METHODS[task])
    for key in ("seed", "trials", "workers", "out"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "summarize":
            for path in summarize(args.out, args.task):
                print(path)
            return 0
        config = load_config(args)
        results = run_experiment(config)
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    failed = [p for p, status in results if status != "ok"]
    for path, status in results:
        print(f"{status:6s} {path}")
    if failed:
        print(f"{len(failed)} of {len(results)} trials failed", file=sys.stderr)
    return 1 if len(failed) == len(results) else 0


if __name__ == "__main__":
    sys.exit(main())
