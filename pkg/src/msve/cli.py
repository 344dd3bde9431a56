"""Command-line entry point.

Subcommands drive pretraining, fine-tuning, checkpoint evaluation and
multi-run comparison.  All outputs land under the run directory, which
always receives a copy of the fully resolved configuration.

Exit codes: 0 success, 2 invalid configuration, 3 numeric abort.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import seeding
from .config import RunConfig
from .entropy import batch_entropies
from .errors import ConfigError, MsveError, NumericError
from .finetune import finetune_run
from .metrics import VisitGrid, coverage
from .policy import GaussianPolicy
from .pretrain import STRATEGIES, run_pretrain
from .rollout import rollout_batch

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="TOML config file (defaults used if omitted)")
    parser.add_argument("--seed", type=int, metavar="N")
    parser.add_argument("--out", metavar="DIR", help="run output directory")
    parser.add_argument("--workers", type=int, metavar="N", help="rollout parallelism (default 1)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override any config field, e.g. --set pretrain.model_epochs=4",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="run exploration pretraining")
    _add_common(p)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--dynamic-alpha", action="store_true", default=None)
    p.add_argument("--kl-threshold", type=float, metavar="F")
    p.add_argument("--curiosity", type=float, metavar="F",
                   help="curiosity reward weight; 0 disables the intrinsic term")
    p.add_argument("--alpha-percentile", type=int, metavar="N")
    p.add_argument("--epochs", type=int, metavar="N")
    p.add_argument("--batch", type=int, metavar="N")

    f = sub.add_parser("finetune", help="fine-tune a pretrained policy on random goals")
    _add_common(f)
    f.add_argument("checkpoint", help="policy checkpoint produced by pretraining")
    f.add_argument("--goals", type=int, metavar="N")
    f.add_argument("--epochs", type=int, metavar="N", help="total epochs across all goals")
    f.add_argument("--kl-threshold", type=float, metavar="F")

    e = sub.add_parser("eval", help="mean batch entropy and coverage of a checkpoint")
    _add_common(e)
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=20, metavar="N")

    c = sub.add_parser("compare", help="merge per-epoch mean entropies of several runs")
    c.add_argument("run_dirs", nargs="+", metavar="DIR")
    c.add_argument("--out", metavar="FILE", help="write the merged CSV here instead of stdout")

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    flag_map = {
        "seed": "run.seed",
        "out": "run.out_dir",
        "workers": "run.workers",
    }
    if args.command == "pretrain":
        flag_map.update({
            "strategy": "pretrain.strategy",
            "dynamic_alpha": "pretrain.dynamic_alpha",
            "kl_threshold": "pretrain.kl_threshold",
            "alpha_percentile": "pretrain.alpha_percentile",
            "epochs": "pretrain.epochs",
            "batch": "pretrain.batch_size",
        })
        if getattr(args, "curiosity", None) is not None:
            cfg.set_value("pretrain", "curiosity_weight", args.curiosity)
            cfg.set_value("pretrain", "curiosity_enabled", args.curiosity > 0)
    elif args.command == "finetune":
        flag_map.update({
            "goals": "finetune.goals",
            "epochs": "finetune.epochs_total",
            "kl_threshold": "finetune.kl_threshold",
        })
    for attr, dotted in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            section, key = dotted.split(".")
            cfg.set_value(section, key, value)
    for assignment in getattr(args, "overrides", []):
        cfg.apply_override(assignment)
    return cfg


def _prepare_out_dir(cfg: RunConfig) -> str:
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cfg.dump_toml(os.path.join(out, "config.toml"))
    return out


def _write_walls_csv(path: str, cfg: RunConfig) -> None:
    # Geometry export so downstream plotting never imports this package.
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("x0", "y0", "x1", "y1"))
        for seg in cfg.env_class().geometry.wall_segments():
            writer.writerow([repr(float(v)) for v in seg])


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _prepare_out_dir(cfg)
    _write_walls_csv(os.path.join(out, "walls.csv"), cfg)
    env_class = cfg.env_class()
    result = run_pretrain(env_class, cfg.pretrain_config(), out_dir=out, grid_cells=cfg.grid_cells)
    final = result.rows[-1]
    logger.info(
        "pretraining done: %d epochs, final mean entropy %.4f, coverage %.4f",
        len(result.rows), final["mean_entropy"], coverage(result.grid, env_class.geometry),
    )
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _prepare_out_dir(cfg)
    pol = GaussianPolicy.load(args.checkpoint)
    rows = finetune_run(pol, cfg.env_class(), cfg.finetune_config(), out_dir=out)
    logger.info("fine-tuning done: %d epochs, final average return %.3f",
                len(rows), rows[-1]["average_return"])
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    pol = GaussianPolicy.load(args.checkpoint)
    env_class = cfg.env_class()
    streams = [seeding.substream(cfg.seed, seeding.EVAL, i) for i in range(args.episodes)]
    batch = rollout_batch(env_class, pol, streams, workers=cfg.values["run"]["workers"])
    entropies = batch_entropies(batch, cfg.pretrain_config().k_neighbors)
    grid = VisitGrid.create(side=env_class.geometry.side, cells=cfg.grid_cells)
    for traj in batch:
        grid.accumulate(traj.states)
    print(f"{float(entropies.mean())!r},{coverage(grid, env_class.geometry)!r}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    series = {}
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "pretrain_log.csv")
        if not os.path.exists(path):
            raise ConfigError(f"no pretrain_log.csv in {run_dir}")
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        series[run_dir.rstrip("/")] = [row["mean_entropy"] for row in rows]
    lengths = {len(v) for v in series.values()}
    if len(lengths) > 1:
        raise ConfigError(f"runs have different epoch counts: {sorted(lengths)}")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["epoch", *(os.path.basename(d) for d in series)])
        for epoch, values in enumerate(zip(*series.values())):
            writer.writerow([epoch, *values])
    finally:
        if args.out:
            out.close()
    return 0


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    except MsveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
