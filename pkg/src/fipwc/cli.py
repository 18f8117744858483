"""Command-line entry point: ``fipwc {train,simulate,tune-pd,campaign,config}``.

Every command resolves the configuration first, writes it to
``resolved_config.yaml`` in the output directory and only then does work.
Passing that file back with ``--config`` reproduces the artifact.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import CELLS, PROFILES, ConfigError, RunConfig, dump_config, load_config
from .ddpg import DdpgAgent, train
from .montecarlo import CampaignSpec, format_table, run_campaign, run_episode, table_cells
from .pd import NoStabilizingGainsError, PdController, read_gains, tune_gains, write_gains

log = logging.getLogger("fipwc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

RESOLVED_CONFIG = "resolved_config.yaml"
TRAJECTORY_HEADER = [
    "t", "z", "z_dot", "phi", "phi_dot", "theta", "theta_dot",
    "phi_deg", "theta_deg", "F", "d_z", "d_phi", "d_theta", "reward",
]  # fmt: skip
GRID_KEYS = ("kp_theta", "kd_theta", "kp_z", "kd_z")


class UsageError(ConfigError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config value, e.g. agent.tau=0.01")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="worker processes for campaigns and tuning")
    p.add_argument("--output-dir", type=Path, help="defaults to $FIPWC_OUTPUT_DIR or ./runs")
    p.add_argument("--no-cart-disturbance", action="store_true", help="disable the d_zdot channel")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fipwc", description="DDPG and PD control of a flexible inverted pendulum on a cart.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDPG agent")
    _common(p)

    p = sub.add_parser("simulate", help="write one trajectory CSV")
    _common(p)
    p.add_argument("--controller", choices=("pd", "drl", "zero"), required=True)
    p.add_argument("--checkpoint", type=Path, help="actor checkpoint (drl)")
    p.add_argument("--gains", type=Path, help="gains file (pd); defaults to the configured gains")
    p.add_argument("--episode-seed", type=int, default=0, help="episode seed, derived from nothing else")

    p = sub.add_parser("tune-pd", help="grid-search PD gains")
    _common(p)
    p.add_argument("--grid", action="append", default=[], metavar="GAIN=V1,V2,...", help="replace one gain's candidate list")

    p = sub.add_parser("campaign", help="Monte Carlo campaign over the four table cells")
    _common(p)
    p.add_argument("--cells", help=f"comma-separated subset of {','.join(CELLS)}")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--gains", type=Path)

    p = sub.add_parser("config", help="print the resolved configuration")
    _common(p)
    return parser


def resolve(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if args.no_cart_disturbance:
        overrides.append("env.enable_cart_disturbance=false")
    if getattr(args, "grid", None):
        for item in args.grid:
            key, sep, values = item.partition("=")
            if not sep or key not in GRID_KEYS:
                raise UsageError(f"--grid {item!r}: expected one of {GRID_KEYS} followed by =v1,v2,...")
            overrides.append(f"pd.search.{key}=[{values}]")
    if getattr(args, "cells", None):
        cells = [c.strip() for c in args.cells.split(",") if c.strip()]
        unknown = sorted(set(cells) - set(CELLS))
        if unknown or not cells:
            raise UsageError(f"--cells: unknown cell(s) {unknown}; choose from {list(CELLS)}")
        overrides.append(f"campaign.cells=[{','.join(cells)}]")
    cfg = load_config(args.config, args.profile, overrides)
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    # the echo must be self-contained, so pin the output directory
    return replace(cfg, output_dir=str(cfg.resolved_output_dir()))


def _prepare(cfg: RunConfig) -> Path:
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / RESOLVED_CONFIG)
    return out


def _artifact(path: str | Path, out: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() or p.exists() else out / p


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_train(cfg: RunConfig) -> int:
    out = _prepare(cfg)
    trainer = train(cfg.agent, cfg.env_config(), cfg.seed, out)
    print(f"trained {trainer.step} steps over {trainer.episode} episodes -> {out / 'actor.mlp'}")
    return EXIT_OK


def _pd_controller(cfg: RunConfig, gains_path: Path | None) -> PdController:
    if gains_path is not None:
        gains = read_gains(_require(gains_path, "gains file"))
    else:
        gains = cfg.pd.gains
    return PdController(gains, cfg.env.force_limit)


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _prepare(cfg)
    if args.controller == "drl":
        if args.checkpoint is None:
            raise UsageError("simulate --controller drl needs --checkpoint")
        controller = DdpgAgent.load_policy(_require(args.checkpoint, "checkpoint"))
    elif args.controller == "pd":
        controller = _pd_controller(cfg, args.gains)
    else:
        controller = lambda state: 0.0  # noqa: E731
    record: list[dict] = []
    result = run_episode(controller, cfg.env_config(), args.episode_seed, record=record)
    path = out / f"trajectory_{args.controller}_{args.episode_seed}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for row in record:
            s = row["state"]
            w.writerow([repr(float(v)) for v in (
                row["t"], *s, math.degrees(s[2]), math.degrees(s[4]), row["force"], *row["disturbance"], row["reward"],
            )])  # fmt: skip
    print(f"return {result.total_reward:.6g} over {result.steps} steps -> {path}")
    return EXIT_OK


def cmd_tune_pd(cfg: RunConfig) -> int:
    out = _prepare(cfg)
    result = tune_gains(cfg.env_config(), cfg.pd.search, cfg.seed, cfg.workers)
    path = out / Path(cfg.campaign.gains_file).name
    write_gains(path, result.gains, result.mean_reward)
    print(f"best {result.gains} mean reward {result.mean_reward:.6g} -> {path}")
    return EXIT_OK


def cmd_campaign(cfg: RunConfig, args) -> int:
    out = _prepare(cfg)
    cells = table_cells(cfg.env_config())
    controllers = {}
    kinds = {cells[c][0] for c in cfg.campaign.cells}
    if "drl" in kinds:
        ckpt = args.checkpoint or _artifact(cfg.campaign.checkpoint, out)
        controllers["drl"] = DdpgAgent.load_policy(_require(Path(ckpt), "checkpoint"))
    if "pd" in kinds:
        gains = args.gains or _artifact(cfg.campaign.gains_file, out)
        controllers["pd"] = _pd_controller(cfg, Path(gains))
    results = {}
    for name in cfg.campaign.cells:
        kind, env_config = cells[name]
        spec = CampaignSpec(name, cfg.campaign.n_runs, cfg.campaign.master_seed, env_config)
        res = run_campaign(spec, controllers[kind], cfg.workers)
        res.write_runs_csv(out / f"runs_{name}.csv")
        res.write_summary(out / f"summary_{name}.txt")
        results[name] = res
        log.info("%s: mean %.6g std %s", name, res.mean, res.std)
    table = format_table(results)
    (out / "table.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "tune-pd":
            return cmd_tune_pd(cfg)
        if args.command == "campaign":
            return cmd_campaign(cfg, args)
        _prepare(cfg)
        print((cfg.resolved_output_dir() / RESOLVED_CONFIG).read_text(), end="")
        return EXIT_OK
    except UsageError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, NoStabilizingGainsError, FloatingPointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
