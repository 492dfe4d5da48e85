"""Command-line front end: run episodes, sweep evaluation grids, validate
configuration files.

Configuration is a flat YAML mapping mirroring the episode options plus
controller and physical-constant overrides; command-line flags win over the
file.  Episode logs are JSONL (one header line, one line per step and agent,
one metrics line); sweeps emit a CSV with one row per episode.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import yaml

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .controllers import CONTROLLER_KINDS, ControllerSpec
from .episode import EpisodeConfig, run_episode
from .errors import ConfigError, SimulationError
from .observations import OBS_MODES

log = logging.getLogger("inspect_rta")

EPISODE_FIELDS = {
    "n_agents": int,
    "seed": int,
    "obs_mode": str,
    "rta_enabled": bool,
    "time_limit": float,
    "control_dt": float,
    "rta_dt": float,
    "success_threshold": float,
    "slack_weight": float,
    "record": bool,
}
CONTROLLER_FIELDS = {
    "controller": str,
    "controller_seed": int,
    "kp_pos": float,
    "kd_pos": float,
    "kp_att": float,
    "kd_att": float,
}
CONSTANT_FIELDS = {f.name: float for f in dataclasses.fields(PhysicalConstants)}

METRICS_COLUMNS = [
    "episode_id",
    "seed",
    "mode",
    "n_agents",
    "success",
    "total_reward",
    "delta_v",
    "mean_torque",
    "episode_length_s",
    "termination_status",
]


def load_config(path: str | None) -> dict:
    """Parse and schema-check a flat key-value config file."""
    if path is None:
        return {}
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a flat key: value mapping")
    known = {**EPISODE_FIELDS, **CONTROLLER_FIELDS, **CONSTANT_FIELDS}
    out = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(key, "unknown field")
        want = known[key]
        if want is bool:
            if isinstance(value, bool):
                out[key] = value
            elif isinstance(value, str) and value.lower() in ("on", "off"):
                out[key] = value.lower() == "on"
            else:
                raise ConfigError(key, f"expected boolean, got {value!r}")
        else:
            try:
                out[key] = want(value)
            except (TypeError, ValueError):
                raise ConfigError(
                    key, f"expected {want.__name__}, got {value!r}"
                ) from None
    if "obs_mode" in out and out["obs_mode"] not in OBS_MODES:
        raise ConfigError("obs_mode", f"must be one of {OBS_MODES}")
    if "controller" in out and out["controller"] not in CONTROLLER_KINDS:
        raise ConfigError("controller", f"must be one of {CONTROLLER_KINDS}")
    return out


def build_setup(cfg_map: dict, args) -> tuple[EpisodeConfig, PhysicalConstants]:
    """Merge config-file values and CLI flags into run objects."""
    merged = dict(cfg_map)
    if getattr(args, "seed", None) is not None:
        merged["seed"] = args.seed
    if getattr(args, "agents", None) is not None:
        merged["n_agents"] = args.agents
    if getattr(args, "obs_mode", None) is not None:
        merged["obs_mode"] = args.obs_mode
    if getattr(args, "controller", None) is not None:
        merged["controller"] = args.controller
    if getattr(args, "rta", None) is not None:
        merged["rta_enabled"] = args.rta == "on"

    const_overrides = {k: merged.pop(k) for k in list(merged) if k in CONSTANT_FIELDS}
    constants = (
        dataclasses.replace(DEFAULT_CONSTANTS, **const_overrides)
        if const_overrides
        else DEFAULT_CONSTANTS
    )
    spec = ControllerSpec(
        kind=merged.pop("controller", "inspect-seeker"),
        seed=merged.pop("controller_seed", merged.get("seed", 0)),
        kp_pos=merged.pop("kp_pos", 0.02),
        kd_pos=merged.pop("kd_pos", 0.4),
        kp_att=merged.pop("kp_att", 2e-4),
        kd_att=merged.pop("kd_att", 4e-3),
    )
    episode_cfg = EpisodeConfig(controller=spec, **merged)
    return episode_cfg, constants


def _metrics_row(episode_id: str, cfg: EpisodeConfig, metrics) -> dict:
    n = max(1, len(metrics.success))
    return {
        "episode_id": episode_id,
        "seed": cfg.seed,
        "mode": cfg.obs_mode,
        "n_agents": cfg.n_agents,
        "success": sum(metrics.success.values()) / n,
        "total_reward": sum(metrics.total_reward.values()),
        "delta_v": metrics.delta_v_total,
        "mean_torque": sum(metrics.mean_torque.values()) / n,
        "episode_length_s": metrics.episode_length_s,
        "termination_status": ";".join(
            metrics.termination[k] for k in sorted(metrics.termination)
        ),
    }


def cmd_run(args) -> int:
    cfg_map = load_config(args.config)
    cfg, constants = build_setup(cfg_map, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics, record, world = run_episode(cfg, constants=constants)
    episode_id = f"ep_{cfg.obs_mode}_{cfg.n_agents}a_s{cfg.seed}"
    if record is not None:
        (out_dir / f"{episode_id}.jsonl").write_text(record.to_jsonl())
    with open(out_dir / f"{episode_id}_metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerow(_metrics_row(episode_id, cfg, metrics))
    log.info(
        "episode %s finished at t=%.0fs weight=%.3f statuses=%s",
        episode_id,
        metrics.episode_length_s,
        metrics.inspected_weight,
        metrics.termination,
    )
    if world.fault_count:
        log.warning("safety faults during episode: %d", world.fault_count)
        return 2
    return 0


def cmd_sweep(args) -> int:
    cfg_map = load_config(args.config)
    modes = args.modes.split(",") if args.modes else list(OBS_MODES)
    agent_counts = [int(x) for x in args.agents_list.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    if not modes or not agent_counts or not seeds:
        raise ConfigError("sweep", "empty grid")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for mode in modes:
        if mode not in OBS_MODES:
            raise ConfigError("modes", f"{mode!r} not in {OBS_MODES}")
        for n_agents in agent_counts:
            for seed in seeds:
                merged = dict(cfg_map)
                merged.update(obs_mode=mode, n_agents=n_agents, seed=seed)

                class _A:
                    pass

                holder = _A()
                holder.seed = None
                holder.agents = None
                holder.obs_mode = None
                holder.controller = args.controller
                holder.rta = args.rta
                cfg, constants = build_setup(merged, holder)
                episode_id = f"ep_{mode}_{n_agents}a_s{seed}"
                try:
                    metrics, record, world = run_episode(cfg, constants=constants)
                    if record is not None:
                        (out_dir / f"{episode_id}.jsonl").write_text(
                            record.to_jsonl()
                        )
                    rows.append(_metrics_row(episode_id, cfg, metrics))
                except SimulationError as exc:
                    log.error("episode %s faulted: %s", episode_id, exc)
                    rows.append(
                        {
                            "episode_id": episode_id,
                            "seed": seed,
                            "mode": mode,
                            "n_agents": n_agents,
                            "success": "",
                            "total_reward": "",
                            "delta_v": "",
                            "mean_torque": "",
                            "episode_length_s": "",
                            "termination_status": f"fault:{exc}",
                        }
                    )
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    log.info("sweep wrote %d rows to %s", len(rows), out_dir / "metrics.csv")
    return 0


def cmd_validate(args) -> int:
    try:
        load_config(args.config)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inspect-rta",
        description="Multi-agent spacecraft inspection simulator with a "
        "run-time-assurance safety filter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a single episode")
    run_p.add_argument("--config", default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--agents", type=int, default=None)
    run_p.add_argument("--obs-mode", choices=OBS_MODES, default=None)
    run_p.add_argument("--controller", choices=CONTROLLER_KINDS, default=None)
    run_p.add_argument("--rta", choices=("on", "off"), default=None)
    run_p.add_argument("--out", default="out")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a grid of episodes")
    sweep_p.add_argument("--config", default=None)
    sweep_p.add_argument("--modes", default=None, help="comma-separated modes")
    sweep_p.add_argument("--agents-list", default="3")
    sweep_p.add_argument("--seeds", default="0")
    sweep_p.add_argument("--controller", choices=CONTROLLER_KINDS, default=None)
    sweep_p.add_argument("--rta", choices=("on", "off"), default=None)
    sweep_p.add_argument("--out", default="out")
    sweep_p.set_defaults(func=cmd_sweep)

    val_p = sub.add_parser("validate-config", help="schema-check a config file")
    val_p.add_argument("--config", required=True)
    val_p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("INSPECT_RTA_LOG_LEVEL", "INFO").upper(),
        format="%(levelname)s %(name)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        log.error("simulation fault: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
