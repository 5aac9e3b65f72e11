"""Command-line harness: train, estimate-task-energy, eval, compare.

Exit codes: 0 on success, 2 for invalid config, missing or foreign
checkpoint, and schema mismatches, 3 when training aborts on non-finite
numbers (the diverged agent state is dumped first).  The run-output root
comes from --out, else the ETANK_RUN_ROOT environment variable, else
./runs.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import (
    ExperimentConfig,
    build_env,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    save_config,
)
from .dynamics import PendulumParams
from .env import PendulumEnv
from .evaluation import agent_policy, estimate_task_energy, run_episodes
from .passivize import (
    ExtendedStateWrapper,
    ExtendedTerminationWrapper,
    ForceField,
    ForceFieldWrapper,
    InferenceTankWrapper,
)
from . import reports
from .sac import TrainingDiverged, load_checkpoint, save_checkpoint, train
from .tank import DEFAULT_GATE_EPSILON

log = logging.getLogger("etank")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_DIVERGED = 3


def _parse_capacity(raw) -> float:
    if isinstance(raw, str) and raw.lower() in ("inf", "infinity"):
        return math.inf
    value = float(raw)
    if math.isnan(value) or value < 0.0:
        raise ValueError("capacity must be >= 0 or 'inf'")
    return value


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    d = config_to_dict(cfg)
    if getattr(args, "name", None):
        d["name"] = args.name
    if getattr(args, "seeds", None) is not None:
        d["seeds"] = args.seeds
    if getattr(args, "epochs", None) is not None:
        d["sac"]["epochs"] = args.epochs
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ValueError(f"unknown config section in {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValueError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return config_from_dict(d)


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = _apply_overrides(cfg, args)
    root = Path(args.out or os.environ.get("ETANK_RUN_ROOT", "runs"))
    run_dir = root / cfg.name
    if run_dir.exists() and not args.force:
        raise ValueError(f"run directory {run_dir} exists; pass --force to overwrite")
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    h = config_hash(cfg)
    manifest = {
        "config": config_to_dict(cfg),
        "config_hash": h,
        "created_unix": time.time(),
        "runs": {},
    }
    started = time.perf_counter()
    for seed in cfg.seeds:
        seed_dir = run_dir / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        env = build_env(cfg)
        log.info("seed %d: %d epochs x %d steps", seed, cfg.sac.epochs, cfg.sac.steps_per_epoch)

        def progress(rec, _seed=seed):
            log.info(
                "seed %d epoch %d return %.1f alpha %.3f depletions %d",
                _seed, rec.epoch, rec.return_, rec.alpha, rec.depletions,
            )

        result = train(env, cfg.sac, seed, progress=progress, dump_dir=str(seed_dir))
        reports.write_epochs_csv(seed_dir / "epochs.csv", result.epochs)
        reports.write_episodes_csv(seed_dir / "episodes.csv", result.episodes)
        extra = {
            "pendulum": asdict(cfg.pendulum),
            "wrapper": asdict(cfg.wrapper),
            "force_field": asdict(cfg.force_field),
            "config_hash": h,
            "seed": seed,
            "best_epoch": result.best_epoch,
            "best_return": result.best_return,
        }
        save_checkpoint(seed_dir / "final.npz", result.agent, extra)
        final_actor = result.agent.actor
        result.agent.actor = result.best_actor
        save_checkpoint(seed_dir / "best.npz", result.agent, extra)
        result.agent.actor = final_actor
        tail = [r.return_ for r in result.epochs[-10:]]
        manifest["runs"][str(seed)] = {
            "wall_time_s": result.wall_time,
            "best_epoch": result.best_epoch,
            "best_return": result.best_return,
            "screen_passed": result.screen_passed,
            "final_avg_return_last10": float(np.mean(tail)),
            "episodes": len(result.episodes),
        }
        log.info(
            "seed %d done in %.1fs best %.1f@%d",
            seed, result.wall_time, result.best_return, result.best_epoch,
        )
    manifest["total_wall_time_s"] = time.perf_counter() - started
    reports.write_json(run_dir / "manifest.json", manifest)
    print(f"run written to {run_dir}")
    return EXIT_OK


def _env_from_meta(meta: dict, agent, capacity: float, epsilon: float, seed):
    """Rebuild the training plant for a checkpoint and wrap a tank that
    matches the agent's observation width."""
    if "pendulum" not in meta:
        raise ValueError("checkpoint carries no plant parameters; cannot rebuild env")
    params = PendulumParams(**meta["pendulum"])
    max_steps = meta["config"]["steps_per_trajectory"]
    base = PendulumEnv(params, max_steps=max_steps, seed=seed)
    if agent.obs_dim == base.observation_dim:
        return InferenceTankWrapper(base, capacity, epsilon)
    if agent.obs_dim == base.observation_dim + 1:
        return ExtendedStateWrapper(base, capacity, epsilon)
    raise ValueError(
        f"checkpoint expects {agent.obs_dim}-dim observations; "
        f"the plant offers {base.observation_dim}"
    )


def cmd_estimate_task_energy(args) -> int:
    agent, meta = load_checkpoint(args.checkpoint)
    epsilon = meta.get("wrapper", {}).get("epsilon", DEFAULT_GATE_EPSILON)
    env = _env_from_meta(meta, agent, math.inf, epsilon, args.seed)
    report = estimate_task_energy(env, agent_policy(agent), args.episodes)
    energies = [s.energy_spent for s in report.episodes]
    print(f"task energy estimate over {args.episodes} episodes: {report.e_star!r} J")
    print(f"mean episode energy: {float(np.mean(energies))!r} J")
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "task_energy.json"
    reports.write_json(
        out,
        {
            "e_star": report.e_star,
            "episodes": args.episodes,
            "seed": args.seed,
            "checkpoint": str(args.checkpoint),
            "per_episode_energy": energies,
            "per_episode_return": [s.return_ for s in report.episodes],
        },
    )
    print(f"report written to {out}")
    return EXIT_OK


def _summarize(stats) -> dict:
    if not stats:
        return {
            "episodes": 0,
            "mean_return": None,
            "std_return": None,
            "min_return": None,
            "max_return": None,
            "mean_final_window_error": None,
            "mean_length": None,
            "depletion_episodes": 0,
            "gated_episodes": 0,
            "mean_energy": None,
            "max_energy": None,
        }
    returns = [s.return_ for s in stats]
    energies = [s.energy_spent for s in stats if s.energy_spent is not None]
    return {
        "episodes": len(stats),
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
        "min_return": float(np.min(returns)),
        "max_return": float(np.max(returns)),
        "mean_final_window_error": float(np.mean([s.final_window_error for s in stats])),
        "mean_length": float(np.mean([s.length for s in stats])),
        "depletion_episodes": int(sum(s.depleted for s in stats)),
        "gated_episodes": int(sum(s.gated_steps > 0 for s in stats)),
        "mean_energy": float(np.mean(energies)) if energies else None,
        "max_energy": float(np.max(energies)) if energies else None,
    }


def cmd_eval(args) -> int:
    agent, meta = load_checkpoint(args.checkpoint)
    capacity = _parse_capacity(args.capacity)
    if args.wrapper in ("extended_termination", "extended_state") and math.isinf(capacity):
        raise ValueError(f"{args.wrapper} needs a finite --capacity")
    if "pendulum" not in meta:
        raise ValueError("checkpoint carries no plant parameters; cannot rebuild env")
    params = PendulumParams(**meta["pendulum"])
    base = PendulumEnv(params, max_steps=meta["config"]["steps_per_trajectory"], seed=args.seed)
    if args.wrapper == "none":
        env = InferenceTankWrapper(base, math.inf, args.epsilon)
    elif args.wrapper == "inference_tank":
        env = InferenceTankWrapper(base, capacity, args.epsilon)
    elif args.wrapper == "extended_termination":
        env = ExtendedTerminationWrapper(base, capacity, args.epsilon)
    else:
        env = ExtendedStateWrapper(base, capacity, args.epsilon)
    if env.observation_dim != agent.obs_dim:
        raise ValueError(
            f"wrapper {args.wrapper!r} yields {env.observation_dim}-dim observations "
            f"but the checkpoint expects {agent.obs_dim}"
        )
    if args.field != "none":
        env = ForceFieldWrapper(env, ForceField(args.field, args.magnitude))
    stats, rows = run_episodes(
        env,
        agent_policy(agent),
        args.episodes,
        final_window=args.final_window,
        collect_steps=args.steps_csv is not None,
    )
    summary = _summarize(stats)
    for key in (
        "mean_return",
        "std_return",
        "mean_final_window_error",
        "depletion_episodes",
        "gated_episodes",
        "mean_energy",
        "max_energy",
    ):
        print(f"{key}: {summary[key]}")
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval.json"
    reports.write_json(
        out,
        {
            "checkpoint": str(args.checkpoint),
            "wrapper": args.wrapper,
            "capacity": capacity,
            "epsilon": args.epsilon,
            "field": args.field,
            "magnitude": args.magnitude,
            "seed": args.seed,
            "summary": summary,
            "per_episode": [asdict(s) for s in stats],
        },
    )
    print(f"report written to {out}")
    if args.steps_csv is not None:
        reports.write_steps_csv(args.steps_csv, rows)
        print(f"step log written to {args.steps_csv}")
    return EXIT_OK


def _read_run(path: Path) -> dict:
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise ValueError(f"{path} is not a run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    seed_dirs = sorted(path.glob("seed_*"))
    if not seed_dirs:
        raise ValueError(f"{path} holds no seed_* directories")
    curves = {}
    max_energy = None
    for sd in seed_dirs:
        rows = reports.read_csv_dicts(sd / "epochs.csv")
        if not rows:
            raise ValueError(f"{sd}/epochs.csv is empty")
        missing = {"epoch", "return", "max_episode_energy"} - set(rows[0])
        if missing:
            raise ValueError(f"{sd}/epochs.csv lacks columns {sorted(missing)}")
        curves[sd.name] = [float(r["return"]) for r in rows]
        for r in rows:
            e = r["max_episode_energy"]
            if e is not None and (max_energy is None or e > max_energy):
                max_energy = e
    capacity = manifest["config"]["wrapper"]["capacity"]
    if isinstance(capacity, str):
        capacity = _parse_capacity(capacity)
    return {
        "name": path.name,
        "path": str(path),
        "curves": curves,
        "capacity": capacity,
        "max_training_energy": max_energy,
    }


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise ValueError("compare needs at least two run directories")
    runs = [_read_run(Path(p)) for p in args.runs]
    comparison = {"runs": {}, "energy_ratios": {}, "plateau": {}}
    for run in runs:
        lengths = {len(c) for c in run["curves"].values()}
        n = min(lengths)
        stacked = np.array([c[:n] for c in run["curves"].values()])
        mean_curve = stacked.mean(axis=0)
        std_curve = stacked.std(axis=0)
        last = min(args.last_epochs, n)
        plateau = float(mean_curve[-last:].mean())
        comparison["runs"][run["name"]] = {
            "seeds": len(run["curves"]),
            "epochs": n,
            "mean_return_curve": mean_curve.tolist(),
            "std_return_curve": std_curve.tolist(),
            "max_training_energy": run["max_training_energy"],
            "capacity": run["capacity"],
        }
        comparison["plateau"][run["name"]] = plateau
        print(
            f"{run['name']}: seeds {len(run['curves'])}, plateau(last {last}) "
            f"{plateau:.1f}, max training energy {run['max_training_energy']}, "
            f"capacity {run['capacity']}"
        )
    for a in runs:
        for b in runs:
            if a is b:
                continue
            if b["capacity"] is not None and math.isfinite(b["capacity"]) and b["capacity"] > 0:
                key = f"{a['name']}_max_energy_over_{b['name']}_capacity"
                ratio = (
                    a["max_training_energy"] / b["capacity"]
                    if a["max_training_energy"] is not None
                    else None
                )
                comparison["energy_ratios"][key] = ratio
                if ratio is not None:
                    print(f"{key}: {ratio:.2f}")
    names = [r["name"] for r in runs]
    if len(names) >= 2:
        pa, pb = comparison["plateau"][names[0]], comparison["plateau"][names[1]]
        gap = abs(pa - pb) / max(abs(pa), abs(pb), 1e-12)
        comparison["plateau_relative_gap"] = gap
        print(f"plateau relative gap ({names[0]} vs {names[1]}): {gap:.3f}")
    if args.out:
        reports.write_json(args.out, comparison)
        print(f"comparison written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etank",
        description="Energy-tank passivization experiments on the pendulum swing-up task",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train SAC over one or more seeds")
    p_train.add_argument("-c", "--config", help="experiment config JSON")
    p_train.add_argument("--name", help="run name (output subdirectory)")
    p_train.add_argument("--seeds", type=int, nargs="+", help="override seed list")
    p_train.add_argument("--epochs", type=int, help="override sac.epochs")
    p_train.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config entry, e.g. --set sac.hidden_sizes=[64,64]",
    )
    p_train.add_argument("--out", help="run-output root (default $ETANK_RUN_ROOT or ./runs)")
    p_train.add_argument("--force", action="store_true", help="overwrite an existing run dir")
    p_train.set_defaults(func=cmd_train)

    p_est = sub.add_parser(
        "estimate-task-energy",
        help="max episode energy of a checkpoint policy run without gating",
    )
    p_est.add_argument("checkpoint")
    p_est.add_argument("--episodes", type=int, default=100)
    p_est.add_argument("--seed", type=int, default=12345)
    p_est.add_argument("--out", help="report path (default task_energy.json beside checkpoint)")
    p_est.set_defaults(func=cmd_estimate_task_energy)

    p_eval = sub.add_parser("eval", help="roll out a checkpoint under a chosen wrapper/field")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument(
        "--wrapper",
        choices=["none", "inference_tank", "extended_termination", "extended_state"],
        default="none",
    )
    p_eval.add_argument("--capacity", default="inf", help="tank capacity in J, or 'inf'")
    p_eval.add_argument("--epsilon", type=float, default=DEFAULT_GATE_EPSILON)
    p_eval.add_argument(
        "--field", choices=["none", "constant", "velocity_aligned"], default="none"
    )
    p_eval.add_argument("--magnitude", type=float, default=0.0, help="field torque in N*m")
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.add_argument("--final-window", type=int, default=100)
    p_eval.add_argument("--seed", type=int, default=12345)
    p_eval.add_argument("--out", help="report path (default eval.json beside checkpoint)")
    p_eval.add_argument("--steps-csv", help="also write a per-step CSV here")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="align runs: return curves and energy ratios")
    p_cmp.add_argument("runs", nargs="+", help="two or more run directories")
    p_cmp.add_argument("--last-epochs", type=int, default=10, help="plateau window")
    p_cmp.add_argument("--out", help="write the comparison JSON here")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        if exc.dump_path:
            log.error("diverged state dumped to %s", exc.dump_path)
        return EXIT_DIVERGED
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
