"""``edge-forge`` command line: train, validate, replay, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence, TextIO

from . import __version__, neural
from .agent import DqnAgent, evaluate_policy, run_training
from .config import RunConfig, apply_overrides, from_dict, read_document
from .errors import ConfigError, UsageError
from .svg import line_chart
from .validation import (EpisodeRecord, ValidationConfig, ValidationReport, append_log, build_report,
                         first_divergence, read_log, replay_episode)

log = logging.getLogger("edge_forge")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

LOG_NAME = "episodes.jsonl"
MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
FINAL_CHECKPOINT = "checkpoint_final.json"


def _setup_logging() -> None:
    level = os.environ.get("EDGE_FORGE_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_config(config_path: str | Path | None, overrides: Sequence[str] = ()) -> RunConfig:
    doc = read_document(config_path) if config_path is not None else {}
    return from_dict(apply_overrides(doc, overrides))


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- train -------------------------------------------------------------------

def cmd_train(config_path: str | Path | None, out_dir: str | Path, overrides: Sequence[str] = ()) -> int:
    try:
        cfg = resolve_config(config_path, overrides)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(out_dir)
    try:
        ckpt_dir = out / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log_path = out / LOG_NAME
        log_path.write_text("", encoding="utf-8")
        _write_json(out / CONFIG_NAME, cfg.to_dict())
        manifest = {
            "manifest_version": 1,
            "code_version": __version__,
            "config": cfg.to_dict(),
            "seed": {"world": cfg.world.seed, "agent": cfg.agent.seed},
            "started": _now(),
            "finished": None,
            "outputs": {"episode_log": LOG_NAME, "final_checkpoint": FINAL_CHECKPOINT,
                        "checkpoints": "checkpoints", "config": CONFIG_NAME},
        }
        _write_json(out / MANIFEST_NAME, manifest)

        def checkpoint(episode_id: int, net: neural.Mlp) -> None:
            neural.save(net, ckpt_dir / f"ep_{episode_id + 1:06d}.json")

        agent = DqnAgent(cfg.agent, cfg.neural)
        n_fail = 0
        for record in run_training(cfg.world, cfg.rss, cfg.agent, cfg.neural, cfg.validation,
                                   agent=agent, checkpoint=checkpoint):
            append_log(log_path, record)
            n_fail += record.outcome.value == "FailureScenario"
            if (record.episode_id + 1) % 100 == 0:
                log.info("episode %d: failure scenarios so far %d, epsilon %.4f",
                         record.episode_id + 1, n_fail, agent.epsilon)
        neural.save(agent.pred, out / FINAL_CHECKPOINT)
        manifest["finished"] = _now()
        _write_json(out / MANIFEST_NAME, manifest)
    except OSError as exc:
        log.error("I/O failure under %s: %s", out, exc)
        return EXIT_IO
    log.info("training finished: %d episodes written to %s", cfg.agent.max_episodes, out / LOG_NAME)
    return EXIT_OK


# --- validate ----------------------------------------------------------------

def cmd_validate(checkpoint: str | Path, config_path: str | Path | None, n_episodes: int, seed: int,
                 out_dir: str | Path, overrides: Sequence[str] = ()) -> int:
    try:
        cfg = resolve_config(config_path, [*overrides, f"world.seed={seed}"])
        net = neural.load(checkpoint)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        log.error("cannot load checkpoint %s: %s", checkpoint, exc)
        return EXIT_CONFIG
    if net.layer_dims != cfg.neural.layer_dims:
        log.error("checkpoint layer_dims %s do not match neural.layer_dims %s",
                  list(net.layer_dims), list(cfg.neural.layer_dims))
        return EXIT_CONFIG
    if n_episodes < 1:
        log.error("--episodes must be >= 1")
        return EXIT_CONFIG
    records = evaluate_policy(net, cfg.world, cfg.rss, seed, n_episodes, cfg.validation)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / LOG_NAME).write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
        _write_json(out / CONFIG_NAME, cfg.to_dict())
        report = build_report(records, cfg.validation)
        summary = report.summary()
        summary["checkpoint"] = str(checkpoint)
        summary["seed"] = seed
        _write_json(out / "validation_report.json", summary)
    except OSError as exc:
        log.error("I/O failure under %s: %s", out, exc)
        return EXIT_IO
    log.info("validated %d episodes: p_r = %.4f", n_episodes, report.p_r)
    return EXIT_OK


# --- replay ------------------------------------------------------------------

TABLE_HEADER = ("step", "t", "action", "ped_speed", "ego_speed", "d_eucl", "d_rss", "in_roi",
                "reward", "class")


def format_trace(record: EpisodeRecord) -> str:
    rows = [" ".join(f"{h:>10}" for h in TABLE_HEADER)]
    for i, ts in enumerate(record.timesteps):
        rows.append(" ".join([
            f"{i:>10d}", f"{ts.t:>10.2f}", f"{ts.action:>10d}", f"{ts.ped_speed:>10.2f}",
            f"{ts.ego_speed:>10.3f}", f"{ts.d_eucl:>10.3f}", f"{ts.d_rss:>10.3f}",
            f"{str(ts.in_roi):>10}", f"{ts.reward:>10d}", f"{ts.classification.value:>10}"]))
    rows.append(f"episode {record.episode_id}: {record.term_reason.value}, total reward "
                f"{record.total_reward}, success fraction {record.success_fraction:.4f}, "
                f"{record.outcome.value}")
    return "\n".join(rows) + "\n"


def _config_for_log(log_path: Path, config_path: str | Path | None) -> RunConfig:
    if config_path is not None:
        return resolve_config(config_path)
    sibling = log_path.parent / CONFIG_NAME
    return resolve_config(sibling if sibling.exists() else None)


def cmd_replay(episode_log: str | Path, episode_id: int | None = None,
               config_path: str | Path | None = None, stream: TextIO | None = None) -> int:
    """Re-simulate logged episodes and demand bit-identical traces.

    With ``episode_id`` the trace table is printed; without it every episode
    in the log is checked.
    """
    stream = stream or sys.stdout
    path = Path(episode_log)
    try:
        cfg = _config_for_log(path, config_path)
        lines = path.read_text(encoding="utf-8").splitlines()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read episode log %s: %s", path, exc)
        return EXIT_CONFIG

    corrupt = 0
    targets: list[EpisodeRecord] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = EpisodeRecord.from_json(line)
        except ValueError as exc:
            log.error("%s:%d: corrupted entry (%s)", path, lineno, exc)
            corrupt += 1
            continue
        if episode_id is None or record.episode_id == episode_id:
            targets.append(record)
    if not targets:
        if corrupt:
            return EXIT_DIVERGED
        log.error("episode %s not found in %s", episode_id, path)
        return EXIT_CONFIG

    status = EXIT_DIVERGED if corrupt and episode_id is None else EXIT_OK
    for record in targets:
        try:
            fresh = replay_episode(record, cfg.world, cfg.rss, vcfg=cfg.validation)
            where = first_divergence(record, fresh)
        except (UsageError, ValueError) as exc:
            log.error("episode %d: replay failed: %s", record.episode_id, exc)
            where = -1
        if where is not None:
            log.error("episode %d: trace diverges at timestep %d", record.episode_id, where)
            status = EXIT_DIVERGED
        elif episode_id is not None:
            stream.write(format_trace(record))
    if episode_id is None and status == EXIT_OK:
        log.info("replayed %d episodes: all traces match", len(targets))
    return status


# --- report ------------------------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_report(report: ValidationReport, records: Sequence[EpisodeRecord], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "summary.json", report.summary())
    _write_csv(out / "cumulative_failures.csv", ("episode", "cumulative_failures"),
               enumerate(report.cumulative_failures))
    _write_csv(out / "reward_moving_average.csv", ("episode", "total_reward", "moving_average"),
               ((i, r.total_reward, repr(avg))
                for i, (r, avg) in enumerate(zip(records, report.reward_moving_average))))
    (out / "cumulative_failures.svg").write_text(line_chart(
        [("failure scenarios", report.cumulative_failures)],
        "Cumulative failure scenarios", "episode", "count"), encoding="utf-8")
    (out / "reward_moving_average.svg").write_text(line_chart(
        [("reward moving average", report.reward_moving_average)],
        "Episode reward (moving average)", "episode", "reward"), encoding="utf-8")
    if report.edge_cases:
        top_id = report.edge_cases[0]["episode_id"]
        top = next(r for r in records if r.episode_id == top_id)
        steps = list(range(len(top.timesteps)))
        (out / "top_edge_case.svg").write_text(line_chart(
            [("ego speed [m/s]", [ts.ego_speed for ts in top.timesteps]),
             ("pedestrian speed [m/s]", [ts.ped_speed for ts in top.timesteps]),
             ("euclidean distance [m]", [ts.d_eucl for ts in top.timesteps]),
             ("RSS safe distance [m]", [ts.d_rss for ts in top.timesteps])],
            f"Top edge case: episode {top_id}", "timestep", "value", x=steps), encoding="utf-8")


def cmd_report(run_dir: str | Path) -> int:
    run = Path(run_dir)
    log_path = run / LOG_NAME
    try:
        cfg = _config_for_log(log_path, None)
        records = read_log(log_path)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError:
        log.error("no episode log at %s", log_path)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("corrupted episode log %s: %s", log_path, exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read %s: %s", log_path, exc)
        return EXIT_IO
    if not records:
        log.error("episode log %s is empty", log_path)
        return EXIT_CONFIG
    report = build_report(records, cfg.validation)
    try:
        write_report(report, records, run / "report")
    except OSError as exc:
        log.error("cannot write report under %s: %s", run, exc)
        return EXIT_IO
    log.info("report for %d episodes: p_r = %.4f", report.total_episodes, report.p_r)
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edge-forge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train the adversary and log every scenario")
    train.add_argument("--config", help="JSON config (or a previous run's manifest)")
    train.add_argument("--out", default="run", help="run directory (default: ./run)")
    train.add_argument("--episodes", type=int, help="override agent.max_episodes")
    train.add_argument("--seed", type=int, help="override world.seed and agent.seed")
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. agent.eps_min=0.5 (repeatable)")

    val = sub.add_parser("validate", help="frozen-policy rollouts of a checkpoint")
    val.add_argument("--checkpoint", required=True)
    val.add_argument("--config")
    val.add_argument("--episodes", type=int, default=100)
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--out", default="validation")
    val.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    rep = sub.add_parser("replay", help="re-simulate logged episodes and check determinism")
    rep.add_argument("episode_log")
    rep.add_argument("episode_id", type=int, nargs="?",
                     help="episode to print; omit to verify the whole log")
    rep.add_argument("--config", help="defaults to config.json next to the log")

    report = sub.add_parser("report", help="summary JSON, CSVs and SVG charts for a run")
    report.add_argument("run_dir")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "train":
        overrides = list(args.set)
        if args.episodes is not None:
            overrides.append(f"agent.max_episodes={args.episodes}")
        if args.seed is not None:
            overrides += [f"world.seed={args.seed}", f"agent.seed={args.seed}"]
        return cmd_train(args.config, args.out, overrides)
    if args.command == "validate":
        return cmd_validate(args.checkpoint, args.config, args.episodes, args.seed, args.out, args.set)
    if args.command == "replay":
        return cmd_replay(args.episode_log, args.episode_id, args.config)
    return cmd_report(args.run_dir)


if __name__ == "__main__":
    sys.exit(main())
