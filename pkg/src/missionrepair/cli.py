"""Command-line front end: run, calibrate, render, replay, sweep."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .campaign import (
    CampaignConfig,
    CampaignError,
    MetricsReport,
    atomic_write,
    calibrate_thresholds,
    compute_metrics,
    metrics_table,
    metrics_to_csv,
    record_plan,
    records_from_jsonl,
    replay_record,
    run_campaign,
    write_campaign,
)
from .inconsistency import InconsistencyConfig
from .scenario import Overlay, ScenarioError, load_scenario, render_grid
from .simulator import NOVELTY_CLASSES, NoveltyError, NoveltySpec

SEED_ENV = "MISSIONREPAIR_SEED"
EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _tn(value: str):
    if value == "random":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'random'")


def _inc_args(p):
    p.add_argument("--threshold", type=float, default=0.5, help="detection threshold T (default 0.5)")
    p.add_argument("--weak-fault-distance", type=float, default=3.0,
                   help="terminal displacement counted as a failed move (default 3.0)")
    p.add_argument("--mode", choices=("terminal_only", "full_trace"), default="terminal_only",
                   help="inconsistency comparison mode")


def _inc_config(args) -> InconsistencyConfig:
    try:
        return InconsistencyConfig(threshold=args.threshold,
                                   weak_fault_distance=args.weak_fault_distance, mode=args.mode)
    except ValueError as exc:
        raise UsageError(str(exc))


def _campaign_args(p):
    p.add_argument("--tn", type=_tn, default=5,
                   help="battle index at which novelty is injected, or 'random' (default 5)")
    p.add_argument("--agent", choices=("baseline", "hydra"), default="hydra", help="agent mode")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--battles", type=int, default=20, help="battles per campaign (default 20)")
    p.add_argument("--strength", type=float, default=None,
                   help="fixed novelty strength instead of a Gaussian draw")
    _inc_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="missionrepair", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one campaign and write logs and metrics")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("--novelty", choices=NOVELTY_CLASSES + ("none",), default="none",
                   help="novelty class to inject")
    _campaign_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verbose", action="store_true", help="also write per-battle event logs")

    p = sub.add_parser("calibrate", help="learn thresholds from novelty-free battles")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("--battles", type=int, default=20, help="clean battles to run (>= 10)")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--margin", type=float, default=1.0, help="weak-fault margin above the clean maximum")
    p.add_argument("--out", default=None, help="write the calibrated config to this file")

    p = sub.add_parser("render", help="print the grid, optionally with logged routes")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("--route-from", metavar="LOG", default=None, help="campaign log (campaign.jsonl)")
    p.add_argument("--battle", type=int, action="append", default=[],
                   help="battle index to overlay; repeat to compare routes")

    p = sub.add_parser("replay", help="recompute inconsistency from a campaign log")
    p.add_argument("log", help="campaign log (campaign.jsonl)")
    p.add_argument("--battle", type=int, action="append", default=[], help="battle index (repeatable)")
    _inc_args(p)

    p = sub.add_parser("sweep", help="run campaigns over seeds and novelty classes")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("--seeds", type=int, default=20, help="campaigns per class (>= 1)")
    p.add_argument("--novelty", default="all",
                   help="'all' or a comma-separated list of novelty classes")
    _campaign_args(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _load(path: str):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc.strerror or exc}")
    except ScenarioError as exc:
        raise UsageError(f"{path}: {exc}")


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _campaign_config(args, scenario, cls: str | None, seed: int) -> CampaignConfig:
    novelty = None
    novelty_class = None
    if cls is not None:
        if args.strength is not None:
            novelty = NoveltySpec(cls, args.strength)
        else:
            novelty_class = cls
    cfg = CampaignConfig(scenario, battles=args.battles, novelty=novelty,
                         novelty_class=novelty_class, t_N=args.tn if cls else None,
                         agent_mode=args.agent, master_seed=seed,
                         inconsistency=_inc_config(args))
    try:
        cfg.validate()
    except CampaignError as exc:
        raise UsageError(str(exc))
    return cfg


def _header(cfg: CampaignConfig) -> dict:
    novelty = cfg.resolved_novelty()
    return {"agent_mode": cfg.agent_mode, "battles": cfg.battles, "master_seed": cfg.master_seed,
            "t_N": cfg.resolved_t_n(), "novelty": novelty.to_dict() if novelty else None,
            "inconsistency": cfg.inconsistency.to_dict()}


def _play(cfg: CampaignConfig):
    try:
        records = run_campaign(cfg)
    except (NoveltyError, CampaignError) as exc:
        raise UsageError(str(exc))
    return records, compute_metrics(records, cfg.resolved_t_n())


def _write(out, records, metrics, header, verbose=False):
    try:
        write_campaign(out, records, metrics, header, verbose)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc.strerror or exc}")


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    cls = None if args.novelty == "none" else args.novelty
    cfg = _campaign_config(args, scenario, cls, _seed(args))
    cfg.keep_events = args.verbose
    records, metrics = _play(cfg)
    _write(args.out, records, metrics, _header(cfg), args.verbose)
    sys.stdout.write(metrics_table(metrics))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    scenario = _load(args.scenario)
    try:
        inc = calibrate_thresholds(scenario, args.battles, _seed(args), margin=args.margin)
    except CampaignError as exc:
        raise UsageError(str(exc))
    text = yaml.safe_dump(inc.to_dict(), sort_keys=True)
    if args.out:
        try:
            atomic_write(Path(args.out), text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror or exc}")
    sys.stdout.write(text)
    return EXIT_OK


class CorruptLog(Exception):
    pass


def _read_log(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read log {path}: {exc.strerror or exc}")
    try:
        records = records_from_jsonl(text)
        for r in records:
            record_plan(r)
    except (CampaignError, ValueError, KeyError, IndexError) as exc:
        raise CorruptLog(str(exc))
    return {r.index: r for r in records}


def _pick(records: dict, indices: list) -> list:
    missing = [i for i in indices if i not in records]
    if missing:
        raise UsageError(f"battle {missing[0]} not in log")
    return [records[i] for i in indices]


def cmd_render(args) -> int:
    scenario = _load(args.scenario)
    overlay = None
    if args.route_from:
        if not args.battle:
            raise UsageError("--route-from needs at least one --battle")
        chosen = _pick(_read_log(args.route_from), args.battle)
        routes, zones, fires = [], set(), set()
        for r in chosen:
            pi = record_plan(r)
            routes.append(list(pi.route) if pi.route else [scenario.home_base.position])
            zones |= {tuple(c) for c in r.model.get("env_zones", [])}
            zones |= {tuple(c) for c in r.model.get("no_fly_zones", [])}
            if pi.fire_cell is not None:
                fires.add(tuple(pi.fire_cell))
        overlay = Overlay(tuple(routes), frozenset(zones), frozenset(fires))
    elif args.battle:
        raise UsageError("--battle needs --route-from")
    try:
        sys.stdout.write(render_grid(scenario, overlay))
    except ScenarioError as exc:
        raise CorruptLog(str(exc))
    if overlay is not None:
        for glyph, r in zip("*o+#", chosen):
            sys.stdout.write(f"{glyph} battle {r.index}\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    records = _read_log(args.log)
    chosen = _pick(records, args.battle) if args.battle else [records[i] for i in sorted(records)]
    inc = _inc_config(args)
    for r in chosen:
        rep = replay_record(r, inc)
        status = "ok" if abs(rep.score - r.c_score) < 1e-9 else "differs"
        sys.stdout.write(f"battle {r.index}: logged {r.c_score:g} replayed {rep.score:g} "
                         f"detected={rep.novelty_detected} {status}\n")
    return EXIT_OK


def _sweep_one(job):
    args, scenario, cls, seed, out = job
    cfg = _campaign_config(args, scenario, cls, seed)
    records, metrics = _play(cfg)
    _write(out, records, metrics, _header(cfg))
    return cls, seed, metrics.to_dict()


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def cmd_sweep(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    classes = list(NOVELTY_CLASSES) if args.novelty == "all" else args.novelty.split(",")
    unknown = [c for c in classes if c not in NOVELTY_CLASSES]
    if unknown:
        raise UsageError(f"unknown novelty class {unknown[0]!r}")
    scenario = _load(args.scenario)
    base = _seed(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc.strerror or exc}")
    jobs = [(args, scenario, cls, base + k, out / cls / f"seed_{base + k}")
            for cls in classes for k in range(args.seeds)]
    if args.jobs == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    rows = []
    for cls in classes:
        per = [m for c, _, m in results if c == cls]
        row = {"novelty": cls, "seeds": len(per)}
        for name in MetricsReport.field_names():
            row[name] = _mean([m[name] for m in per])
        rows.append(row)
    try:
        atomic_write(out / "sweep.csv", metrics_to_csv(rows, ["novelty", "seeds"]))
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc.strerror or exc}")
    sys.stdout.write(metrics_to_csv(rows, ["novelty", "seeds"]))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "calibrate": cmd_calibrate, "render": cmd_render,
            "replay": cmd_replay, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorruptLog as exc:
        print(f"error: corrupt log: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
