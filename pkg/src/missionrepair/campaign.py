"""Battle campaigns: novelty injection, the detect/repair loop, and metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .inconsistency import InconsistencyConfig, check
from .model import MMOCatalog, default_catalog, model_from_scenario
from .planner import Plan, State, Trajectory, expected_trajectory, plan as make_plan
from .repair import RepairExhausted, RepairMemory, repair_environment_zone, repair_model
from .scenario import ScenarioConfig
from .simulator import (
    NOVELTY_CLASSES,
    Environment,
    NoveltySpec,
    environment_from_scenario,
    execute,
    format_events,
    inject_novelty,
    sample_novelty,
)

AGENT_MODES = ("baseline", "hydra")
MIN_CALIBRATION_BATTLES = 10


class CampaignError(ValueError):
    pass


def derive_seed(master_seed: int, *keys: int) -> int:
    """Stable 63-bit seed for a (master, key...) tuple."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class CampaignConfig:
    scenario: ScenarioConfig
    battles: int = 20
    novelty: NoveltySpec | None = None
    novelty_class: str | None = None       # sampled at run time when ``novelty`` is None
    gaussian_params: dict | None = None
    t_N: int | str | None = None           # None: no novelty; "random": drawn from the seed
    agent_mode: str = "hydra"
    master_seed: int = 0
    inconsistency: InconsistencyConfig = field(default_factory=InconsistencyConfig)
    catalog: MMOCatalog | None = None
    environment: Environment | None = None
    keep_events: bool = False

    def validate(self):
        if self.battles < 1:
            raise CampaignError("battles must be >= 1")
        if self.agent_mode not in AGENT_MODES:
            raise CampaignError(f"agent_mode must be one of {AGENT_MODES}")
        if isinstance(self.t_N, int) and not 1 <= self.t_N <= self.battles + 1:
            raise CampaignError(f"t_N must lie in [1, {self.battles}] (or battles+1 for none)")
        if isinstance(self.t_N, str) and self.t_N != "random":
            raise CampaignError("t_N must be an integer or 'random'")
        if self.novelty_class is not None and self.novelty_class not in NOVELTY_CLASSES:
            raise CampaignError(f"unknown novelty class {self.novelty_class!r}")

    def resolved_novelty(self) -> NoveltySpec | None:
        if self.novelty is not None:
            return self.novelty
        if self.novelty_class is None:
            return None
        return sample_novelty({self.novelty_class: 1.0}, self.gaussian_params,
                              derive_seed(self.master_seed, 1_000_001))

    def resolved_t_n(self) -> int:
        """Injection battle; battles+1 means no novelty."""
        if self.t_N is None or (self.novelty is None and self.novelty_class is None):
            return self.battles + 1
        if self.t_N == "random":
            rng = np.random.default_rng(derive_seed(self.master_seed, 1_000_002))
            return int(rng.integers(1, self.battles + 1))
        return int(self.t_N)


@dataclass
class BattleRecord:
    index: int
    win: bool
    losses: int
    aborted: bool
    reports: dict
    c_score: float
    detected: bool
    novelty_known: bool          # agent already believed in novelty when the battle began
    novelty_reported: bool       # agent believes in novelty after the battle
    weak_fault_moved: bool
    repair: dict | None
    post_novelty: bool
    plan: str
    expected_terminal: dict
    observed_terminal: dict
    model: dict
    events: list | None = None

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "events"}
        d["reports"] = dict(sorted(self.reports.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BattleRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def run_campaign(cfg: CampaignConfig) -> list[BattleRecord]:
    """Play ``cfg.battles`` battles, threading the (possibly repaired) model through."""
    cfg.validate()
    scenario = cfg.scenario
    nominal_env = cfg.environment or environment_from_scenario(scenario)
    novelty = cfg.resolved_novelty()
    t_n = cfg.resolved_t_n()
    novel_env = inject_novelty(nominal_env, novelty, scenario) if novelty is not None else nominal_env
    catalog = cfg.catalog or default_catalog(scenario)
    inc = cfg.inconsistency
    hydra = cfg.agent_mode == "hydra"

    model = model_from_scenario(scenario)
    memory = RepairMemory()
    known = False
    records = []
    for i in range(1, cfg.battles + 1):
        post = i >= t_n
        env = novel_env if post else nominal_env
        pi = make_plan(model, scenario)
        t_e = expected_trajectory(model, pi, scenario)
        outcome = execute(env, pi, scenario, derive_seed(cfg.master_seed, i))
        rep = check(t_e, outcome.observed, inc)
        detected = hydra and rep.novelty_detected
        known_before = known
        known = known or detected
        snapshot = model.to_dict()
        repair = None
        if detected:
            try:
                if rep.weak_fault_moved:
                    result = repair_environment_zone(model, pi, outcome.observed, memory, scenario, inc)
                else:
                    result = repair_model(model, pi, outcome.observed, catalog, memory, scenario, inc)
                model = result.repaired_model
                repair = result.summary()
            except RepairExhausted as exc:
                repair = {"accepted": None, "c_before": rep.score, "c_after": rep.score,
                          "candidates_evaluated": 0, "error": str(exc)}
        records.append(BattleRecord(
            index=i, win=outcome.win, losses=outcome.losses, aborted=outcome.aborted,
            reports=outcome.reports, c_score=rep.score, detected=detected,
            novelty_known=known_before, novelty_reported=known,
            weak_fault_moved=rep.weak_fault_moved, repair=repair, post_novelty=post,
            plan=pi.to_text(), expected_terminal=t_e.terminal.to_dict(),
            observed_terminal=outcome.observed.terminal.to_dict(), model=snapshot,
            events=outcome.events if cfg.keep_events else None,
        ))
    return records


# -- metrics -------------------------------------------------------------------

@dataclass
class MetricsReport:
    detection_pct: float | None
    false_pos_pct: float | None
    false_neg_pct: float | None
    target_destroy_pre: float | None
    target_destroy_post: float | None
    aircraft_survive_pre: float | None
    aircraft_survive_post: float | None
    no_fire_destroy_pre: float | None
    no_fire_destroy_post: float | None
    repair_count: int
    inconsistency_reduction_current: float | None
    inconsistency_reduction_next: float | None

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.field_names()}


def _pct(hits: int, n: int) -> float | None:
    return None if n == 0 else 100.0 * hits / n


def _reduction(before: float, after: float) -> float | None:
    if before <= 0:
        return None
    return min(100.0, max(0.0, 100.0 * (before - after) / before))


def compute_metrics(records: list[BattleRecord], t_n: int) -> MetricsReport:
    """Campaign percentages; ``t_n`` = battles + 1 denotes a novelty-free campaign.

    False negatives are post-novelty battles fought before the agent had flagged the
    novelty, over all battles; detection counts post-novelty battles after which the
    agent reports novelty.
    """
    if not records:
        raise CampaignError("no battle records")
    n = len(records)
    if not 1 <= t_n <= n + 1:
        raise CampaignError(f"t_N={t_n} out of range for {n} battles")
    pre = [r for r in records if r.index < t_n]
    post = [r for r in records if r.index >= t_n]
    no_fire = "no_fire_entity_destroyed"
    repairs = [r for r in records if r.repair and r.repair.get("accepted")]
    current = nxt = None
    if repairs:
        first, last = repairs[0], repairs[-1]
        current = _reduction(first.repair["c_before"], first.repair["c_after"])
        following = [r for r in records if r.index == last.index + 1]
        if following:
            nxt = _reduction(first.repair["c_before"], following[0].c_score)
    return MetricsReport(
        detection_pct=_pct(sum(r.novelty_reported for r in post), len(post)),
        false_pos_pct=_pct(sum(r.detected for r in pre), len(pre)),
        false_neg_pct=_pct(sum(not r.novelty_known for r in post), n),
        target_destroy_pre=_pct(sum(r.win for r in pre), len(pre)),
        target_destroy_post=_pct(sum(r.win for r in post), len(post)),
        aircraft_survive_pre=_pct(sum(r.losses == 0 for r in pre), len(pre)),
        aircraft_survive_post=_pct(sum(r.losses == 0 for r in post), len(post)),
        no_fire_destroy_pre=_pct(sum(bool(r.reports.get(no_fire)) for r in pre), len(pre)),
        no_fire_destroy_post=_pct(sum(bool(r.reports.get(no_fire)) for r in post), len(post)),
        repair_count=len(repairs),
        inconsistency_reduction_current=current,
        inconsistency_reduction_next=nxt,
    )


def calibrate_thresholds(scenario: ScenarioConfig, n_clean_battles: int, master_seed: int,
                         base: InconsistencyConfig | None = None, margin: float = 1.0,
                         executor=execute, environment: Environment | None = None
                         ) -> InconsistencyConfig:
    """Set the detection threshold and weak-fault distance from novelty-free battles.

    The threshold is the midpoint between the largest clean score and one unit of
    injected inconsistency; the weak-fault distance sits ``margin`` above the largest
    clean terminal displacement.
    """
    if n_clean_battles < MIN_CALIBRATION_BATTLES:
        raise CampaignError(f"calibration needs at least {MIN_CALIBRATION_BATTLES} battles")
    base = base or InconsistencyConfig()
    probe = InconsistencyConfig(base.gamma, dict(base.weights), 0.0, math.inf, "terminal_only")
    env = environment or environment_from_scenario(scenario)
    model = model_from_scenario(scenario)
    pi = make_plan(model, scenario)
    t_e = expected_trajectory(model, pi, scenario)
    max_score = 0.0
    max_disp = 0.0
    for i in range(1, n_clean_battles + 1):
        outcome = executor(env, pi, scenario, derive_seed(master_seed, i))
        max_score = max(max_score, check(t_e, outcome.observed, probe).score)
        for ag, a_e in t_e.terminal.aircraft.items():
            a_o = outcome.observed.terminal.aircraft[ag]
            if a_e.alive and a_o.alive:
                max_disp = max(max_disp, math.dist(a_e.pos, a_o.pos))
    return InconsistencyConfig(base.gamma, dict(base.weights), (max_score + 1.0) / 2.0,
                               max_disp + margin, base.mode)


# -- output --------------------------------------------------------------------

def records_to_jsonl(records: list[BattleRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


def records_from_jsonl(text: str) -> list[BattleRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(BattleRecord.from_dict(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise CampaignError(f"corrupt campaign log at line {n}: {exc}") from exc
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def metrics_to_csv(rows: list[dict], leading: list[str] | None = None) -> str:
    leading = leading or []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(leading + MetricsReport.field_names())
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in leading + MetricsReport.field_names()])
    return buf.getvalue()


def metrics_table(m: MetricsReport) -> str:
    width = max(len(k) for k in MetricsReport.field_names())
    return "".join(f"{k:<{width}}  {_fmt(v) or '-'}\n" for k, v in m.to_dict().items())


def atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_campaign(out_dir, records: list[BattleRecord], metrics: MetricsReport, header: dict,
                   verbose: bool = False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "campaign.jsonl", records_to_jsonl(records))
    atomic_write(out / "metrics.csv", metrics_to_csv([metrics.to_dict()]))
    doc = {"campaign": header, "metrics": metrics.to_dict()}
    atomic_write(out / "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    atomic_write(out / "summary.txt", metrics_table(metrics))
    if verbose:
        for r in records:
            if r.events is not None:
                atomic_write(out / f"battle_{r.index:03d}.log", format_events(r.events))


def replay_record(record: BattleRecord, inc: InconsistencyConfig):
    """Recompute a battle's inconsistency from its logged terminal states."""
    t_e = Trajectory([], State.from_dict(record.expected_terminal))
    t_o = Trajectory([], State.from_dict(record.observed_terminal))
    return check(t_e, t_o, InconsistencyConfig(inc.gamma, dict(inc.weights), inc.threshold,
                                               inc.weak_fault_distance, "terminal_only"))


def record_plan(record: BattleRecord) -> Plan:
    return Plan.from_text(record.plan)

