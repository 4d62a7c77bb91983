"""Greedy model repair over MMO candidates, with zone memory."""

from __future__ import annotations

from dataclasses import dataclass, field

from .inconsistency import InconsistencyConfig, inconsistency_terminal
from .model import MMO, MMOCatalog, ModelError, PlanningModel, apply_mmo, enumerate_mmos, zone_cell
from .planner import Plan, Trajectory, chebyshev, expected_trajectory
from .scenario import Cell, ScenarioConfig


class RepairError(RuntimeError):
    pass


class RepairExhausted(RepairError):
    """No untried zone hypothesis is left on the executed route."""


@dataclass(frozen=True)
class Repair:
    mmos: tuple
    zone_offset: tuple | None = None

    def __str__(self) -> str:
        return ";".join(str(op) for op in self.mmos)


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


@dataclass
class RepairMemory:
    """Previously accepted zone cells, kept relative to the latest accepted one.

    ``entries`` are offsets from ``anchor`` (the latest accepted cell, so the newest
    entry is always (0, 0)); ``steps`` is the relative path between consecutive
    repairs. Accepting a repair at offset R rebases every entry by -R.
    """

    anchor: Cell | None = None
    entries: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def offset(self, cell: Cell) -> tuple | None:
        return None if self.anchor is None else _sub(cell, self.anchor)

    def __contains__(self, cell: Cell) -> bool:
        return self.anchor is not None and self.offset(cell) in self.entries

    def accept(self, cell: Cell, origin: Cell) -> tuple:
        if self.anchor is None:
            self.anchor = origin
        step = _sub(cell, self.anchor)
        self.entries = [_sub(e, step) for e in self.entries] + [(0, 0)]
        self.anchor = cell
        self.steps.append(step)
        return step

    def absolute_cells(self) -> list:
        if self.anchor is None:
            return []
        return [(self.anchor[0] + e[0], self.anchor[1] + e[1]) for e in self.entries]

    def to_dict(self) -> dict:
        return {"anchor": list(self.anchor) if self.anchor else None,
                "entries": [list(e) for e in self.entries],
                "steps": [list(s) for s in self.steps]}


@dataclass
class RepairResult:
    accepted: Repair | None
    c_before: float
    c_after: float
    candidates_evaluated: int
    repaired_model: PlanningModel

    def summary(self) -> dict:
        return {"accepted": str(self.accepted) if self.accepted else None,
                "c_before": self.c_before, "c_after": self.c_after,
                "candidates_evaluated": self.candidates_evaluated}


def estimate_inconsistency(m: PlanningModel, plan: Plan, t_o: Trajectory, cfg: ScenarioConfig,
                           inc: InconsistencyConfig) -> float:
    """Score of the observation against ``m``'s prediction for the executed plan."""
    return inconsistency_terminal(expected_trajectory(m, plan, cfg), t_o, inc).score


def evaluate_candidates(m, plan, t_o, candidates, cfg, inc, ref_pos) -> list:
    out = []
    for op in candidates:
        m2 = apply_mmo(m, op, ref_pos)
        out.append((op, estimate_inconsistency(m2, plan, t_o, cfg, inc), m2))
    return out


def repair_model(m: PlanningModel, plan: Plan, t_o: Trajectory, catalog: MMOCatalog,
                 memory: RepairMemory, cfg: ScenarioConfig, inc: InconsistencyConfig,
                 ref_pos: Cell | None = None, accept_ratio: float = 0.5,
                 max_rounds: int | None = None) -> RepairResult:
    """Greedy search for the MMO sequence that best explains ``t_o``.

    Each round evaluates every applicable candidate on a copy of the model and commits
    the best one that lowers the score below both the current best and
    ``accept_ratio`` times it. Ties go to the candidate touching fewer model aspects,
    then the smaller change, then catalog order. Rounds stop once the score is at or
    under the threshold or nothing improves.
    """
    if not catalog.entries:
        raise RepairError("empty MMO catalog")
    ref = ref_pos if ref_pos is not None else m.home_base
    c_before = estimate_inconsistency(m, plan, t_o, cfg, inc)
    c_best = c_before
    current = m
    accepted: list = []
    zone_offset = None
    evaluated = 0
    rounds = 0
    while c_best > inc.threshold and (max_rounds is None or rounds < max_rounds):
        rounds += 1
        candidates = [op for op in enumerate_mmos(catalog, current, ref)
                      if not (op.is_zone and zone_cell(op, ref) in memory)]
        scored = evaluate_candidates(current, plan, t_o, candidates, cfg, inc, ref)
        evaluated += len(scored)
        best = None
        for idx, (op, c_new, m2) in enumerate(scored):
            if not (c_new < c_best and c_new <= accept_ratio * c_best):
                continue
            aspects = len({o.field for o in accepted} | {op.field})
            key = (c_new, aspects, op.magnitude(), idx)
            if best is None or key < best[0]:
                best = (key, op, c_new, m2)
        if best is None:
            break
        _, op, c_best, current = best
        accepted.append(op)
        if op.is_zone:
            zone_offset = memory.accept(zone_cell(op, ref), ref)
    repair = Repair(tuple(accepted), zone_offset) if accepted else None
    return RepairResult(repair, c_before, c_best, evaluated, current)


def route_candidates(plan: Plan, memory: RepairMemory | None = None) -> list:
    """Outbound route cells (home base excluded) in flight order.

    Cells beyond the latest accepted hypothesis (by distance from base) come first, so
    successive hypotheses advance along the route instead of circling the base.
    """
    cells = list(plan.route[1:])
    if not cells or memory is None or memory.anchor is None:
        return cells
    base = plan.route[0]
    frontier = chebyshev(memory.anchor, base)
    ahead = [c for c in cells if chebyshev(c, base) > frontier]
    return ahead + [c for c in cells if c not in ahead]


def repair_environment_zone(m: PlanningModel, plan: Plan, t_o: Trajectory, memory: RepairMemory,
                            cfg: ScenarioConfig, inc: InconsistencyConfig,
                            ref_pos: Cell | None = None) -> RepairResult:
    """Hypothesize one environment zone on the executed route.

    Route cells are tried in :func:`route_candidates` order, skipping cells
    already remembered or already believed hazardous; the first that makes the
    observation consistent is committed (else the best improving one). Raises
    :class:`RepairExhausted` when no untried cell explains anything.
    """
    ref = ref_pos if ref_pos is not None else m.home_base
    c_before = estimate_inconsistency(m, plan, t_o, cfg, inc)
    if c_before <= inc.threshold:
        return RepairResult(None, c_before, c_before, 0, m)
    evaluated = 0
    best = None
    for cell in route_candidates(plan, memory):
        if cell == m.home_base or cell in memory or cell in m.env_zones:
            continue
        op = MMO("env_zones", _sub(cell, ref), relative=True)
        try:
            m2 = apply_mmo(m, op, ref)
        except ModelError:
            continue
        c_new = estimate_inconsistency(m2, plan, t_o, cfg, inc)
        evaluated += 1
        if c_new < c_before and (best is None or c_new < best[1]):
            best = (op, c_new, m2, cell)
        if c_new <= inc.threshold:
            break
    if best is None:
        raise RepairExhausted("no untried zone on the executed route explains the observation")
    op, c_after, m2, cell = best
    step = memory.accept(cell, ref)
    return RepairResult(Repair((op,), step), c_before, c_after, evaluated, m2)
