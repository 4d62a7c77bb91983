"""Divergence between expected and observed trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .planner import Trajectory

DEFAULT_WEIGHTS = {
    "aircraft_status": 10.0,
    "entity_status": 1.0,
    "position": 5.0,
    "report": 1.0,
}


class InconsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class InconsistencyConfig:
    gamma: float = 0.9
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    threshold: float = 0.5
    weak_fault_distance: float = 3.0
    mode: str = "terminal_only"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.threshold < 0 or self.weak_fault_distance < 0:
            raise ValueError("thresholds must be nonnegative")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative")
        if self.mode not in ("terminal_only", "full_trace"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def weight(self, feature: str) -> float:
        return self.weights.get(feature, DEFAULT_WEIGHTS.get(feature, 1.0))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "weights": dict(sorted(self.weights.items())),
                "threshold": self.threshold, "weak_fault_distance": self.weak_fault_distance,
                "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "InconsistencyConfig":
        return cls(d["gamma"], dict(d["weights"]), d["threshold"], d["weak_fault_distance"],
                   d["mode"])


@dataclass
class InconsistencyReport:
    score: float
    per_feature: dict
    novelty_detected: bool
    weak_fault_moved: bool = False

    def to_dict(self) -> dict:
        return {"score": self.score, "per_feature": dict(sorted(self.per_feature.items())),
                "novelty_detected": self.novelty_detected,
                "weak_fault_moved": self.weak_fault_moved}


def _check_agents(t_e: Trajectory, t_o: Trajectory):
    if t_e.agents != t_o.agents:
        raise InconsistencyError(
            f"agent sets differ: expected {sorted(t_e.agents)}, observed {sorted(t_o.agents)}")


def _report(per_feature: dict, cfg: InconsistencyConfig, moved: bool = False) -> InconsistencyReport:
    score = float(sum(per_feature.values()))
    return InconsistencyReport(score, per_feature, score > cfg.threshold, moved)


def inconsistency_full(t_e: Trajectory, t_o: Trajectory,
                       cfg: InconsistencyConfig) -> InconsistencyReport:
    """Discounted per-step comparison over each agent's aligned tuples.

    Step i of agent ``ag`` contributes ``gamma**i`` times the weighted distance between
    the two states: Euclidean position distance plus the alive-flag difference.
    """
    _check_agents(t_e, t_o)
    if not t_e.steps or not t_o.steps:
        raise InconsistencyError("trajectories must be nonempty")
    w_pos = cfg.weight("position")
    w_status = cfg.weight("aircraft_status")
    per_feature: dict = {}
    for ag in sorted(t_e.agents):
        seq_e, seq_o = t_e.for_agent(ag), t_o.for_agent(ag)
        pos_sum = 0.0
        status_sum = 0.0
        for i in range(min(len(seq_e), len(seq_o))):
            a_e = seq_e[i].state.aircraft[ag]
            a_o = seq_o[i].state.aircraft[ag]
            disc = cfg.gamma ** i
            pos_sum += disc * w_pos * math.dist(a_e.pos, a_o.pos)
            status_sum += disc * w_status * abs(int(a_e.alive) - int(a_o.alive))
        per_feature[f"position:{ag}"] = pos_sum
        per_feature[f"aircraft_status:{ag}"] = status_sum
    return _report(per_feature, cfg)


def _displacements(t_e: Trajectory, t_o: Trajectory) -> dict:
    out = {}
    for ag in sorted(t_e.agents):
        e, o = t_e.terminal.aircraft[ag], t_o.terminal.aircraft[ag]
        if e.alive and o.alive:
            out[ag] = math.dist(e.pos, o.pos)
    return out


def weak_fault_location(t_e: Trajectory, t_o: Trajectory, cfg: InconsistencyConfig) -> bool:
    """True when some surviving aircraft ended farther than the learned distance from
    where it was expected to end (strict comparison)."""
    return any(d > cfg.weak_fault_distance for d in _displacements(t_e, t_o).values())


def inconsistency_terminal(t_e: Trajectory, t_o: Trajectory,
                           cfg: InconsistencyConfig) -> InconsistencyReport:
    """Weighted comparison of terminal states only.

    Positions are compared through the weak-fault predicate: an aircraft counts as
    "failed to move" when it ends more than ``weak_fault_distance`` from its expected
    terminal cell, and the term fires when that disagrees with the model's prediction.
    Destroyed aircraft are compared on status alone.
    """
    _check_agents(t_e, t_o)
    te, to = t_e.terminal, t_o.terminal
    per_feature: dict = {}
    for ag in sorted(te.aircraft):
        e, o = te.aircraft[ag], to.aircraft[ag]
        per_feature[f"aircraft_status:{ag}"] = cfg.weight("aircraft_status") * abs(int(e.alive) - int(o.alive))
        if e.alive and o.alive:
            moved = math.dist(e.pos, o.pos) > cfg.weak_fault_distance
            per_feature[f"position:{ag}"] = cfg.weight("position") * abs(int(moved) - int(e.displaced))
    for eid in sorted(set(te.entities) | set(to.entities)):
        ev, ov = te.entities.get(eid, True), to.entities.get(eid, True)
        per_feature[f"entity_status:{eid}"] = cfg.weight("entity_status") * abs(int(ev) - int(ov))
    for flag in sorted(set(te.reports) | set(to.reports)):
        ev, ov = te.reports.get(flag, False), to.reports.get(flag, False)
        per_feature[f"report:{flag}"] = cfg.weight("report") * abs(int(ev) - int(ov))
    return _report(per_feature, cfg, weak_fault_location(t_e, t_o, cfg))


def check(t_e: Trajectory, t_o: Trajectory, cfg: InconsistencyConfig) -> InconsistencyReport:
    if cfg.mode == "full_trace":
        return inconsistency_full(t_e, t_o, cfg)
    return inconsistency_terminal(t_e, t_o, cfg)
