"""Centralized multi-aircraft planner and the model's forward simulation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .model import PlanningModel
from .scenario import ENEMY_KINDS, Cell, ScenarioConfig

LETHAL = math.inf
# fixed neighbour order; part of the deterministic tie-break
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
ACTION_KINDS = ("move", "fire", "return_to_base", "abort")
NO_FIRE_REPORT = "no_fire_entity_destroyed"


class PlanError(ValueError):
    pass


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass(frozen=True)
class Action:
    agent: str
    kind: str
    start_step: int
    duration: int = 1
    to: Cell | None = None
    target: str | None = None
    path: tuple = ()

    @property
    def end_step(self) -> int:
        return self.start_step + self.duration

    def to_line(self) -> str:
        head = f"{self.start_step} {self.agent} {self.kind}"
        if self.kind == "move":
            return f"{head} {self.to[0]} {self.to[1]}"
        if self.kind == "fire":
            return f"{head} {self.target}"
        if self.kind == "return_to_base":
            return head + "".join(f" {r},{c}" for r, c in self.path)
        return head

    @classmethod
    def from_line(cls, line: str) -> "Action":
        parts = line.split()
        if len(parts) < 3:
            raise PlanError(f"malformed plan line {line!r}")
        step, agent, kind, args = int(parts[0]), parts[1], parts[2], parts[3:]
        if kind == "move":
            return cls(agent, kind, step, 1, to=(int(args[0]), int(args[1])))
        if kind == "fire":
            return cls(agent, kind, step, 1, target=args[0])
        if kind == "return_to_base":
            path = tuple(tuple(int(v) for v in a.split(",")) for a in args)
            return cls(agent, kind, step, len(path), path=path)
        if kind == "abort":
            return cls(agent, kind, step, 1)
        raise PlanError(f"unknown action kind {kind!r}")


@dataclass(frozen=True)
class Plan:
    per_agent: dict
    makespan: int
    route: tuple = ()          # outbound cells, home base first
    fire_cell: Cell | None = None

    @property
    def aborted(self) -> bool:
        return any(a.kind == "abort" for acts in self.per_agent.values() for a in acts)

    def actions(self) -> list[Action]:
        """All actions in schedule order (start step, then agent id)."""
        acts = [a for agent in sorted(self.per_agent) for a in self.per_agent[agent]]
        return sorted(acts, key=lambda a: (a.start_step, a.agent))

    def to_text(self) -> str:
        return "".join(a.to_line() + "\n" for a in self.actions())

    @classmethod
    def from_text(cls, text: str) -> "Plan":
        per_agent: dict = {}
        for line in text.splitlines():
            if line.strip():
                a = Action.from_line(line)
                per_agent.setdefault(a.agent, []).append(a)
        makespan = max((a.end_step for acts in per_agent.values() for a in acts), default=0)
        route: list = []
        fire_cell = None
        if per_agent:
            first = per_agent[sorted(per_agent)[0]]
            moves = [a.to for a in first if a.kind == "move"]
            ret = [a for a in first if a.kind == "return_to_base"]
            if moves:
                route = ([ret[0].path[-1]] if ret else []) + moves
                fire_cell = moves[-1]
        return cls({k: tuple(v) for k, v in per_agent.items()}, makespan, tuple(route), fire_cell)


# -- state and trajectories ----------------------------------------------------

@dataclass
class AircraftState:
    alive: bool
    pos: Cell
    displaced: bool = False
    aborted: bool = False


@dataclass
class State:
    aircraft: dict
    entities: dict
    reports: dict = field(default_factory=dict)

    def copy(self) -> "State":
        return State(
            {k: AircraftState(v.alive, v.pos, v.displaced, v.aborted) for k, v in self.aircraft.items()},
            dict(self.entities),
            dict(self.reports),
        )

    def to_dict(self) -> dict:
        return {
            "aircraft": {k: {"alive": v.alive, "pos": list(v.pos), "displaced": v.displaced,
                             "aborted": v.aborted}
                         for k, v in sorted(self.aircraft.items())},
            "entities": dict(sorted(self.entities.items())),
            "reports": dict(sorted(self.reports.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "State":
        aircraft = {k: AircraftState(v["alive"], tuple(v["pos"]), v.get("displaced", False),
                                     v.get("aborted", False))
                    for k, v in d["aircraft"].items()}
        return cls(aircraft, dict(d["entities"]), dict(d.get("reports", {})))


@dataclass
class Step:
    state: State
    agent: str
    action: Action | None


@dataclass
class Trajectory:
    steps: list
    terminal: State

    def for_agent(self, agent: str) -> list[Step]:
        return [s for s in self.steps if s.agent == agent]

    @property
    def agents(self) -> set:
        return set(self.terminal.aircraft)


def initial_state(cfg: ScenarioConfig) -> State:
    base = cfg.home_base.position
    observed = [e for e in cfg.entities if e.kind in ENEMY_KINDS or e.kind == "neutral"]
    return State(
        {a.id: AircraftState(True, base) for a in cfg.aircraft},
        {e.id: True for e in observed},
        {NO_FIRE_REPORT: False},
    )


# -- planning ------------------------------------------------------------------

def threat_field(m: PlanningModel, cfg: ScenarioConfig) -> np.ndarray:
    """Per-cell traversal cost under the model: 1.0, or LETHAL inside believed hazards."""
    cost = np.ones((cfg.grid.rows, cfg.grid.cols))
    for eid, rng in sorted(m.weapon_range.items()):
        if rng <= 0 or not cfg.has_entity(eid):
            continue
        r0, c0 = cfg.entity(eid).position
        cost[max(0, r0 - rng):r0 + rng + 1, max(0, c0 - rng):c0 + rng + 1] = LETHAL
    for r, c in m.env_zones | m.no_fly_zones:
        cost[r, c] = LETHAL
    return cost


def shortest_paths(cost: np.ndarray, start: Cell):
    """Dijkstra over the 8-connected grid; entering a cell costs its field value.

    Returns (dist, pred). Heap entries are (cost, row, col) and predecessors are only
    replaced on strict improvement, which fixes the tie-break.
    """
    rows, cols = cost.shape
    dist = {start: 0.0}
    pred: dict = {}
    heap = [(0.0, start[0], start[1])]
    done = set()
    while heap:
        d, r, c = heapq.heappop(heap)
        if (r, c) in done:
            continue
        done.add((r, c))
        for dr, dc in NEIGHBOURS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or cost[nr, nc] == LETHAL:
                continue
            nd = d + cost[nr, nc]
            if nd < dist.get((nr, nc), math.inf):
                dist[(nr, nc)] = nd
                pred[(nr, nc)] = (r, c)
                heapq.heappush(heap, (nd, nr, nc))
    return dist, pred


def _walk_back(pred: dict, start: Cell, goal: Cell) -> list[Cell]:
    path = [goal]
    while path[-1] != start:
        path.append(pred[path[-1]])
    return path[::-1]


def abort_plan(cfg: ScenarioConfig) -> Plan:
    per_agent = {a.id: (Action(a.id, "abort", 0, 1),) for a in cfg.aircraft}
    base = cfg.home_base.position
    return Plan(per_agent, 1, (base,), None)


def plan(m: PlanningModel, cfg: ScenarioConfig, max_route_length: int | None = None) -> Plan:
    """Strike plan: shortest safe route to a standoff cell, fire, fly the route back.

    Falls back to an abort plan when a no-fire entity is believed near the target, no
    safe standoff cell is reachable, the route exceeds ``max_route_length`` or the
    loadout cannot cover the believed target HP.
    """
    target = cfg.target
    if m.no_fire(target.id):
        return abort_plan(cfg)
    base = cfg.home_base.position
    cost = threat_field(m, cfg)
    if cost[base] == LETHAL:
        return abort_plan(cfg)
    dist, pred = shortest_paths(cost, base)
    goals = [c for c in dist
             if c != target.position and chebyshev(c, target.position) <= m.friendly_missile_range]
    if not goals:
        return abort_plan(cfg)
    goal = min(goals, key=lambda c: (dist[c], c))
    route = _walk_back(pred, base, goal)
    legs = len(route) - 1
    cap = max_route_length if max_route_length is not None else cfg.grid.rows * cfg.grid.cols
    if 2 * legs > cap:
        return abort_plan(cfg)

    aircraft = sorted(cfg.aircraft, key=lambda a: a.id)
    needed = max(1, math.ceil(m.entity_hp.get(target.id, 1)))
    shots = {a.id: 0 for a in aircraft}
    remaining = needed
    while remaining:
        progressed = False
        for a in aircraft:
            if remaining and shots[a.id] < a.missiles:
                shots[a.id] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            return abort_plan(cfg)

    volley = max(shots.values())
    back = tuple(reversed(route[:-1]))
    per_agent = {}
    for a in aircraft:
        acts = [Action(a.id, "move", i, 1, to=route[i + 1]) for i in range(legs)]
        acts += [Action(a.id, "fire", legs + k, 1, target=target.id) for k in range(shots[a.id])]
        if back:
            acts.append(Action(a.id, "return_to_base", legs + volley, len(back), path=back))
        per_agent[a.id] = tuple(acts)
    return Plan(per_agent, 2 * legs + volley, tuple(route), goal)


def route_cost(route, cost: np.ndarray) -> float:
    return float(sum(cost[c] for c in route[1:]))


# -- expected trajectory -------------------------------------------------------

def believed_lethal(m: PlanningModel, cfg: ScenarioConfig, cell: Cell) -> bool:
    for eid, rng in m.weapon_range.items():
        if rng > 0 and cfg.has_entity(eid) and chebyshev(cell, cfg.entity(eid).position) <= rng:
            return True
    return False


def _check_plan(plan_: Plan, cfg: ScenarioConfig):
    ids = {a.id for a in cfg.aircraft}
    for agent, acts in plan_.per_agent.items():
        if agent not in ids:
            raise PlanError(f"plan references unknown aircraft {agent!r}")
        for a in acts:
            if a.kind == "fire" and not cfg.has_entity(a.target):
                raise PlanError(f"plan fires at unknown entity {a.target!r}")
            cells = ([a.to] if a.to is not None else []) + list(a.path)
            for c in cells:
                if not cfg.grid.contains(c):
                    raise PlanError(f"plan leaves the grid at {c}")


def expected_trajectory(m: PlanningModel, plan_: Plan, cfg: ScenarioConfig) -> Trajectory:
    """Forward-simulate ``plan_`` under the model, one tuple per scheduled action.

    The model is deterministic: entering a believed weapon envelope destroys the
    aircraft on the spot, entering a believed environment zone displaces it (mission
    over), entering a believed no-fly zone turns it back to base without firing.
    """
    _check_plan(plan_, cfg)
    state = initial_state(cfg)
    hp = dict(m.entity_hp)
    base = cfg.home_base.position
    steps = []

    def enter(agent: str, cell: Cell):
        ac = state.aircraft[agent]
        ac.pos = cell
        if believed_lethal(m, cfg, cell):
            ac.alive = False
        elif cell in m.env_zones:
            # position unknowable; keep the planned end so the observation is judged
            # by the displacement predicate alone
            ac.displaced = True
            ac.aborted = True
            ac.pos = base
        elif cell in m.no_fly_zones:
            ac.aborted = True
            ac.pos = base

    for action in plan_.actions():
        steps.append(Step(state.copy(), action.agent, action))
        ac = state.aircraft[action.agent]
        if not ac.alive or ac.aborted:
            continue
        if action.kind == "move":
            enter(action.agent, action.to)
        elif action.kind == "return_to_base":
            for cell in action.path:
                enter(action.agent, cell)
                if not ac.alive or ac.aborted:
                    break
        elif action.kind == "fire":
            tid = action.target
            if state.entities.get(tid, False):
                hp[tid] = hp.get(tid, 1) - 1
                if hp[tid] <= 0:
                    state.entities[tid] = False
            if m.no_fire(tid):
                state.reports[NO_FIRE_REPORT] = True
    return Trajectory(steps, state.copy())
