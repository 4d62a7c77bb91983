"""Ground-truth battle environment with novelty injection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import model_from_scenario
from .planner import (
    NEIGHBOURS,
    NO_FIRE_REPORT,
    Plan,
    State,
    Step,
    Trajectory,
    chebyshev,
    initial_state,
    plan as make_plan,
)
from .scenario import Cell, ScenarioConfig

NOVELTY_CLASSES = ("object", "agent", "relation", "environment", "goal", "event")
DEFAULT_GAUSSIAN = (1.5, 0.5)


class NoveltyError(ValueError):
    pass


@dataclass(frozen=True)
class Environment:
    """True world state between battles.

    ``ticks_per_step`` > 1 makes observed trajectories finer than the plan's action
    grid. SAM missiles launched at tick t resolve at ``t + missile_flight_ticks``.
    """

    home_base: Cell
    rows: int
    cols: int
    true_weapon_range: dict
    true_hp: dict
    sam_missiles: dict
    no_fire_positions: dict
    true_env_zones: frozenset = frozenset()
    patrol_region: frozenset = frozenset()
    interceptor_region: frozenset = frozenset()
    dodge_probability: float = 0.5
    displacement_min: float = 3.0
    ticks_per_step: int = 2
    missile_flight_ticks: int = 2

    def __post_init__(self):
        if not 0.0 <= self.dodge_probability <= 1.0:
            raise ValueError("dodge_probability must be in [0, 1]")


def environment_from_scenario(cfg: ScenarioConfig, **overrides) -> Environment:
    armed = [e for e in cfg.enemies if e.weapon_range > 0]
    env = Environment(
        home_base=cfg.home_base.position,
        rows=cfg.grid.rows,
        cols=cfg.grid.cols,
        true_weapon_range={e.id: e.weapon_range for e in armed},
        true_hp={e.id: e.hp for e in cfg.entities if e.kind != "home_base"},
        sam_missiles={e.id: e.missiles for e in armed},
        no_fire_positions={e.id: e.position for e in cfg.of_kind("no_fire_entity")},
    )
    return replace(env, **overrides) if overrides else env


@dataclass(frozen=True)
class NoveltySpec:
    cls: str
    strength: float = 1.0
    params: dict = field(default_factory=dict)

    @property
    def units(self) -> int:
        """Strength in the class's natural unit, at least one."""
        return max(1, math.floor(self.strength + 0.5))

    def to_dict(self) -> dict:
        return {"class": self.cls, "strength": self.strength,
                "params": {k: list(v) if isinstance(v, tuple) else v
                           for k, v in sorted(self.params.items())}}


@dataclass
class BattleOutcome:
    observed: Trajectory
    reports: dict
    win: bool
    losses: int
    aborted: bool
    events: list = field(default_factory=list)


def nominal_route(cfg: ScenarioConfig) -> tuple:
    return make_plan(model_from_scenario(cfg), cfg).route


def _grow_region(seed: Cell, size: int, env: Environment) -> frozenset:
    """``size`` contiguous cells grown breadth-first from ``seed``, skipping home base."""
    cells = [seed]
    frontier = [seed]
    while len(cells) < size and frontier:
        nxt = []
        for r, c in frontier:
            for dr, dc in NEIGHBOURS:
                cell = (r + dr, c + dc)
                if (0 <= cell[0] < env.rows and 0 <= cell[1] < env.cols
                        and cell not in cells and cell != env.home_base):
                    cells.append(cell)
                    nxt.append(cell)
                    if len(cells) == size:
                        return frozenset(cells)
        frontier = nxt
    return frozenset(cells)


def _region(env: Environment, spec: NoveltySpec, cfg: ScenarioConfig, default_index) -> frozenset:
    if "cells" in spec.params:
        cells = frozenset(tuple(c) for c in spec.params["cells"])
    else:
        if "cell" in spec.params:
            seed = tuple(spec.params["cell"])
        else:
            route = nominal_route(cfg)
            seed = route[min(default_index(len(route)), len(route) - 1)]
        if seed == env.home_base:
            raise NoveltyError(f"{spec.cls} novelty region would cover the home base")
        cells = _grow_region(seed, spec.units, env)
    if env.home_base in cells:
        raise NoveltyError(f"{spec.cls} novelty region would cover the home base")
    for r, c in cells:
        if not (0 <= r < env.rows and 0 <= c < env.cols):
            raise NoveltyError(f"{spec.cls} novelty cell {(r, c)} is outside the grid")
    return cells


def inject_novelty(env: Environment, spec: NoveltySpec, cfg: ScenarioConfig) -> Environment:
    """Return the environment with ``spec`` applied."""
    cls = spec.cls
    if cls == "object":
        if not env.no_fire_positions:
            raise NoveltyError("object novelty needs a no_fire_entity in the scenario")
        nid = spec.params.get("entity", sorted(env.no_fire_positions)[0])
        if "cell" in spec.params:
            cell = tuple(spec.params["cell"])
        else:
            tpos = cfg.target.position
            occupied = {e.position for e in cfg.entities}
            near = [c for c in cfg.grid.cells()
                    if 0 < chebyshev(c, tpos) <= max(1, cfg.collateral_distance)
                    and c not in occupied]
            if not near:
                raise NoveltyError("no free cell near the target for the no-fire entity")
            cell = near[0]
        return replace(env, no_fire_positions={**env.no_fire_positions, nid: cell})
    if cls == "agent":
        sams = sorted(e.id for e in cfg.of_kind("sam") if e.id in env.true_weapon_range)
        if not sams:
            raise NoveltyError("agent novelty needs a SAM")
        sid = spec.params.get("entity", sams[0])
        ranges = dict(env.true_weapon_range)
        ranges[sid] += spec.units
        return replace(env, true_weapon_range=ranges)
    if cls == "relation":
        tid = spec.params.get("entity", cfg.target_id)
        hp = dict(env.true_hp)
        hp[tid] += spec.units
        return replace(env, true_hp=hp)
    if cls == "environment":
        zone = _region(env, spec, cfg, lambda n: 3)
        return replace(env, true_env_zones=env.true_env_zones | zone)
    if cls == "goal":
        region = _region(env, spec, cfg, lambda n: n // 2)
        return replace(env, patrol_region=env.patrol_region | region)
    if cls == "event":
        region = _region(env, spec, cfg, lambda n: n - 2)
        return replace(env, interceptor_region=env.interceptor_region | region)
    raise NoveltyError(f"unknown novelty class {cls!r}")


def sample_novelty(class_weights: dict, gaussian_params: dict | None = None,
                   rng_seed: int = 0) -> NoveltySpec:
    """Draw a novelty class by weight and its strength from a per-class Gaussian."""
    classes = [c for c in NOVELTY_CLASSES if c in class_weights]
    unknown = set(class_weights) - set(NOVELTY_CLASSES)
    if unknown:
        raise NoveltyError(f"unknown novelty class {sorted(unknown)[0]!r}")
    weights = np.array([class_weights[c] for c in classes], dtype=float)
    if weights.size == 0 or np.any(weights < 0) or weights.sum() <= 0:
        raise NoveltyError("class weights must be nonnegative and not all zero")
    rng = np.random.default_rng(rng_seed)
    cls = classes[int(rng.choice(len(classes), p=weights / weights.sum()))]
    mean, sd = (gaussian_params or {}).get(cls, DEFAULT_GAUSSIAN)
    return NoveltySpec(cls, float(rng.normal(mean, sd)))


def execute(env: Environment, plan: Plan, cfg: ScenarioConfig, rng_seed: int) -> BattleOutcome:
    """Run ``plan`` in the true world. Deterministic for a given ``rng_seed``."""
    rng = np.random.default_rng(rng_seed)
    state = initial_state(cfg)
    hp = dict(env.true_hp)
    missiles = {a.id: a.missiles for a in cfg.aircraft}
    sam_left = dict(env.sam_missiles)
    nofire_alive = {nid: True for nid in env.no_fire_positions}
    tpt = env.ticks_per_step
    base = env.home_base
    events: list = []
    in_flight: list = []   # (impact_tick, launch_order, sam id, aircraft id)
    launches = 0
    target = cfg.target_id
    tpos = cfg.target.position
    far_cells = [(r, c) for r in range(env.rows) for c in range(env.cols)
                 if math.dist((r, c), base) > env.displacement_min]

    def active(agent: str) -> bool:
        ac = state.aircraft[agent]
        return ac.alive and not ac.aborted

    def enter(t: int, agent: str, cell: Cell):
        ac = state.aircraft[agent]
        ac.pos = cell
        events.append((t, agent, "move", f"{cell[0]} {cell[1]}"))
        if cell in env.true_env_zones:
            dest = far_cells[int(rng.integers(len(far_cells)))]
            heading = float(rng.uniform(0.0, 360.0))
            ac.pos = dest
            ac.aborted = True
            events.append((t, agent, "displaced", f"{dest[0]} {dest[1]} heading={heading:.1f}"))
        elif cell in env.patrol_region or cell in env.interceptor_region:
            ac.alive = False
            who = "patrol" if cell in env.patrol_region else "interceptor"
            events.append((t, agent, "destroyed", who))

    def fire(t: int, agent: str):
        if missiles[agent] <= 0:
            return
        missiles[agent] -= 1
        events.append((t, agent, "fire", target))
        if state.entities.get(target, False):
            hp[target] -= 1
            if hp[target] <= 0:
                state.entities[target] = False
                events.append((t, target, "destroyed", agent))
        for nid, pos in sorted(env.no_fire_positions.items()):
            if nofire_alive[nid] and chebyshev(pos, tpos) <= cfg.collateral_distance:
                nofire_alive[nid] = False
                state.reports[NO_FIRE_REPORT] = True
                events.append((t, nid, "destroyed", "collateral"))

    actions = {agent: sorted(acts, key=lambda a: a.start_step)
               for agent, acts in plan.per_agent.items()}
    agents = sorted(state.aircraft)
    horizon = (plan.makespan + 1) * tpt + env.missile_flight_ticks + 1
    steps: list = []
    for t in range(horizon):
        step, phase = divmod(t, tpt)
        for agent in agents:
            current = next((a for a in actions.get(agent, ())
                            if a.start_step <= step < a.end_step), None)
            if state.aircraft[agent].alive:
                steps.append(Step(state.copy(), agent, current))
            if current is None or not active(agent):
                continue
            if current.kind == "fire" and phase == 0 and step == current.start_step:
                fire(t, agent)
            elif current.kind == "move" and phase == tpt - 1:
                enter(t, agent, current.to)
            elif current.kind == "return_to_base" and phase == tpt - 1:
                enter(t, agent, current.path[step - current.start_step])
        # missile impacts
        due = sorted(m for m in in_flight if m[0] == t)
        in_flight = [m for m in in_flight if m[0] != t]
        for _, _, sid, agent in due:
            ac = state.aircraft[agent]
            if not ac.alive:
                continue
            if rng.random() < env.dodge_probability:
                events.append((t, agent, "dodged", sid))
            else:
                ac.alive = False
                events.append((t, agent, "destroyed", sid))
        # new locks
        for sid in sorted(env.true_weapon_range):
            rng_cells = env.true_weapon_range[sid]
            if rng_cells <= 0 or not state.entities.get(sid, True) or not cfg.has_entity(sid):
                continue
            spos = cfg.entity(sid).position
            for agent in agents:
                ac = state.aircraft[agent]
                if sam_left.get(sid, 0) <= 0:
                    break
                if ac.alive and not ac.aborted and chebyshev(ac.pos, spos) <= rng_cells:
                    sam_left[sid] -= 1
                    launches += 1
                    in_flight.append((t + env.missile_flight_ticks, launches, sid, agent))
                    events.append((t, sid, "launch", agent))

    terminal = state.copy()
    win = not terminal.entities.get(target, True)
    losses = sum(not a.alive for a in terminal.aircraft.values())
    aborted = plan.aborted or any(a.aborted for a in terminal.aircraft.values())
    return BattleOutcome(Trajectory(steps, terminal), dict(terminal.reports), win, losses,
                         aborted, events)


def format_events(events) -> str:
    return "".join(f"{t} {agent} {event} {args}\n" for t, agent, event, args in events)
