"""The agent's internal planning model and the operators that edit it."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import yaml

from .scenario import ENEMY_KINDS, Cell, ScenarioConfig

NUMERIC_FIELDS = ("weapon_range", "entity_hp", "no_fire_near_target")
ZONE_FIELDS = ("env_zones", "no_fly_zones")
DEFAULT_HP_CAP = 3

_VAR_RE = re.compile(r"^(\w+)\[([^\]]+)\]$")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class PlanningModel:
    """Repairable approximation of the environment.

    Maps are plain dicts but the model is treated as a value: every edit goes through
    :func:`apply_mmo`, which returns a fresh instance. ``no_fire_near_target`` stores the
    numeric cast of the proposition (true iff > 0).
    """

    rows: int
    cols: int
    home_base: Cell
    weapon_range: dict = field(default_factory=dict)
    entity_hp: dict = field(default_factory=dict)
    hp_cap: dict = field(default_factory=dict)
    env_zones: frozenset = frozenset()
    no_fly_zones: frozenset = frozenset()
    no_fire_near_target: dict = field(default_factory=dict)
    friendly_speed: int = 1
    friendly_missile_range: int = 1
    aircraft_fired: dict = field(default_factory=dict)

    def no_fire(self, target_id: str) -> bool:
        return self.no_fire_near_target.get(target_id, 0) > 0

    def in_grid(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols

    def to_dict(self) -> dict:
        return {
            "weapon_range": dict(sorted(self.weapon_range.items())),
            "entity_hp": dict(sorted(self.entity_hp.items())),
            "env_zones": [list(c) for c in sorted(self.env_zones)],
            "no_fly_zones": [list(c) for c in sorted(self.no_fly_zones)],
            "no_fire_near_target": dict(sorted(self.no_fire_near_target.items())),
            "friendly_speed": self.friendly_speed,
            "friendly_missile_range": self.friendly_missile_range,
            "aircraft_fired": dict(sorted(self.aircraft_fired.items())),
        }

    def snapshot(self) -> str:
        """YAML snapshot of the believed world, for logs and replay."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def model_from_scenario(cfg: ScenarioConfig, hp_cap: int = DEFAULT_HP_CAP) -> PlanningModel:
    """Default non-novel model built from the scenario's nominal values."""
    enemies = cfg.enemies
    aircraft = cfg.aircraft
    return PlanningModel(
        rows=cfg.grid.rows,
        cols=cfg.grid.cols,
        home_base=cfg.home_base.position,
        weapon_range={e.id: e.weapon_range for e in enemies if e.weapon_range > 0},
        entity_hp={e.id: e.hp for e in enemies},
        hp_cap={e.id: e.hp + hp_cap for e in enemies},
        no_fire_near_target={cfg.target_id: 0},
        friendly_speed=1,
        friendly_missile_range=max(a.weapon_range for a in aircraft) or 1,
        aircraft_fired={a.id: False for a in aircraft},
    )


@dataclass(frozen=True)
class MMO:
    """A single edit: ``variable`` changes by ``delta``.

    Numeric variables are written ``field[key]`` and take an integer delta. Zone
    variables are ``env_zones`` / ``no_fly_zones`` and take a cell; with ``relative`` the
    cell is an offset from the reference position passed to :func:`apply_mmo`.
    """

    variable: str
    delta: object
    relative: bool = False

    @property
    def field(self) -> str:
        m = _VAR_RE.match(self.variable)
        return m.group(1) if m else self.variable

    @property
    def key(self) -> str | None:
        m = _VAR_RE.match(self.variable)
        return m.group(2) if m else None

    @property
    def is_zone(self) -> bool:
        return self.field in ZONE_FIELDS

    def magnitude(self) -> float:
        if self.is_zone:
            return float(max(abs(self.delta[0]), abs(self.delta[1])))
        return float(abs(self.delta))

    def __str__(self) -> str:
        if self.is_zone:
            dr, dc = self.delta
            tag = "rel" if self.relative else "abs"
            return f"{self.variable}+=({dr},{dc})@{tag}"
        return f"{self.variable}{self.delta:+d}"


def inverse(op: MMO) -> MMO:
    if op.is_zone:
        raise ModelError(f"zone operator {op} has no inverse")
    return MMO(op.variable, -op.delta, op.relative)


def zone_cell(op: MMO, ref_pos: Cell | None) -> Cell:
    dr, dc = op.delta
    if not op.relative:
        return (dr, dc)
    if ref_pos is None:
        raise ModelError(f"relative operator {op} needs a reference position")
    return (ref_pos[0] + dr, ref_pos[1] + dc)


def apply_mmo(m: PlanningModel, op: MMO, ref_pos: Cell | None = None) -> PlanningModel:
    """Return a copy of ``m`` with ``op`` applied. HP and ranges are clamped at 0."""
    fld = op.field
    if op.is_zone:
        cell = zone_cell(op, ref_pos)
        if not m.in_grid(cell):
            raise ModelError(f"{op} resolves to {cell}, outside the grid")
        if cell == m.home_base:
            raise ModelError(f"{op} would place a zone on the home base {cell}")
        return replace(m, **{fld: getattr(m, fld) | {cell}})
    if fld not in NUMERIC_FIELDS:
        raise ModelError(f"unknown model variable {op.variable!r}")
    values = getattr(m, fld)
    key = op.key
    if key is None or key not in values:
        raise ModelError(f"unknown model variable {op.variable!r}")
    new_value = max(0, values[key] + op.delta)
    if fld == "entity_hp" and key in m.hp_cap and new_value > m.hp_cap[key]:
        raise ModelError(f"{op} exceeds the repair cap {m.hp_cap[key]}")
    return replace(m, **{fld: {**values, key: new_value}})


@dataclass(frozen=True)
class MMOTemplate:
    """Catalog entry. Empty ``keys`` means every key present in the model; for zone
    fields empty ``deltas`` means every in-grid offset from the reference cell."""

    field: str
    deltas: tuple = ()
    keys: tuple = ()
    relative: bool = True


@dataclass(frozen=True)
class MMOCatalog:
    entries: tuple = ()


def default_catalog(cfg: ScenarioConfig) -> MMOCatalog:
    armed = tuple(e.id for e in cfg.enemies if e.weapon_range > 0)
    enemy_ids = tuple(e.id for e in cfg.entities if e.kind in ENEMY_KINDS)
    return MMOCatalog((
        MMOTemplate("no_fire_near_target", deltas=(1,), keys=(cfg.target_id,)),
        MMOTemplate("weapon_range", deltas=(1, -1, 2, -2), keys=armed),
        MMOTemplate("entity_hp", deltas=(1,), keys=enemy_ids),
        MMOTemplate("env_zones"),
        MMOTemplate("no_fly_zones"),
    ))


def _zone_offsets(m: PlanningModel, ref_pos: Cell):
    offsets = []
    for r in range(m.rows):
        for c in range(m.cols):
            d = (r - ref_pos[0], c - ref_pos[1])
            if d != (0, 0):
                offsets.append(d)
    offsets.sort(key=lambda d: (max(abs(d[0]), abs(d[1])), d))
    return offsets


def enumerate_mmos(catalog: MMOCatalog, m: PlanningModel, ref_pos: Cell) -> list[MMO]:
    """Applicable MMO instances in deterministic catalog order.

    Instances that would raise, or that leave the model unchanged, are dropped.
    """
    out = []
    for tpl in catalog.entries:
        if tpl.field in ZONE_FIELDS:
            deltas = tpl.deltas or _zone_offsets(m, ref_pos)
            candidates = [MMO(tpl.field, tuple(d), tpl.relative) for d in deltas]
        else:
            values = getattr(m, tpl.field, None)
            if values is None:
                continue
            keys = tpl.keys or tuple(values)
            candidates = []
            for key in keys:
                if key not in values:
                    continue
                for d in tpl.deltas:
                    if tpl.field == "no_fire_near_target":
                        # boolean flip through the numeric cast
                        d = -values[key] if values[key] > 0 else abs(d)
                    candidates.append(MMO(f"{tpl.field}[{key}]", d))
        for op in candidates:
            try:
                new = apply_mmo(m, op, ref_pos)
            except ModelError:
                continue
            if new != m:
                out.append(op)
    return out
