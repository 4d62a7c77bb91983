"""Mission scenario definition: grid, entities, goal.

Scenarios are stored as YAML documents with three top-level keys::

    grid: {rows: 10, cols: 10, cell_size: 1.0}
    goal: {target_id: target1, collateral_distance: 1}
    entities:
      - {id: f1, kind: friendly_aircraft, position: [9, 1], hp: 1,
         weapon_range: 1, missiles: 2}
      ...

Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

Cell = tuple[int, int]

ENTITY_KINDS = (
    "friendly_aircraft",
    "surveillance_drone",
    "sam",
    "target_radar",
    "radar_sensor",
    "no_fire_entity",
    "neutral",
    "enemy_other",
    "home_base",
)
ARMED_KINDS = frozenset({"sam", "friendly_aircraft", "enemy_other"})
ENEMY_KINDS = frozenset({"sam", "target_radar", "radar_sensor", "enemy_other"})
DESTROYABLE_KINDS = ENEMY_KINDS | {"friendly_aircraft", "no_fire_entity", "neutral"}

_GRID_KEYS = {"rows", "cols", "cell_size"}
_GOAL_KEYS = {"target_id", "collateral_distance"}
_ENTITY_KEYS = {"id", "kind", "position", "hp", "weapon_range", "missiles"}
_TOP_KEYS = {"grid", "goal", "entities"}


class ScenarioError(ValueError):
    """Raised for malformed or semantically invalid scenario documents."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None,
                 column: int | None = None):
        self.field = field
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}, column {column}: "
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_size: float = 1.0

    def contains(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    def cells(self):
        for r in range(self.rows):
            for c in range(self.cols):
                yield (r, c)


@dataclass(frozen=True)
class EntitySpec:
    id: str
    kind: str
    position: Cell
    hp: int = 1
    weapon_range: int = 0
    missiles: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridSpec
    entities: tuple[EntitySpec, ...]
    target_id: str
    collateral_distance: int = 1
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {e.id: e for e in self.entities})

    def entity(self, entity_id: str) -> EntitySpec:
        return self._index[entity_id]

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._index

    def of_kind(self, *kinds: str) -> list[EntitySpec]:
        return [e for e in self.entities if e.kind in kinds]

    @property
    def target(self) -> EntitySpec:
        return self._index[self.target_id]

    @property
    def home_base(self) -> EntitySpec:
        return self.of_kind("home_base")[0]

    @property
    def aircraft(self) -> list[EntitySpec]:
        return self.of_kind("friendly_aircraft")

    @property
    def friendly_count(self) -> int:
        return len(self.aircraft)

    @property
    def enemies(self) -> list[EntitySpec]:
        return [e for e in self.entities if e.kind in ENEMY_KINDS]

    def to_dict(self) -> dict:
        return {
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols,
                     "cell_size": self.grid.cell_size},
            "goal": {"target_id": self.target_id,
                     "collateral_distance": self.collateral_distance},
            "entities": [
                {"id": e.id, "kind": e.kind, "position": list(e.position), "hp": e.hp,
                 "weapon_range": e.weapon_range, "missiles": e.missiles}
                for e in self.entities
            ],
        }


def _check_keys(obj, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where} must be a mapping", field=where)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ScenarioError(f"unknown key {unknown[0]!r} in {where}", field=f"{where}.{unknown[0]}")


def _int(value, name: str, minimum: int | None = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{name} must be an integer, got {value!r}", field=name)
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{name} must be >= {minimum}, got {value}", field=name)
    return value


def scenario_from_dict(doc) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from an already-loaded mapping."""
    _check_keys(doc, _TOP_KEYS, "document")
    for key in sorted(_TOP_KEYS):
        if key not in doc:
            raise ScenarioError(f"missing top-level key {key!r}", field=key)

    g = doc["grid"]
    _check_keys(g, _GRID_KEYS, "grid")
    if "rows" not in g or "cols" not in g:
        raise ScenarioError("grid needs rows and cols", field="grid")
    rows = _int(g["rows"], "grid.rows", 3)
    cols = _int(g["cols"], "grid.cols", 3)
    cell_size = g.get("cell_size", 1.0)
    if isinstance(cell_size, bool) or not isinstance(cell_size, (int, float)) or cell_size <= 0:
        raise ScenarioError("grid.cell_size must be a positive number", field="grid.cell_size")
    grid = GridSpec(rows, cols, float(cell_size))

    goal = doc["goal"]
    _check_keys(goal, _GOAL_KEYS, "goal")
    if "target_id" not in goal:
        raise ScenarioError("goal.target_id is required", field="goal.target_id")
    target_id = goal["target_id"]
    collateral = _int(goal.get("collateral_distance", 1), "goal.collateral_distance")

    raw_entities = doc["entities"]
    if not isinstance(raw_entities, list):
        raise ScenarioError("entities must be a list", field="entities")
    entities = []
    seen = set()
    for i, raw in enumerate(raw_entities):
        where = f"entities[{i}]"
        _check_keys(raw, _ENTITY_KEYS, where)
        for key in ("id", "kind", "position"):
            if key not in raw:
                raise ScenarioError(f"{where} is missing {key!r}", field=f"{where}.{key}")
        eid = raw["id"]
        if not isinstance(eid, str) or not eid:
            raise ScenarioError(f"{where}.id must be a non-empty string", field=f"{where}.id")
        if eid in seen:
            raise ScenarioError(f"duplicate entity id {eid!r}", field=eid)
        seen.add(eid)
        kind = raw["kind"]
        if kind not in ENTITY_KINDS:
            raise ScenarioError(f"entity {eid!r} has unknown kind {kind!r}", field=f"{eid}.kind")
        pos = raw["position"]
        if not isinstance(pos, (list, tuple)) or len(pos) != 2:
            raise ScenarioError(f"entity {eid!r} position must be [row, col]", field=f"{eid}.position")
        cell = (_int(pos[0], f"{eid}.position", None), _int(pos[1], f"{eid}.position", None))
        if not grid.contains(cell):
            raise ScenarioError(f"entity {eid!r} position {list(cell)} is outside the grid",
                                field=f"{eid}.position")
        hp = _int(raw.get("hp", 1), f"{eid}.hp")
        weapon_range = _int(raw.get("weapon_range", 0), f"{eid}.weapon_range")
        missiles = _int(raw.get("missiles", 0), f"{eid}.missiles")
        if weapon_range > 0 and kind not in ARMED_KINDS:
            raise ScenarioError(f"entity {eid!r} of kind {kind} cannot be armed",
                                field=f"{eid}.weapon_range")
        if kind in DESTROYABLE_KINDS and hp < 1:
            raise ScenarioError(f"destroyable entity {eid!r} needs hp >= 1", field=f"{eid}.hp")
        entities.append(EntitySpec(eid, kind, cell, hp, weapon_range, missiles))

    by_id = {e.id: e for e in entities}
    if target_id not in by_id:
        raise ScenarioError(f"goal target {target_id!r} is not an entity", field="goal.target_id")
    if by_id[target_id].kind != "target_radar":
        raise ScenarioError(f"goal target {target_id!r} must be a target_radar",
                            field="goal.target_id")
    if sum(e.kind == "target_radar" for e in entities) != 1:
        raise ScenarioError("exactly one target_radar is required", field="target_radar")
    bases = [e for e in entities if e.kind == "home_base"]
    if len(bases) != 1:
        raise ScenarioError("exactly one home_base is required", field="home_base")
    aircraft = [e for e in entities if e.kind == "friendly_aircraft"]
    if not aircraft:
        raise ScenarioError("at least one friendly_aircraft is required", field="friendly_aircraft")
    for a in aircraft:
        if a.position != bases[0].position:
            raise ScenarioError(f"aircraft {a.id!r} must start at the home base", field=a.id)
    return ScenarioConfig(grid, tuple(entities), target_id, collateral)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a YAML scenario document and validate it."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ScenarioError(f"syntax error: {exc.problem}", line=mark.line + 1,
                            column=mark.column + 1) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"syntax error: {exc}") from exc
    return scenario_from_dict(doc)


def serialize_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def load_scenario(path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text())


def default_scenario_text() -> str:
    return resources.files("missionrepair").joinpath("data/default.scn").read_text()


def default_scenario() -> ScenarioConfig:
    return parse_scenario(default_scenario_text())


# -- rendering -----------------------------------------------------------------

GLYPHS = {
    "home_base": "H",
    "friendly_aircraft": "A",
    "surveillance_drone": "D",
    "sam": "S",
    "target_radar": "T",
    "radar_sensor": "r",
    "no_fire_entity": "N",
    "neutral": "n",
    "enemy_other": "e",
}
# later kinds win when several entities share a cell
_GLYPH_PRIORITY = ["surveillance_drone", "home_base", "friendly_aircraft", "neutral",
                   "enemy_other", "radar_sensor", "no_fire_entity", "sam", "target_radar"]
ROUTE_GLYPHS = "*o+#"
ZONE_GLYPH = "~"
FIRE_GLYPH = "x"


@dataclass(frozen=True)
class Overlay:
    """Cells to draw on top of the grid.

    ``routes`` is a sequence of cell lists, each drawn with its own glyph; ``zones`` are
    hazard cells and ``fire_points`` launch locations.
    """

    routes: tuple = ()
    zones: frozenset = frozenset()
    fire_points: frozenset = frozenset()


def render_grid(cfg: ScenarioConfig, overlay: Overlay | None = None) -> str:
    grid = [["." for _ in range(cfg.grid.cols)] for _ in range(cfg.grid.rows)]
    if overlay is not None:
        cells = [c for route in overlay.routes for c in route]
        cells += list(overlay.zones) + list(overlay.fire_points)
        for cell in cells:
            if not cfg.grid.contains(tuple(cell)):
                raise ScenarioError(f"overlay cell {list(cell)} is outside the grid", field="overlay")
        for r, c in sorted(overlay.zones):
            grid[r][c] = ZONE_GLYPH
        for i, route in enumerate(overlay.routes):
            glyph = ROUTE_GLYPHS[i % len(ROUTE_GLYPHS)]
            for r, c in route:
                grid[r][c] = glyph
        for r, c in sorted(overlay.fire_points):
            grid[r][c] = FIRE_GLYPH
    rank = {k: i for i, k in enumerate(_GLYPH_PRIORITY)}
    for e in sorted(cfg.entities, key=lambda e: rank[e.kind]):
        r, c = e.position
        grid[r][c] = GLYPHS[e.kind]
    return "\n".join("".join(row) for row in grid) + "\n"
