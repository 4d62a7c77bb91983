import math

import pytest

from missionrepair.planner import LETHAL, NEIGHBOURS
from missionrepair.scenario import default_scenario, scenario_from_dict


@pytest.fixture(scope="session")
def scn():
    return default_scenario()


def small_doc(rows=5, cols=5, base=(4, 0), target=(0, 4), sam=None, sam_range=1,
              aircraft=1, target_hp=1, missiles=2, no_fire=None, collateral=1):
    ents = [{"id": "home", "kind": "home_base", "position": list(base)}]
    for i in range(aircraft):
        ents.append({"id": f"f{i + 1}", "kind": "friendly_aircraft", "position": list(base),
                     "weapon_range": 1, "missiles": missiles})
    ents.append({"id": "target1", "kind": "target_radar", "position": list(target), "hp": target_hp})
    if sam is not None:
        ents.append({"id": "sam1", "kind": "sam", "position": list(sam), "hp": 1,
                     "weapon_range": sam_range, "missiles": 8})
    if no_fire is not None:
        ents.append({"id": "clinic", "kind": "no_fire_entity", "position": list(no_fire)})
    return {"grid": {"rows": rows, "cols": cols},
            "goal": {"target_id": "target1", "collateral_distance": collateral},
            "entities": ents}


def small_scenario(**kw):
    return scenario_from_dict(small_doc(**kw))


def brute_force_distances(cost, start):
    """Bellman-Ford relaxation over the 8-connected grid (independent of the heap code)."""
    rows, cols = cost.shape
    dist = {(r, c): math.inf for r in range(rows) for c in range(cols)}
    dist[start] = 0.0
    for _ in range(rows * cols):
        changed = False
        for (r, c), d in list(dist.items()):
            if d == math.inf:
                continue
            for dr, dc in NEIGHBOURS:
                n = (r + dr, c + dc)
                if n in dist and cost[n] != LETHAL and d + cost[n] < dist[n]:
                    dist[n] = d + cost[n]
                    changed = True
        if not changed:
            break
    return dist


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
