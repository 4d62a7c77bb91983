import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from missionrepair.model import model_from_scenario
from missionrepair.planner import chebyshev, plan
from missionrepair.simulator import (
    NOVELTY_CLASSES,
    NoveltyError,
    NoveltySpec,
    environment_from_scenario,
    execute,
    format_events,
    inject_novelty,
    nominal_route,
    sample_novelty,
)


@pytest.fixture(scope="module")
def nominal(scn):
    return plan(model_from_scenario(scn), scn)


def test_nominal_battle_is_clean(scn, nominal):
    out = execute(environment_from_scenario(scn), nominal, scn, 123)
    assert out.win and out.losses == 0 and not out.aborted
    assert out.reports["no_fire_entity_destroyed"] is False
    assert not any(e[2] == "launch" for e in out.events)


def test_observations_every_tick(scn, nominal):
    env = environment_from_scenario(scn)
    out = execute(env, nominal, scn, 0)
    per_agent = len(out.observed.for_agent("f1"))
    assert per_agent > len([a for a in nominal.actions() if a.agent == "f1"])


@pytest.mark.parametrize("cls, check", [
    ("agent", lambda env, scn: env.true_weapon_range["sam1"] == 3),
    ("relation", lambda env, scn: env.true_hp["target1"] == 2),
    ("object", lambda env, scn: chebyshev(env.no_fire_positions["hospital"],
                                          scn.target.position) <= scn.collateral_distance),
    ("environment", lambda env, scn: env.true_env_zones == {nominal_route(scn)[3]}),
    ("goal", lambda env, scn: env.patrol_region & set(nominal_route(scn))),
    ("event", lambda env, scn: env.interceptor_region & set(nominal_route(scn))),
])
def test_injection(scn, cls, check):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec(cls, 1.0), scn)
    assert check(env, scn)


def test_injection_errors(scn):
    env = environment_from_scenario(scn)
    with pytest.raises(NoveltyError):
        inject_novelty(env, NoveltySpec("weather", 1.0), scn)
    with pytest.raises(NoveltyError):
        inject_novelty(env, NoveltySpec("environment", 1.0, {"cell": (9, 2)}), scn)
    with pytest.raises(NoveltyError):
        inject_novelty(env, NoveltySpec("environment", 1.0, {"cells": [(8, 2), (9, 2)]}), scn)


@settings(max_examples=40, deadline=None)
@given(strength=st.floats(-3.0, 6.0), cls=st.sampled_from(("environment", "goal", "event")))
def test_regions_never_cover_base(scn, strength, cls):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec(cls, strength), scn)
    region = env.true_env_zones | env.patrol_region | env.interceptor_region
    assert scn.home_base.position not in region
    assert len(region) == max(1, math.floor(strength + 0.5))


def test_agent_novelty_kills_but_target_falls(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("agent", 1.0), scn)
    losses = [execute(env, nominal, scn, s).losses for s in range(40)]
    wins = [execute(env, nominal, scn, s).win for s in range(40)]
    assert all(wins)
    assert sum(n > 0 for n in losses) >= 36


def test_environment_zone_displaces(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("environment", 1.0), scn)
    for seed in range(20):
        out = execute(env, nominal, scn, seed)
        assert out.losses == 0 and not out.win and out.aborted
        for ac in out.observed.terminal.aircraft.values():
            assert math.dist(ac.pos, scn.home_base.position) > env.displacement_min


def test_patrol_region_destroys(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("goal", 1.0), scn)
    out = execute(env, nominal, scn, 0)
    assert out.losses == 2 and not out.win


def test_object_novelty_collateral(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("object", 1.0), scn)
    out = execute(env, nominal, scn, 0)
    assert out.win and out.reports["no_fire_entity_destroyed"] is True


def test_relation_novelty_survives(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("relation", 1.0), scn)
    out = execute(env, nominal, scn, 0)
    assert not out.win and out.losses == 0


def test_dodge_extremes(scn, nominal):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec("agent", 1.0), scn)
    assert execute(replace(env, dodge_probability=1.0), nominal, scn, 0).losses == 0
    assert execute(replace(env, dodge_probability=0.0), nominal, scn, 0).losses == 2
    with pytest.raises(ValueError):
        replace(env, dodge_probability=1.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), cls=st.sampled_from(NOVELTY_CLASSES))
def test_execute_deterministic(scn, nominal, seed, cls):
    env = inject_novelty(environment_from_scenario(scn), NoveltySpec(cls, 1.0), scn)
    a, b = execute(env, nominal, scn, seed), execute(env, nominal, scn, seed)
    assert format_events(a.events) == format_events(b.events)
    assert a.observed.terminal == b.observed.terminal


def test_sample_novelty():
    spec = sample_novelty({"agent": 1.0}, None, 5)
    assert spec.cls == "agent" and spec.units >= 1
    assert sample_novelty({"agent": 1.0, "goal": 2.0}, None, 9) == sample_novelty(
        {"agent": 1.0, "goal": 2.0}, None, 9)
    with pytest.raises(NoveltyError):
        sample_novelty({"agent": 0.0})
    with pytest.raises(NoveltyError):
        sample_novelty({"hail": 1.0})


def test_event_log_format(scn, nominal):
    text = format_events(execute(environment_from_scenario(scn), nominal, scn, 0).events)
    first = text.splitlines()[0].split()
    assert first[1:3] == ["f1", "move"] and first[0].isdigit()
