"""Acceptance criteria, one test each. A PASS/FAIL line per criterion is printed in the
terminal summary."""

import contextlib
import time

import numpy as np
import pytest

from missionrepair.campaign import (
    CampaignConfig,
    compute_metrics,
    records_to_jsonl,
    run_campaign,
    write_campaign,
)
from missionrepair.inconsistency import InconsistencyConfig, inconsistency_full
from missionrepair.model import model_from_scenario
from missionrepair.planner import AircraftState, State, Step, Trajectory, chebyshev, plan, route_cost, threat_field
from missionrepair.repair import estimate_inconsistency, repair_model
from missionrepair.simulator import NOVELTY_CLASSES, NoveltySpec, nominal_route

from conftest import brute_force_distances, small_scenario
from oracles import exhaustive_minimum, instances

RESULTS: dict = {}
SEEDS = range(20)
CANONICAL_SEED = 0
T_N = 5
THRESHOLD = 0.5


@contextlib.contextmanager
def criterion(n, title):
    RESULTS[n] = (title, "FAIL", "")
    detail = {}
    yield detail
    RESULTS[n] = (title, "PASS", detail.get("note", ""))


def campaign(scn, cls, mode="hydra", seed=0, strength=None, t_n=T_N):
    novelty = NoveltySpec(cls, strength) if strength is not None else None
    cfg = CampaignConfig(scn, novelty=novelty, novelty_class=None if novelty else cls,
                         t_N=t_n, agent_mode=mode, master_seed=seed)
    records = run_campaign(cfg)
    return cfg, records


def test_ac01_baseline_failure(scn):
    with criterion(1, "baseline: 0% detection, agent/goal/event fail >= 95% post-novelty") as d:
        worst = {}
        for cls in NOVELTY_CLASSES:
            t0 = time.perf_counter()
            fails = posts = detections = 0
            for seed in SEEDS:
                cfg, records = campaign(scn, cls, "baseline", seed)
                m = compute_metrics(records, cfg.resolved_t_n())
                assert m.detection_pct == 0.0
                detections += sum(r.detected for r in records)
                post = [r for r in records if r.post_novelty]
                posts += len(post)
                fails += sum(r.losses > 0 or not r.win for r in post)
            elapsed = time.perf_counter() - t0
            assert detections == 0
            assert elapsed < 30.0, f"{cls} sweep took {elapsed:.1f}s"
            if cls in ("agent", "goal", "event"):
                worst[cls] = 100.0 * fails / posts
                assert worst[cls] >= 95.0, f"{cls}: {worst[cls]:.1f}% failures"
        d["note"] = ", ".join(f"{k} {v:.1f}%" for k, v in worst.items())


def test_ac02_one_battle_detection(scn):
    with criterion(2, "hydra: exactly one undetected post-novelty battle per campaign") as d:
        carve_outs = []
        for cls in NOVELTY_CLASSES:
            for seed in SEEDS:
                cfg, records = campaign(scn, cls, "hydra", seed)
                post = [r for r in records if r.post_novelty]
                undetected = [r for r in post if not r.novelty_known]
                # the last undetected battle is the encounter: it must raise the flag
                assert undetected and undetected[-1].detected, f"{cls} seed {seed}"
                assert all(r.novelty_reported for r in post[len(undetected):])
                extras = undetected[:-1]
                if extras:
                    # an earlier battle may only go unflagged if the novelty left no trace
                    assert all(r.c_score == 0.0 for r in extras), f"{cls} seed {seed}"
                    assert len(extras) <= 2, f"{cls} seed {seed}"
                    carve_outs.append(f"{cls}/{seed}")
                else:
                    assert compute_metrics(records, cfg.resolved_t_n()).detection_pct == 100.0
        d["note"] = f"zero-effect extra battles: {', '.join(carve_outs) or 'none'}"


def test_ac03_zero_false_positives(scn):
    with criterion(3, "hydra without novelty: no detections, every score exactly 0"):
        for seed in SEEDS:
            records = run_campaign(CampaignConfig(scn, master_seed=seed))
            assert len(records) == 20
            assert not any(r.detected for r in records)
            assert all(r.c_score == 0.0 for r in records)


EXPECTED_REPAIR = {
    "agent": "weapon_range[sam1]+1",
    "relation": "entity_hp[target1]+1",
    "object": "no_fire_near_target[target1]+1",
}


def first_repair(records):
    return next(r for r in records if r.repair and r.repair.get("accepted"))


def test_ac04_repair_identity(scn):
    with criterion(4, "repair identity: range+1, hp+1, no-fire flag") as d:
        rates = {}
        for cls, want in EXPECTED_REPAIR.items():
            _, records = campaign(scn, cls, seed=CANONICAL_SEED, strength=1.0)
            assert first_repair(records).repair["accepted"] == want
            hits = sum(first_repair(campaign(scn, cls, seed=s, strength=1.0)[1]).repair["accepted"] == want
                       for s in SEEDS)
            rates[cls] = 100.0 * hits / len(SEEDS)
            assert rates[cls] >= 95.0
        d["note"] = ", ".join(f"{k} {v:.0f}%" for k, v in rates.items())


def test_ac05_inconsistency_arithmetic(scn):
    with criterion(5, "repair-battle scores: 10 per lost aircraft, relation 1, object 1"):
        for seed in SEEDS:
            r = first_repair(campaign(scn, "agent", seed=seed, strength=1.0)[1])
            assert r.c_score == 10.0 * r.losses and r.losses >= 1
            for cls in ("relation", "object"):
                assert first_repair(campaign(scn, cls, seed=seed, strength=1.0)[1]).c_score == 1.0
        r = first_repair(campaign(scn, "agent", seed=CANONICAL_SEED, strength=1.0)[1])
        assert r.losses == 2 and r.c_score == 20.0


def test_ac06_repair_performance(scn):
    with criterion(6, "reduction >= 95% (agent/goal/event), 100% (object/relation), next <= T") as d:
        got = {}
        for cls in NOVELTY_CLASSES:
            cfg, records = campaign(scn, cls, seed=CANONICAL_SEED, strength=1.0)
            m = compute_metrics(records, cfg.resolved_t_n())
            got[cls] = m.inconsistency_reduction_current
            if cls in ("object", "relation"):
                assert m.inconsistency_reduction_current == 100.0
            else:
                assert m.inconsistency_reduction_current >= 95.0
            last = max(r.index for r in records if r.repair)
            following = next(r for r in records if r.index == last + 1)
            assert following.c_score <= THRESHOLD
            assert m.inconsistency_reduction_next == 100.0
        d["note"] = ", ".join(f"{k} {v:.0f}%" for k, v in got.items())


def zone_hypotheses(records, base):
    cells = []
    for r in records:
        acc = (r.repair or {}).get("accepted") or ""
        if acc.startswith("env_zones+="):
            dr, dc = (int(v) for v in acc.split("(")[1].split(")")[0].split(","))
            cells.append((base[0] + dr, base[1] + dc))
    return cells


def test_ac07_environment_zone_memory(scn):
    with criterion(7, "environment zone: 3 repairs on the canonical seed, distinct hypotheses"):
        base = scn.home_base.position
        assert chebyshev(nominal_route(scn)[3], base) == 3
        _, records = campaign(scn, "environment", seed=CANONICAL_SEED, strength=1.0)
        cells = zone_hypotheses(records, base)
        assert len(cells) == 3
        assert cells[-1] == nominal_route(scn)[3]
        for seed in SEEDS:
            for strength in (1.0, None):
                _, records = campaign(scn, "environment", seed=seed, strength=strength)
                cells = zone_hypotheses(records, base)
                assert len(cells) == len(set(cells)), f"seed {seed}"


def test_ac08_oracle_equivalence():
    with criterion(8, "greedy repair and planner match exhaustive oracles on 50 instances") as d:
        t0 = time.perf_counter()
        for cfg, m, pi, t_o, catalog, memory, inc, ref in instances(50, seed=2024):
            assert cfg.grid.rows <= 6 and cfg.grid.cols <= 6
            c_before = estimate_inconsistency(m, pi, t_o, cfg, inc)
            best, n = exhaustive_minimum(m, pi, t_o, catalog, memory, cfg, inc, ref)
            assert n <= 50
            res = repair_model(m, pi, t_o, catalog, memory, cfg, inc, ref_pos=ref, max_rounds=1)
            if best is not None and best < c_before and best <= 0.5 * c_before:
                assert res.c_after == best
            else:
                assert res.accepted is None
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 50:
            rows, cols = int(rng.integers(3, 7)), int(rng.integers(3, 7))
            cells = [(r, c) for r in range(rows) for c in range(cols)]
            picks = rng.choice(len(cells), 3, replace=False)
            base, target, sam = (cells[i] for i in picks)
            if chebyshev(base, target) < 2:
                continue
            cfg = small_scenario(rows=rows, cols=cols, base=base, target=target, sam=sam,
                                 sam_range=int(rng.integers(1, 3)))
            model = model_from_scenario(cfg)
            pi = plan(model, cfg)
            cost = threat_field(model, cfg)
            dist = brute_force_distances(cost, base)
            reach = [dist[c] for c in cells if c != target and chebyshev(c, target) <= 1
                     and dist[c] < np.inf]
            if pi.aborted:
                assert not reach or cost[base] == np.inf
            else:
                assert route_cost(pi.route, cost) == min(reach)
            checked += 1
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0
        d["note"] = f"{elapsed:.1f}s"


def test_ac09_full_trace_fidelity():
    with criterion(9, "full-trace score equals hand summation to 1e-12"):
        def st(a, b, alive_b=True):
            return State({"a": AircraftState(True, a), "b": AircraftState(alive_b, b)}, {}, {})

        e = [st((0, 0), (4, 4)), st((1, 0), (4, 3)), st((2, 0), (4, 2))]
        o = [st((0, 1), (4, 4)), st((1, 2), (3, 3)), st((5, 4), (4, 2), alive_b=False)]
        t_e = Trajectory([Step(s, ag, None) for s in e for ag in "ab"], e[-1])
        t_o = Trajectory([Step(s, ag, None) for s in o for ag in "ab"], o[-1])
        g, wp, ws = 0.75, 2.0, 10.0
        cfg = InconsistencyConfig(gamma=g, weights={"position": wp, "aircraft_status": ws})
        a_terms = [1.0, 2.0, 5.0]                      # |(0,1)|, |(0,2)|, |(3,4)|
        b_terms = [0.0, 1.0, 0.0]
        want = sum(g ** i * wp * a for i, a in enumerate(a_terms))
        want += sum(g ** i * wp * b for i, b in enumerate(b_terms)) + g ** 2 * ws
        assert abs(inconsistency_full(t_e, t_o, cfg).score - want) <= 1e-12


def test_ac10_determinism(scn, tmp_path):
    with criterion(10, "identical config and seed give byte-identical logs and CSVs"):
        for cls in NOVELTY_CLASSES:
            outs = []
            for k in range(2):
                cfg = CampaignConfig(scn, novelty_class=cls, t_N="random", master_seed=99,
                                     keep_events=True)
                records = run_campaign(cfg)
                out = tmp_path / f"{cls}_{k}"
                write_campaign(out, records, compute_metrics(records, cfg.resolved_t_n()),
                               {"seed": 99}, verbose=True)
                outs.append(out)
                assert records_to_jsonl(records)
            for f in sorted(p.name for p in outs[0].iterdir()):
                assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def summary_lines():
    lines = []
    for n in sorted(RESULTS):
        title, status, note = RESULTS[n]
        lines.append(f"AC{n:02d} {status} {title}" + (f" [{note}]" if note else ""))
    return lines


@pytest.fixture(scope="session", autouse=True)
def _report(request):
    yield
    request.config._acceptance_lines = summary_lines()
