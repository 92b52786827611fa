"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass

import pytest

from cloudline.cli import dispatch
from cloudline.derivation import SimEnvironment, verify_environment
from cloudline.feature_model import (
    config_digest,
    enumerate_configurations,
    parse_feature_model,
    validate_configuration,
)
from cloudline.knowledge import (
    ContextSnapshot,
    Outcome,
    TraceLog,
    query_trace,
    replay_trace,
)
from cloudline.mape import LoopState, run_loop
from cloudline.mapping import RequirementSet
from cloudline.selection import Objective, find_valid_configuration, optimize_configuration
from conftest import DATA_DIR, FIG1_DOC
from oracles import oracle_best, oracle_enumerate, oracle_key, oracle_satisfying
from randmodels import random_adaptation_rules, random_events, random_model, random_requirements
from test_agents import run_random_session

GLUCOSE = DATA_DIR / "glucose"


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE CRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# Shared loop-trial harness (criteria 5, 6, 7)


@dataclass
class LoopTrial:
    fm: object
    initial: object
    final: object
    entries: list
    valid_after_every_tick: bool
    applied_verifications: list


def _run_trial(rng: random.Random, trace_path) -> LoopTrial | None:
    fm = random_model(rng, max_features=6)
    initial = find_valid_configuration(fm, RequirementSet())
    if initial is None:
        return None
    rules = random_adaptation_rules(rng, fm)
    events = random_events(rng)
    state = LoopState(
        snapshot=ContextSnapshot(timestamp=0, dimensions={}),
        current_config=initial,
        provider_id=fm.provider_id,
        environment=SimEnvironment(provider_id=fm.provider_id),
        trace=TraceLog(trace_path, append=False),
    )
    safety = []
    verifications = []

    def on_tick(tick, delta, need, plan, outcome):
        safety.append(validate_configuration(fm, state.current_config).ok)
        if outcome is Outcome.APPLIED:
            verifications.append(verify_environment(state.environment, plan.bundle))

    run_loop(state, events, rules, [fm], RequirementSet(), Objective(), on_tick=on_tick)
    return LoopTrial(
        fm=fm,
        initial=initial,
        final=state.current_config,
        entries=query_trace(state.trace),
        valid_after_every_tick=all(safety),
        applied_verifications=verifications,
    )


@pytest.fixture(scope="module")
def loop_trials(tmp_path_factory):
    rng = random.Random(20260809)
    base = tmp_path_factory.mktemp("loops")
    trials = []
    attempts = 0
    while len(trials) < 1000 and attempts < 20000:
        attempts += 1
        trial = _run_trial(rng, base / "trial.jsonl")
        if trial is not None:
            trials.append(trial)
    return trials


# ---------------------------------------------------------------------------
# Criteria


def test_criterion_1_figure1_enumeration():
    started = time.perf_counter()
    fm = parse_feature_model(FIG1_DOC)
    result = enumerate_configurations(fm, 1000)
    expected = oracle_enumerate(fm)
    elapsed = time.perf_counter() - started
    ok = (
        len(result.configurations) == 4
        and list(result.configurations) == expected
        and [oracle_key(fm, c) for c in result.configurations]
        == sorted(oracle_key(fm, c) for c in expected)
        and not result.truncated
        and elapsed < 1.0
    )
    report(1, ok, f"4 configurations match powerset oracle in canonical order ({elapsed:.3f}s)")


def _simulate(tmp_path, suffix):
    trace = tmp_path / f"trace{suffix}.jsonl"
    argv = [
        "simulate",
        "--catalog", str(GLUCOSE / "catalog"),
        "--consumer", str(GLUCOSE / "consumer.json"),
        "--goals", str(GLUCOSE / "goals.json"),
        "--mapping", str(GLUCOSE / "mapping.json"),
        "--rules", str(GLUCOSE / "rules.json"),
        "--events", str(GLUCOSE / "events_battery.json"),
        "--trace", str(trace),
    ]
    code = dispatch(argv)
    return code, trace


def test_criterion_2_case_study_end_to_end(tmp_path, capsys):
    started = time.perf_counter()
    code_a, trace_a = _simulate(tmp_path, "a")
    out_a = capsys.readouterr().out
    code_b, trace_b = _simulate(tmp_path, "b")
    out_b = capsys.readouterr().out
    elapsed = time.perf_counter() - started

    doc = json.loads(out_a)
    entries = [json.loads(line) for line in trace_a.read_text().splitlines()]
    catalog_model = parse_feature_model(
        (GLUCOSE / "catalog" / "glucose.json").read_text(), source="glucose"
    )
    from cloudline.feature_model import parse_configuration

    final = parse_configuration(doc["final_config"])
    ok = (
        code_a == 0
        and code_b == 0
        and "SaveHistoricDoc" in doc["initial_config"]["selected"]
        and "SaveHistoricDoc" not in doc["final_config"]["selected"]
        and validate_configuration(catalog_model, final).ok
        and len(entries) == 1
        and entries[0]["outcome"] == "applied"
        and entries[0]["condition"] == "device.battery == Low"
        and entries[0]["tick"] == 5
        and trace_a.read_bytes() == trace_b.read_bytes()
        and out_a == out_b
        and elapsed < 1.0
    )
    with capsys.disabled():
        report(2, ok, f"battery scenario: 1 applied entry, byte-identical reruns ({elapsed:.3f}s)")


def test_criterion_3_oracle_equivalence():
    started = time.perf_counter()
    rng = random.Random(30003)
    models = 0
    satisfiability_agreements = 0
    optimality_agreements = 0
    checks = 0
    while models < 200:
        fm = random_model(rng, max_features=12)
        models += 1
        for _ in range(2):
            req = random_requirements(rng, fm)
            obj = Objective(w_cost=1 + rng.randint(0, 2), w_csl=1 + rng.randint(0, 2))
            checks += 1

            satisfying = oracle_satisfying(fm, req)
            found = find_valid_configuration(fm, req)
            sat_ok = (found is None) == (len(satisfying) == 0)
            if found is not None:
                sat_ok = sat_ok and validate_configuration(fm, found).ok
            satisfiability_agreements += sat_ok

            best = optimize_configuration(fm, req, obj)
            expected = oracle_best(fm, req, obj)
            opt_ok = (best is None and expected is None) or (
                best is not None and expected is not None and best.score == expected[0]
            )
            optimality_agreements += opt_ok
    elapsed = time.perf_counter() - started
    ok = (
        models >= 200
        and satisfiability_agreements == checks
        and optimality_agreements == checks
        and elapsed < 60.0
    )
    report(
        3,
        ok,
        f"{models} models, {checks} requirement sets: satisfiability {satisfiability_agreements}/{checks}, "
        f"optimality {optimality_agreements}/{checks} ({elapsed:.1f}s)",
    )


def test_criterion_4_provider_filtering(tmp_path, capsys):
    results = []
    for _ in range(3):
        code = dispatch(
            [
                "select",
                "--catalog", str(DATA_DIR / "catalog2"),
                "--requirements", str(DATA_DIR / "requirements_mysql.json"),
            ]
        )
        out = capsys.readouterr().out
        results.append((code, out))
    strong_code = dispatch(
        [
            "select",
            "--catalog", str(DATA_DIR / "catalog2"),
            "--requirements", str(DATA_DIR / "requirements_strong.json"),
        ]
    )
    strong_out = capsys.readouterr().out
    ok = all(
        code == 0 and json.loads(out)["configuration"]["model_id"] == "CloudA" for code, out in results
    )
    ok = ok and all(out == results[0][1] for _, out in results)
    ok = ok and strong_code == 2 and strong_out.strip() == "no match"
    with capsys.disabled():
        report(4, ok, "CloudB never selected for {MySQL, ram_gb>=3}; strengthened set exits 2")


def test_criterion_5_loop_safety(loop_trials):
    ok = len(loop_trials) == 1000 and all(t.valid_after_every_tick for t in loop_trials)
    final_valid = all(validate_configuration(t.fm, t.final).ok for t in loop_trials)
    report(
        5,
        ok and final_valid,
        f"{len(loop_trials)} randomized trials, configuration valid after every tick",
    )


def test_criterion_6_transactional_execution(tmp_path, loop_trials):
    # injected failure: a rule selects a feature whose command needs a key
    # nothing provides
    from cloudline.knowledge import ContextEvent
    from cloudline.mape import load_adaptation_rules

    fm = parse_feature_model(
        {
            "model_id": "inj",
            "provider_id": "p",
            "layer": "IaaS",
            "features": [
                {"id": "r", "name": "r"},
                {
                    "id": "Uplink",
                    "name": "Uplink",
                    "parent": "r",
                    "dynamic": True,
                    "artifact_templates": [
                        {"kind": "command", "verb": "attach", "args": ["vpc"], "precondition": "net.vpc"}
                    ],
                },
            ],
        }
    )
    initial = find_valid_configuration(fm, RequirementSet())
    state = LoopState(
        snapshot=ContextSnapshot(timestamp=0, dimensions={}),
        current_config=initial,
        provider_id="p",
        environment=SimEnvironment(provider_id="p"),
        trace=TraceLog(tmp_path / "inject.jsonl", append=False),
    )
    rules = load_adaptation_rules(
        {
            "rules": [
                {
                    "rule_id": "up",
                    "scope": "inj",
                    "condition": "device.network == wifi",
                    "actions": [{"op": "select", "feature": "Uplink"}],
                }
            ]
        },
        [fm],
    )
    pre_env = state.environment.state()
    pre_digest = config_digest(state.current_config)
    run_loop(
        state,
        [ContextEvent(1, "device.network", "wifi")],
        rules,
        [fm],
        RequirementSet(),
        Objective(),
    )
    entries = query_trace(state.trace)
    injected_ok = (
        state.environment.state() == pre_env
        and config_digest(state.current_config) == pre_digest
        and [e.outcome for e in entries] == [Outcome.FAILED_EXECUTION]
    )

    verifications = [v for t in loop_trials for v in t.applied_verifications]
    ok = injected_ok and len(verifications) > 0 and all(verifications)
    report(
        6,
        ok,
        f"injected failure rolled back; verify_environment true on {len(verifications)}/"
        f"{len(verifications)} applied plans",
    )


def test_criterion_7_trace_replay(tmp_path, capsys, loop_trials):
    code, trace = _simulate(tmp_path, "replay")
    capsys.readouterr()
    entries = query_trace(trace)
    from cloudline.knowledge import load_catalog
    from cloudline.mapping import FeatureRequirement
    from cloudline.selection import optimize_configuration as opt

    catalog = load_catalog(GLUCOSE / "catalog")
    fm = {m.model_id: m for m in catalog}["GlucoseCloud"]
    req = RequirementSet(
        required=(FeatureRequirement("Measure"),),
        preferred=(FeatureRequirement("SaveHistoricDoc"),),
    )
    initial = opt(fm, req, Objective()).configuration
    scenario_ok = (
        code == 0
        and entries
        and config_digest(replay_trace(initial, entries)) == entries[-1].post_config_digest
    )

    replayed = 0
    trials_ok = True
    for t in loop_trials:
        if not t.entries:
            continue
        digest = config_digest(replay_trace(t.initial, t.entries))
        trials_ok = trials_ok and digest == t.entries[-1].post_config_digest
        replayed += 1
    ok = scenario_ok and trials_ok and replayed > 0
    with capsys.disabled():
        report(
            7,
            ok,
            f"trace replay reproduces final digest for the case study and {replayed} loop runs",
        )


def test_criterion_8_bus_conservation(capsys):
    posted_a, drained_a = run_random_session(88001, n_agents=10, n_messages=1000)
    posted_b, drained_b = run_random_session(88001, n_agents=10, n_messages=1000)

    from cloudline.agents import ExecutionNote

    deliverable = [m for m in posted_a if m.receiver != "ghost"]
    bounced = [
        m
        for m in drained_a
        if isinstance(m.content, ExecutionNote) and m.content.detail.startswith("unknown receiver")
    ]
    regular = [m for m in drained_a if m not in bounced]
    conserved = (
        sorted(map(repr, regular)) == sorted(map(repr, deliverable))
        and len(bounced) == len(posted_a) - len(deliverable)
        and len(drained_a) == len(posted_a)
    )
    fifo = True
    for key in {(m.sender, m.receiver, m.conversation_id) for m in deliverable}:
        sent = [m.content.detail for m in posted_a if (m.sender, m.receiver, m.conversation_id) == key]
        seen = [m.content.detail for m in regular if (m.sender, m.receiver, m.conversation_id) == key]
        fifo = fifo and seen == sent
    replay_equal = [m.to_doc() for m in drained_a] == [m.to_doc() for m in drained_b]
    ok = conserved and fifo and replay_equal
    with capsys.disabled():
        report(
            8,
            ok,
            f"{len(posted_a)} messages over 10 agents: conserved, per-conversation FIFO, replay equal",
        )
