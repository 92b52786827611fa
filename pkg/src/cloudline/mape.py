"""The autonomic control loop: Monitor, Analyze, Plan, Execute over the
knowledge bases, one pass per tick.

Adaptation rules are event-condition-action: when a context change makes a
rule's condition true, its actions are applied to the running configuration.
An application that would leave the configuration invalid (or drop a required
feature) falls back to full re-selection; if even that fails the plan is
rejected and the current configuration is kept. Every analyzed need leaves
one trace entry, and recorded plan actions are always the canonical delta
from the pre-state, so an applied trace replays to the recorded digests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .actions import (
    Action,
    action_from_doc,
    apply_actions_with_defaults,
    diff_configurations,
)
from .common import DocumentError, load_json_text, take_keys
from .derivation import ConfigBundle, SimEnvironment, derive_bundle, run_bundle
from .feature_model import Configuration, FeatureModel, config_digest, validate_configuration
from .goal_model import ContextPredicate, equality_predicate, parse_predicate
from .knowledge import (
    ContextEvent,
    ContextSnapshot,
    Outcome,
    TraceEntry,
    TraceLog,
    apply_event,
    record_trace,
)
from .mapping import RequirementSet
from .selection import (
    Objective,
    match_providers,
    meets_required,
    optimize_configuration,
)


@dataclass(frozen=True)
class AdaptationRule:
    rule_id: str
    condition: ContextPredicate
    actions: tuple[Action, ...]
    scope: str


@dataclass(frozen=True)
class PathDelta:
    path: str
    old: Optional[Any]
    new: Any


@dataclass(frozen=True)
class AdaptationNeed:
    tick: int
    delta: ContextPredicate
    matched_rules: tuple[str, ...]
    affected_dynamic_features: tuple[str, ...]


@dataclass(frozen=True)
class AdaptationPlan:
    tick: int
    actions: tuple[Action, ...]
    target_config: Optional[Configuration]
    bundle: Optional[ConfigBundle]
    provider_id: str

    @property
    def rejected(self) -> bool:
        return self.target_config is None


class LoopState:
    """Mutable state threaded through the loop; the configuration is valid
    between iterations by construction."""

    def __init__(
        self,
        snapshot: ContextSnapshot,
        current_config: Configuration,
        provider_id: str,
        environment: SimEnvironment,
        trace: TraceLog,
    ):
        self.snapshot = snapshot
        self.current_config = current_config
        self.provider_id = provider_id
        self.environment = environment
        self.trace = trace


def load_adaptation_rules(
    doc: Union[str, Any], catalog: Sequence[FeatureModel], *, source: str = "adaptation rules"
) -> tuple[AdaptationRule, ...]:
    """Parse the rules file; every action must target a dynamic feature of
    the rule's scoped model."""
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(doc, ["rules"], where=source)
    models = {fm.model_id: fm for fm in catalog}
    rules: list[AdaptationRule] = []
    seen: set[str] = set()
    for node in top["rules"]:
        obj = take_keys(node, ["rule_id", "scope", "condition", "actions"], where=f"{source}: rule")
        rule_id = obj["rule_id"]
        if rule_id in seen:
            raise DocumentError(f"{source}: duplicate rule_id: {rule_id}")
        seen.add(rule_id)
        scope = obj["scope"]
        if scope not in models:
            raise DocumentError(f"{source}: rule {rule_id}: unknown scope model: {scope}")
        fm = models[scope]
        actions = tuple(
            action_from_doc(a, source=f"{source}: rule {rule_id}") for a in obj["actions"]
        )
        if not actions:
            raise DocumentError(f"{source}: rule {rule_id}: actions must be non-empty")
        for action in actions:
            feature = fm.features.get(action.feature)
            if feature is None:
                raise DocumentError(
                    f"{source}: rule {rule_id}: unknown feature: {action.feature}"
                )
            if not feature.dynamic:
                raise DocumentError(
                    f"{source}: rule {rule_id}: feature {action.feature} is not dynamic"
                )
        condition = parse_predicate(obj["condition"], source=f"{source}: rule {rule_id}")
        rules.append(AdaptationRule(rule_id=rule_id, condition=condition, actions=actions, scope=scope))
    return tuple(rules)


# ---------------------------------------------------------------------------
# Loop phases


def monitor_step(state: LoopState, events: Sequence[ContextEvent]) -> list[PathDelta]:
    """Apply this tick's events to the snapshot; report only paths whose
    value genuinely changed."""
    before = dict(state.snapshot.dimensions)
    snapshot = state.snapshot
    for ev in events:
        snapshot = apply_event(snapshot, ev)
    state.snapshot = snapshot
    delta = []
    for path in sorted(snapshot.dimensions):
        old = before.get(path)
        new = snapshot.dimensions[path]
        if old != new or (old is not None and type(old) is not type(new)):
            delta.append(PathDelta(path=path, old=old, new=new))
    return delta


def analyze_step(
    state: LoopState, delta: Sequence[PathDelta], rules: Sequence[AdaptationRule]
) -> Optional[AdaptationNeed]:
    """Match rules whose condition mentions a changed path and holds on the
    new snapshot; None when nothing matched (or nothing changed)."""
    if not delta:
        return None
    changed_paths = {d.path for d in delta}
    matched: list[AdaptationRule] = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if rule.scope != state.current_config.model_id:
            continue
        if not changed_paths.intersection(rule.condition.paths()):
            continue
        if rule.condition.evaluate(state.snapshot.dimensions):
            matched.append(rule)
    if not matched:
        return None
    affected = sorted({a.feature for rule in matched for a in rule.actions})
    return AdaptationNeed(
        tick=state.snapshot.timestamp,
        delta=equality_predicate({d.path: d.new for d in delta}),
        matched_rules=tuple(r.rule_id for r in matched),
        affected_dynamic_features=tuple(affected),
    )


def plan_step(
    state: LoopState,
    need: AdaptationNeed,
    rules: Sequence[AdaptationRule],
    catalog: Sequence[FeatureModel],
    req: RequirementSet,
    obj: Objective,
) -> AdaptationPlan:
    """Fold the matched rules' actions over the current configuration; fall
    back to full re-selection (current provider's models first) when the
    direct result is invalid or drops a required feature."""
    models = {fm.model_id: fm for fm in catalog}
    fm = models[state.current_config.model_id]
    by_rule = {r.rule_id: r for r in rules}
    combined: list[Action] = []
    for rule_id in need.matched_rules:
        combined.extend(by_rule[rule_id].actions)

    candidate = apply_actions_with_defaults(fm, state.current_config, combined)
    if _acceptable(fm, candidate, req):
        return _plan_for(state, fm, candidate, need.tick)

    for model_id in _fallback_order(state, req, catalog):
        scored = optimize_configuration(models[model_id], req, obj)
        if scored is not None:
            return _plan_for(state, models[model_id], scored.configuration, need.tick)

    return AdaptationPlan(
        tick=need.tick,
        actions=(),
        target_config=None,
        bundle=None,
        provider_id=state.provider_id,
    )


def _acceptable(fm: FeatureModel, cfg: Configuration, req: RequirementSet) -> bool:
    try:
        report = validate_configuration(fm, cfg)
    except ValueError:
        return False
    return report.ok and meets_required(fm, cfg, req)


def _fallback_order(state: LoopState, req: RequirementSet, catalog: Sequence[FeatureModel]) -> list[str]:
    matching = match_providers(req, catalog)
    own = [m for m in matching if m == state.current_config.model_id]
    same_provider = [
        m
        for m in matching
        if m != state.current_config.model_id
        and any(fm.model_id == m and fm.provider_id == state.provider_id for fm in catalog)
    ]
    rest = [m for m in matching if m not in own and m not in same_provider]
    return own + same_provider + rest


def _plan_for(state: LoopState, fm: FeatureModel, target: Configuration, tick: int) -> AdaptationPlan:
    return AdaptationPlan(
        tick=tick,
        actions=diff_configurations(state.current_config, target),
        target_config=target,
        bundle=derive_bundle(fm, target),
        provider_id=fm.provider_id,
    )


def execute_step(state: LoopState, need: AdaptationNeed, plan: AdaptationPlan) -> Outcome:
    """Run the plan's bundle against the environment, swap the configuration
    on success, roll back on script failure, and record one trace entry."""
    pre_digest = config_digest(state.current_config)
    if plan.rejected:
        outcome = Outcome.REJECTED_INVALID
        post_digest = pre_digest
    else:
        report = run_bundle(state.environment, plan.bundle)
        if report.ok:
            state.current_config = plan.target_config
            state.provider_id = plan.provider_id
            outcome = Outcome.APPLIED
            post_digest = config_digest(plan.target_config)
        else:
            outcome = Outcome.FAILED_EXECUTION
            post_digest = pre_digest
    record_trace(
        state.trace,
        TraceEntry(
            seq=0,
            tick=plan.tick,
            condition=need.delta,
            plan_actions=plan.actions if outcome is not Outcome.REJECTED_INVALID else (),
            pre_config_digest=pre_digest,
            post_config_digest=post_digest,
            outcome=outcome,
            provider_id=state.provider_id,
        ),
    )
    return outcome


def run_loop(
    state: LoopState,
    events: Sequence[ContextEvent],
    rules: Sequence[AdaptationRule],
    catalog: Sequence[FeatureModel],
    req: RequirementSet,
    obj: Objective,
    on_tick=None,
) -> LoopState:
    """Process events tick-ascending, one monitor/analyze/plan/execute pass
    per tick; the optional on_tick(tick, delta, need, plan, outcome) hook is
    instrumentation only."""
    fm = {m.model_id: m for m in catalog}[state.current_config.model_id]
    if not validate_configuration(fm, state.current_config).ok:
        raise ValueError("initial configuration is invalid")
    for tick, tick_events in _by_tick(events):
        delta = monitor_step(state, tick_events)
        need = analyze_step(state, delta, rules)
        plan = None
        outcome = None
        if need is not None:
            plan = plan_step(state, need, rules, catalog, req, obj)
            outcome = execute_step(state, need, plan)
        if on_tick is not None:
            on_tick(tick, delta, need, plan, outcome)
    return state


def _by_tick(events: Sequence[ContextEvent]) -> Iterable[tuple[int, list[ContextEvent]]]:
    grouped: dict[int, list[ContextEvent]] = {}
    for ev in events:
        grouped.setdefault(ev.tick, []).append(ev)
    for tick in sorted(grouped):
        yield tick, grouped[tick]
