"""End-to-end simulation driver: goal activation, requirement derivation,
provider selection, initial provisioning, then the tick-driven control loop,
with the agent conversations of each phase exchanged over the message bus.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from .agents import (
    AclMessage,
    AgentDescriptor,
    AgentRole,
    CapabilityQuery,
    ContextDelta,
    ExecutionNote,
    MessageBus,
    PathChange,
    Performative,
    PlanDigest,
    provider_capabilities,
)
from .common import DocumentError, is_attr_value, load_json_text, take_keys
from .derivation import SimEnvironment, derive_bundle, run_bundle, verify_environment
from .feature_model import FeatureModel, config_digest, configuration_to_doc
from .goal_model import GoalModel, active_goals
from .knowledge import ContextEvent, ContextSnapshot, TraceLog
from .mape import AdaptationRule, LoopState, run_loop
from .mapping import Diagnostic, MappingRule, check_wellformed, derive_requirements
from .selection import Objective, ScoredConfiguration, select_environment

_ROLE_BY_LAYER = {
    "IaaS": AgentRole.PROVIDER_IAAS,
    "PaaS": AgentRole.PROVIDER_PAAS,
    "SaaS": AgentRole.PROVIDER_SAAS,
}


class SimulationError(RuntimeError):
    """The scenario cannot be provisioned (no matching provider, or the
    initial bundle failed)."""


@dataclass(frozen=True)
class ConsumerProfile:
    snapshot: ContextSnapshot
    objective: Objective


def parse_consumer(doc: Union[str, Any], *, source: str = "consumer") -> ConsumerProfile:
    """Consumer file: initial context dimensions plus optional objective
    weights (fractions or decimals, as strings or ints)."""
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(doc, ["context"], ["objective"], where=source)
    context = top["context"]
    if not isinstance(context, dict) or not all(
        isinstance(k, str) and is_attr_value(v) for k, v in context.items()
    ):
        raise DocumentError(f"{source}: context must map dotted paths to int or str values")
    objective = Objective()
    if top.get("objective") is not None:
        obj = take_keys(top["objective"], [], ["w_cost", "w_csl", "cost_attr"], where=f"{source}: objective")
        try:
            objective = Objective(
                w_cost=Fraction(str(obj.get("w_cost", 1))),
                w_csl=Fraction(str(obj.get("w_csl", 1))),
                cost_attr=obj.get("cost_attr", "cost"),
            )
        except (ValueError, ZeroDivisionError) as exc:
            raise DocumentError(f"{source}: invalid objective: {exc}") from exc
    return ConsumerProfile(
        snapshot=ContextSnapshot(timestamp=0, dimensions=dict(context)), objective=objective
    )


@dataclass
class SimulationResult:
    scored: ScoredConfiguration
    state: LoopState
    active: tuple[str, ...]
    diagnostics: list[Diagnostic]
    trace_path: Path
    ticks: int
    trace_entries: int
    initial_config_doc: dict

    def to_doc(self) -> dict:
        return {
            "provider_id": self.state.provider_id,
            "model_id": self.state.current_config.model_id,
            "active_goals": list(self.active),
            "initial_config": self.initial_config_doc,
            "final_config": configuration_to_doc(self.state.current_config),
            "final_config_digest": config_digest(self.state.current_config),
            "ticks": self.ticks,
            "trace_entries": self.trace_entries,
        }


def _register_agents(bus: MessageBus, catalog: Sequence[FeatureModel]) -> list[AgentDescriptor]:
    bus.register(AgentDescriptor(id="consumer", role=AgentRole.CONSUMER))
    bus.register(AgentDescriptor(id="manager", role=AgentRole.MANAGER))
    providers: dict[tuple[str, str], list[str]] = {}
    for fm in catalog:
        providers.setdefault((fm.provider_id, fm.layer.value), []).append(fm.model_id)
    descriptors = []
    for (provider_id, layer) in sorted(providers):
        descriptor = AgentDescriptor(
            id=f"{provider_id}/{layer}",
            role=_ROLE_BY_LAYER[layer],
            owned_models=tuple(sorted(providers[(provider_id, layer)])),
        )
        bus.register(descriptor)
        descriptors.append(descriptor)
    return descriptors


def run_simulation(
    catalog: Sequence[FeatureModel],
    consumer: ConsumerProfile,
    gm: GoalModel,
    mapping_rules: Sequence[MappingRule],
    adaptation_rules: Sequence[AdaptationRule],
    events: Sequence[ContextEvent],
    trace_path: Union[str, Path],
    dump_path: Optional[Union[str, Path]] = None,
) -> SimulationResult:
    bus = MessageBus(dump_path=dump_path)
    provider_agents = _register_agents(bus, catalog)

    snapshot = consumer.snapshot
    bus.post_message(
        AclMessage(
            message_type=Performative.INFORM,
            receiver="manager",
            sender="consumer",
            content=ContextDelta(
                changes=tuple(
                    PathChange(path=p, old=None, new=snapshot.dimensions[p])
                    for p in sorted(snapshot.dimensions)
                )
            ),
            conversation_id="boot",
        )
    )
    bus.drain_inbox("manager")

    active = active_goals(gm, snapshot)
    diagnostics = check_wellformed(mapping_rules, gm, catalog)
    req = derive_requirements(set(active), mapping_rules)

    query = CapabilityQuery(requirements=req.required)
    for agent in provider_agents:
        bus.post_message(
            AclMessage(
                message_type=Performative.REQUEST,
                receiver=agent.id,
                sender="manager",
                content=query,
                conversation_id=f"cap:{agent.id}",
            )
        )
    for agent in provider_agents:
        bus.drain_inbox(agent.id)
        bus.post_message(
            AclMessage(
                message_type=Performative.INFORM,
                receiver="manager",
                sender=agent.id,
                content=provider_capabilities(agent, query, catalog),
                conversation_id=f"cap:{agent.id}",
            )
        )
    bus.drain_inbox("manager")

    scored = select_environment(req, catalog, consumer.objective)
    if scored is None:
        raise SimulationError("no provider matches the required features")

    fm = {m.model_id: m for m in catalog}[scored.configuration.model_id]
    bus.post_message(
        AclMessage(
            message_type=Performative.PROPOSE,
            receiver="consumer",
            sender="manager",
            content=PlanDigest(
                tick=snapshot.timestamp,
                action_count=len(scored.configuration.selected),
                target_config_digest=config_digest(scored.configuration),
            ),
            conversation_id="boot",
        )
    )
    bus.drain_inbox("consumer")
    bus.post_message(
        AclMessage(
            message_type=Performative.AGREE,
            receiver="manager",
            sender="consumer",
            content=ExecutionNote(outcome="accepted", detail="initial configuration"),
            conversation_id="boot",
        )
    )
    bus.drain_inbox("manager")

    env = SimEnvironment(provider_id=scored.provider_id)
    bundle = derive_bundle(fm, scored.configuration)
    report = run_bundle(env, bundle)
    if not report.ok:
        raise SimulationError(
            f"initial provisioning failed at command {report.failed_command.index}: "
            f"{report.failed_command.text}"
        )
    if not verify_environment(env, bundle):
        raise SimulationError("initial provisioning did not verify")

    state = LoopState(
        snapshot=snapshot,
        current_config=scored.configuration,
        provider_id=scored.provider_id,
        environment=env,
        trace=TraceLog(trace_path, append=False),
    )
    initial_config_doc = configuration_to_doc(scored.configuration)

    ticks = 0

    def on_tick(tick, delta, need, plan, outcome):
        nonlocal ticks
        ticks += 1
        bus.post_message(
            AclMessage(
                message_type=Performative.INFORM,
                receiver="manager",
                sender="consumer",
                content=ContextDelta(
                    changes=tuple(PathChange(path=d.path, old=d.old, new=d.new) for d in delta)
                ),
                conversation_id=f"ctx-{tick}",
            )
        )
        bus.drain_inbox("manager")
        if outcome is not None:
            bus.post_message(
                AclMessage(
                    message_type=Performative.INFORM,
                    receiver="consumer",
                    sender="manager",
                    content=ExecutionNote(
                        outcome=outcome.value, detail=config_digest(state.current_config)
                    ),
                    conversation_id=f"exec-{tick}",
                )
            )
        bus.drain_inbox("consumer")

    run_loop(state, events, adaptation_rules, catalog, req, consumer.objective, on_tick=on_tick)

    return SimulationResult(
        scored=scored,
        state=state,
        active=active,
        diagnostics=diagnostics,
        trace_path=Path(trace_path),
        ticks=ticks,
        trace_entries=state.trace.last_seq,
        initial_config_doc=initial_config_doc,
    )
