"""Deterministic in-memory agent bus exchanging five-field ACL messages
(message type, receiver, sender, content, conversation id).

The bus is a single-threaded mailbox map: posts append to the receiver's
inbox in order, drains return and clear it, and a post to an unknown
receiver bounces a FAILURE back to the sender on the same conversation.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .common import AttrValue, canonical_json
from .feature_model import FeatureModel, feature_model_to_doc, sha256_hex
from .mapping import FeatureRequirement, requirement_to_doc
from .selection import model_offers


class Performative(str, Enum):
    REQUEST = "REQUEST"
    INFORM = "INFORM"
    PROPOSE = "PROPOSE"
    AGREE = "AGREE"
    REFUSE = "REFUSE"
    FAILURE = "FAILURE"


class AgentRole(str, Enum):
    CONSUMER = "Consumer"
    MANAGER = "Manager"
    PROVIDER_IAAS = "ProviderIaaS"
    PROVIDER_PAAS = "ProviderPaaS"
    PROVIDER_SAAS = "ProviderSaaS"


_PROVIDER_ROLES = {AgentRole.PROVIDER_IAAS, AgentRole.PROVIDER_PAAS, AgentRole.PROVIDER_SAAS}


@dataclass(frozen=True)
class PathChange:
    path: str
    old: Optional[AttrValue]
    new: AttrValue


@dataclass(frozen=True)
class ContextDelta:
    changes: tuple[PathChange, ...]


@dataclass(frozen=True)
class CapabilityQuery:
    requirements: tuple[FeatureRequirement, ...]


@dataclass(frozen=True)
class CapabilityItem:
    feature_name: str
    provides: bool
    satisfiable: bool
    models: tuple[str, ...]


@dataclass(frozen=True)
class CapabilityReply:
    provider_id: str
    model_digests: tuple[tuple[str, str], ...]
    items: tuple[CapabilityItem, ...]


@dataclass(frozen=True)
class PlanDigest:
    tick: int
    action_count: int
    target_config_digest: str


@dataclass(frozen=True)
class ExecutionNote:
    outcome: str
    detail: str


Content = Union[ContextDelta, CapabilityQuery, CapabilityReply, PlanDigest, ExecutionNote]


def content_to_doc(content: Content) -> dict:
    if isinstance(content, ContextDelta):
        return {
            "kind": "context_delta",
            "changes": [{"path": c.path, "old": c.old, "new": c.new} for c in content.changes],
        }
    if isinstance(content, CapabilityQuery):
        return {
            "kind": "capability_query",
            "requirements": [requirement_to_doc(r) for r in content.requirements],
        }
    if isinstance(content, CapabilityReply):
        return {
            "kind": "capability_reply",
            "provider_id": content.provider_id,
            "model_digests": [[m, d] for m, d in content.model_digests],
            "items": [
                {
                    "feature_name": i.feature_name,
                    "provides": i.provides,
                    "satisfiable": i.satisfiable,
                    "models": list(i.models),
                }
                for i in content.items
            ],
        }
    if isinstance(content, PlanDigest):
        return {
            "kind": "plan",
            "tick": content.tick,
            "action_count": content.action_count,
            "target_config_digest": content.target_config_digest,
        }
    return {"kind": "execution_report", "outcome": content.outcome, "detail": content.detail}


@dataclass(frozen=True)
class AclMessage:
    message_type: Performative
    receiver: str
    sender: str
    content: Content
    conversation_id: str

    def to_doc(self) -> dict:
        return {
            "message_type": self.message_type.value,
            "address_receiver": self.receiver,
            "address_sender": self.sender,
            "content": content_to_doc(self.content),
            "conversation_id": self.conversation_id,
        }


@dataclass(frozen=True)
class AgentDescriptor:
    id: str
    role: AgentRole
    owned_models: tuple[str, ...] = ()


class MessageBus:
    """Registry plus per-agent FIFO inboxes; optionally dumps every delivered
    message as one JSON line."""

    def __init__(self, dump_path: Optional[Union[str, Path]] = None):
        self.agents: dict[str, AgentDescriptor] = {}
        self._inboxes: dict[str, deque[AclMessage]] = {}
        self._dump_path = Path(dump_path) if dump_path is not None else None
        if self._dump_path is not None:
            self._dump_path.write_text("", encoding="utf-8")

    def register(self, descriptor: AgentDescriptor) -> None:
        if descriptor.id in self.agents:
            raise ValueError(f"agent already registered: {descriptor.id}")
        if descriptor.role is AgentRole.MANAGER and any(
            a.role is AgentRole.MANAGER for a in self.agents.values()
        ):
            raise ValueError("a bus has exactly one manager agent")
        if descriptor.role in _PROVIDER_ROLES and not descriptor.owned_models:
            raise ValueError(f"provider agent {descriptor.id} must own at least one model")
        self.agents[descriptor.id] = descriptor
        self._inboxes[descriptor.id] = deque()

    def post_message(self, msg: AclMessage) -> None:
        """Append to the receiver's inbox; an unknown receiver bounces a
        FAILURE to the sender on the same conversation."""
        if msg.sender not in self.agents:
            raise KeyError(f"unknown sender: {msg.sender}")
        if msg.receiver not in self.agents:
            bounce = AclMessage(
                message_type=Performative.FAILURE,
                receiver=msg.sender,
                sender=msg.receiver,
                content=ExecutionNote(
                    outcome="undeliverable", detail=f"unknown receiver: {msg.receiver}"
                ),
                conversation_id=msg.conversation_id,
            )
            self._deliver(bounce)
            return
        self._deliver(msg)

    def _deliver(self, msg: AclMessage) -> None:
        self._inboxes[msg.receiver].append(msg)
        if self._dump_path is not None:
            with self._dump_path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(msg.to_doc()) + "\n")

    def drain_inbox(self, agent_id: str) -> list[AclMessage]:
        """Return and clear the agent's inbox in delivery order."""
        if agent_id not in self.agents:
            raise KeyError(f"unknown agent: {agent_id}")
        inbox = self._inboxes[agent_id]
        out = list(inbox)
        inbox.clear()
        return out


def provider_capabilities(
    provider: AgentDescriptor, query: CapabilityQuery, catalog: Sequence[FeatureModel]
) -> CapabilityReply:
    """Per requested feature name: does any owned model contain it, and is
    the attribute constraint satisfiable within the attribute's domain."""
    owned = [fm for fm in catalog if fm.model_id in provider.owned_models]
    owned.sort(key=lambda fm: fm.model_id)
    digests = tuple(
        (fm.model_id, sha256_hex(canonical_json(feature_model_to_doc(fm)))) for fm in owned
    )
    items = []
    for req in query.requirements:
        providing = sorted(
            fm.model_id for fm in owned if req.feature_name in fm.ids_by_name
        )
        satisfying = sorted(fm.model_id for fm in owned if model_offers(fm, req))
        items.append(
            CapabilityItem(
                feature_name=req.feature_name,
                provides=bool(providing),
                satisfiable=bool(satisfying),
                models=tuple(satisfying),
            )
        )
    providers = {fm.provider_id for fm in owned}
    provider_id = sorted(providers)[0] if providers else provider.id
    return CapabilityReply(provider_id=provider_id, model_digests=digests, items=tuple(items))
