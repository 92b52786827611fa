"""Goal-to-feature mapping rules and the requirement sets they induce.

A rule links one goal to feature requirements (by feature name, optionally
scoped to a provider and constrained on one attribute); the requirements of
the active goals split into required and preferred, which feed provider
matching and the satisfaction score respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Optional, Sequence, Union

from .common import (
    AttrValue,
    COMPARATORS,
    DocumentError,
    ORDERING_COMPARATORS,
    is_attr_value,
    load_json_text,
    take_keys,
)
from .feature_model import FeatureModel
from .goal_model import GoalModel


class Preference(str, Enum):
    REQUIRED = "required"
    PREFERRED = "preferred"


@dataclass(frozen=True)
class AttrConstraint:
    attr: str
    comparator: str
    literal: AttrValue


@dataclass(frozen=True)
class FeatureRequirement:
    """A feature demanded by name; scope None means any provider."""

    feature_name: str
    scope: Optional[str] = None
    attr_constraint: Optional[AttrConstraint] = None


@dataclass(frozen=True)
class MappingRule:
    rule_id: str
    goal: str
    targets: tuple[FeatureRequirement, ...]
    preference: Preference = Preference.REQUIRED


@dataclass(frozen=True)
class RequirementSet:
    required: tuple[FeatureRequirement, ...] = ()
    preferred: tuple[FeatureRequirement, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    rule_id: str
    message: str


def parse_mapping_rules(doc: Union[str, Any], *, source: str = "mapping") -> tuple[MappingRule, ...]:
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(doc, ["rules"], where=source)
    rules: list[MappingRule] = []
    seen: set[str] = set()
    for node in top["rules"]:
        obj = take_keys(node, ["rule_id", "goal", "targets"], ["preference"], where=f"{source}: rule")
        rule_id = obj["rule_id"]
        if rule_id in seen:
            raise DocumentError(f"{source}: duplicate rule_id: {rule_id}")
        seen.add(rule_id)
        try:
            preference = Preference(obj.get("preference", "required"))
        except ValueError:
            raise DocumentError(f"{source}: rule {rule_id}: invalid preference") from None
        targets = tuple(
            _parse_requirement(t, where=f"{source}: rule {rule_id}") for t in obj["targets"]
        )
        if not targets:
            raise DocumentError(f"{source}: rule {rule_id}: targets must be non-empty")
        rules.append(MappingRule(rule_id=rule_id, goal=obj["goal"], targets=targets, preference=preference))
    return tuple(rules)


def _parse_requirement(node: Any, *, where: str) -> FeatureRequirement:
    obj = take_keys(node, ["feature_name"], ["scope", "attr_constraint"], where=where)
    scope = obj.get("scope")
    if scope is not None and (not isinstance(scope, str) or not scope):
        raise DocumentError(f"{where}: scope must be a provider id or null")
    constraint = None
    if obj.get("attr_constraint") is not None:
        c = take_keys(obj["attr_constraint"], ["attr", "comparator", "literal"], where=f"{where}: attr_constraint")
        if c["comparator"] not in COMPARATORS:
            raise DocumentError(f"{where}: invalid comparator: {c['comparator']}")
        if not is_attr_value(c["literal"]):
            raise DocumentError(f"{where}: constraint literal must be int or str")
        if c["comparator"] in ORDERING_COMPARATORS and not isinstance(c["literal"], int):
            raise DocumentError(f"{where}: ordering comparator needs a numeric literal")
        constraint = AttrConstraint(attr=c["attr"], comparator=c["comparator"], literal=c["literal"])
    return FeatureRequirement(feature_name=obj["feature_name"], scope=scope, attr_constraint=constraint)


def requirement_to_doc(req: FeatureRequirement) -> dict:
    doc: dict[str, Any] = {"feature_name": req.feature_name}
    if req.scope is not None:
        doc["scope"] = req.scope
    if req.attr_constraint is not None:
        doc["attr_constraint"] = {
            "attr": req.attr_constraint.attr,
            "comparator": req.attr_constraint.comparator,
            "literal": req.attr_constraint.literal,
        }
    return doc


def parse_requirement_set(doc: Union[str, Any], *, source: str = "requirements") -> RequirementSet:
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(doc, [], ["required", "preferred"], where=source)
    return RequirementSet(
        required=_dedupe(_parse_requirement(t, where=f"{source}: required") for t in top.get("required", [])),
        preferred=_dedupe(_parse_requirement(t, where=f"{source}: preferred") for t in top.get("preferred", [])),
    )


def check_wellformed(
    rules: Sequence[MappingRule], gm: GoalModel, catalog: Sequence[FeatureModel]
) -> list[Diagnostic]:
    """Flag unknown goals (error), feature names no catalog model offers
    (warning only: a provider may simply not offer it), and attribute
    constraints naming attributes undeclared on every matching feature."""
    known_features: dict[str, set[str]] = {}
    for fm in catalog:
        for f in fm.features.values():
            known_features.setdefault(f.name, set()).update(f.attributes)

    diagnostics: list[Diagnostic] = []
    for rule in rules:
        if rule.goal not in gm.goals:
            diagnostics.append(Diagnostic("error", rule.rule_id, f"unknown goal: {rule.goal}"))
        for target in rule.targets:
            attrs = known_features.get(target.feature_name)
            if attrs is None:
                diagnostics.append(
                    Diagnostic(
                        "warning",
                        rule.rule_id,
                        f"feature {target.feature_name} is not offered by any catalog model",
                    )
                )
                continue
            if target.attr_constraint is not None and target.attr_constraint.attr not in attrs:
                diagnostics.append(
                    Diagnostic(
                        "error",
                        rule.rule_id,
                        f"unknown attribute {target.attr_constraint.attr} on feature {target.feature_name}",
                    )
                )
    return diagnostics


def derive_requirements(active: set[str] | frozenset[str], rules: Sequence[MappingRule]) -> RequirementSet:
    """Union the targets of every rule whose goal is active, split by
    preference, deduplicated, ordered by (rule_id, target index)."""
    required: list[FeatureRequirement] = []
    preferred: list[FeatureRequirement] = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if rule.goal not in active:
            continue
        bucket = required if rule.preference is Preference.REQUIRED else preferred
        bucket.extend(rule.targets)
    return RequirementSet(required=_dedupe(required), preferred=_dedupe(preferred))


def _dedupe(requirements: Any) -> tuple[FeatureRequirement, ...]:
    seen: set[FeatureRequirement] = set()
    out: list[FeatureRequirement] = []
    for req in requirements:
        if req not in seen:
            seen.add(req)
            out.append(req)
    return tuple(out)
