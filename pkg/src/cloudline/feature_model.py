"""Extended feature models: parsing, validation, propagation, and enumeration.

A model is a tree of features with mandatory/optional edges, cardinality
groups <min..max>, typed attributes, and cross-tree constraints
(requires/excludes plus single-attribute comparator predicates). A
configuration is a feature selection plus attribute bindings over one model.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence, Union

from .common import (
    AttrValue,
    COMPARATORS,
    DocumentError,
    ORDERING_COMPARATORS,
    canonical_json,
    compare_values,
    is_attr_value,
    load_json_text,
    sha256_hex,
    take_keys,
)

_PLACEHOLDER_RE = re.compile(r"\$\{([^}]*)\}")


class Layer(str, Enum):
    IAAS = "IaaS"
    PAAS = "PaaS"
    SAAS = "SaaS"


class Variation(str, Enum):
    MANDATORY = "mandatory"
    OPTIONAL = "optional"


class ModelFormatError(DocumentError):
    """A feature-model document violates the file format or a model invariant."""


class UnboundAttributeError(ValueError):
    """An attribute predicate was evaluated against a selected feature with no binding."""


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class IntRange:
    """Integer attribute domain [lo, hi], both ends inclusive."""

    lo: int
    hi: int

    def contains(self, value: AttrValue) -> bool:
        return isinstance(value, int) and not isinstance(value, bool) and self.lo <= value <= self.hi

    def ordered_values(self) -> Sequence[int]:
        return range(self.lo, self.hi + 1)


@dataclass(frozen=True)
class EnumDomain:
    """Explicit literal domain; values are all int or all str."""

    values: tuple[AttrValue, ...]

    def contains(self, value: AttrValue) -> bool:
        return any(type(v) is type(value) and v == value for v in self.values)

    def ordered_values(self) -> Sequence[AttrValue]:
        return sorted(self.values)


Domain = Union[IntRange, EnumDomain]


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    domain: Domain
    default: AttrValue


@dataclass(frozen=True)
class Group:
    """Cardinality group over a subset of the owner's children; XOR is <1..1>."""

    min: int
    max: int
    members: tuple[str, ...]


@dataclass(frozen=True)
class ConfigEntryTemplate:
    """Renders one key=value line; ${attr} placeholders resolve from bindings."""

    key: str
    value: str


@dataclass(frozen=True)
class CommandTemplate:
    """Renders one script command; the optional precondition names a key that
    must already be applied in the target environment when the command runs."""

    verb: str
    args: tuple[str, ...]
    precondition: Optional[str] = None


ArtifactTemplate = Union[ConfigEntryTemplate, CommandTemplate]


@dataclass(frozen=True)
class Requires:
    a: str
    b: str


@dataclass(frozen=True)
class Excludes:
    a: str
    b: str


@dataclass(frozen=True)
class AttrPredicate:
    feature: str
    attr: str
    comparator: str
    literal: AttrValue


CrossTreeConstraint = Union[Requires, Excludes, AttrPredicate]


@dataclass(frozen=True)
class Feature:
    id: str
    name: str
    parent: Optional[str] = None
    variation: Variation = Variation.OPTIONAL
    group: Optional[Group] = None
    attributes: Mapping[str, AttributeSpec] = field(default_factory=dict)
    dynamic: bool = False
    artifact_templates: tuple[ArtifactTemplate, ...] = ()


@dataclass(frozen=True)
class FeatureModel:
    model_id: str
    provider_id: str
    layer: Layer
    root: str
    features: Mapping[str, Feature]
    constraints: tuple[CrossTreeConstraint, ...] = ()

    def feature(self, fid: str) -> Feature:
        try:
            return self.features[fid]
        except KeyError:
            raise KeyError(f"unknown feature id: {fid}") from None

    @cached_property
    def ids_by_name(self) -> Mapping[str, str]:
        return {f.name: f.id for f in self.features.values()}

    @cached_property
    def children(self) -> Mapping[str, tuple[str, ...]]:
        """Child ids per feature, sorted by child name (the canonical order)."""
        out: dict[str, list[str]] = {fid: [] for fid in self.features}
        for f in self.features.values():
            if f.parent is not None:
                out[f.parent].append(f.id)
        return {
            fid: tuple(sorted(kids, key=lambda c: self.features[c].name))
            for fid, kids in out.items()
        }

    @cached_property
    def ids_in_name_order(self) -> tuple[str, ...]:
        return tuple(sorted(self.features, key=lambda fid: self.features[fid].name))

    def feasible_attr_values(self, fid: str, attr: str) -> tuple[AttrValue, ...]:
        """Domain values that pass every attr_predicate constraint on (fid, attr),
        in canonical ascending order."""
        spec = self.feature(fid).attributes[attr]
        predicates = [
            c
            for c in self.constraints
            if isinstance(c, AttrPredicate) and c.feature == fid and c.attr == attr
        ]
        values = [
            v
            for v in spec.domain.ordered_values()
            if all(compare_values(p.comparator, v, p.literal) for p in predicates)
        ]
        return tuple(values)

    @cached_property
    def unselectable(self) -> tuple[str, ...]:
        """Features that no valid configuration can select: some declared
        attribute has no domain value satisfying the model's predicates."""
        out = []
        for fid in self.ids_in_name_order:
            for attr in self.features[fid].attributes:
                if not self.feasible_attr_values(fid, attr):
                    out.append(fid)
                    break
        return tuple(out)


@dataclass(frozen=True)
class Configuration:
    model_id: str
    selected: frozenset[str]
    bindings: Mapping[tuple[str, str], AttrValue] = field(default_factory=dict)


class ViolationRule(str, Enum):
    ROOT_MISSING = "root_missing"
    MANDATORY_MISSING = "mandatory_missing"
    PARENT_MISSING = "parent_missing"
    GROUP_CARDINALITY = "group_cardinality"
    REQUIRES = "requires"
    EXCLUDES = "excludes"
    ATTR_PREDICATE = "attr_predicate"
    ATTR_UNBOUND = "attr_unbound"


_RULE_ORDER = {rule: i for i, rule in enumerate(ViolationRule)}


@dataclass(frozen=True)
class Violation:
    rule: ViolationRule
    offenders: tuple[str, ...]
    message: str

    def to_doc(self) -> dict:
        return {"rule": self.rule.value, "offenders": list(self.offenders), "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_doc(self) -> dict:
        return {"violations": [v.to_doc() for v in self.violations]}


# ---------------------------------------------------------------------------
# Parsing and serialization


def parse_feature_model(doc: Union[str, Mapping[str, Any]], *, source: str = "feature model") -> FeatureModel:
    """Parse one feature-model JSON document; rejects unknown keys and any
    document violating a model invariant, each with a distinct diagnostic."""
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(
        doc, ["model_id", "provider_id", "layer", "features"], ["constraints"], where=source
    )
    model_id = _expect_str(top["model_id"], f"{source}: model_id")
    provider_id = _expect_str(top["provider_id"], f"{source}: provider_id")
    try:
        layer = Layer(top["layer"])
    except ValueError:
        raise ModelFormatError(f"invalid layer: {top['layer']}", source=source) from None

    raw_features = top["features"]
    if not isinstance(raw_features, list) or not raw_features:
        raise ModelFormatError("features must be a non-empty array", source=source)

    features: dict[str, Feature] = {}
    names: set[str] = set()
    roots: list[str] = []
    for node in raw_features:
        f = _parse_feature(node, source=source)
        if f.id in features:
            raise ModelFormatError(f"duplicate feature id: {f.id}", source=source)
        if f.name in names:
            raise ModelFormatError(f"duplicate feature name: {f.name}", source=source)
        features[f.id] = f
        names.add(f.name)
        if f.parent is None:
            roots.append(f.id)

    if len(roots) != 1:
        detail = ", ".join(sorted(roots)) if roots else "none declared"
        raise ModelFormatError(f"model must have exactly one root feature ({detail})", source=source)
    root = roots[0]

    for f in features.values():
        if f.parent is not None and f.parent not in features:
            raise ModelFormatError(f"dangling parent: {f.parent} (feature {f.id})", source=source)

    _check_tree(features, root, source)

    children: dict[str, set[str]] = {fid: set() for fid in features}
    for f in features.values():
        if f.parent is not None:
            children[f.parent].add(f.id)
    for f in features.values():
        if f.group is None:
            continue
        seen: set[str] = set()
        for member in f.group.members:
            if member in seen:
                raise ModelFormatError(f"duplicate group member: {member}", source=source)
            seen.add(member)
            if member not in children[f.id]:
                raise ModelFormatError(f"dangling group member: {member}", source=source)
        if f.group.min > f.group.max:
            raise ModelFormatError(
                f"invalid cardinality: min {f.group.min} > max {f.group.max} (feature {f.id})",
                source=source,
            )
        if f.group.max > len(f.group.members):
            raise ModelFormatError(
                f"invalid cardinality: max {f.group.max} > {len(f.group.members)} members (feature {f.id})",
                source=source,
            )

    constraints = tuple(
        _parse_constraint(node, features, source=source) for node in top.get("constraints", [])
    )

    for f in features.values():
        _check_templates(f, source)

    return FeatureModel(
        model_id=model_id,
        provider_id=provider_id,
        layer=layer,
        root=root,
        features=features,
        constraints=constraints,
    )


def _expect_str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ModelFormatError(f"{where} must be a non-empty string")
    return value


def _expect_int(value: Any, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ModelFormatError(f"{where} must be an integer")
    return value


def _parse_feature(node: Any, *, source: str) -> Feature:
    obj = take_keys(
        node,
        ["id", "name"],
        ["parent", "variation", "group", "attributes", "dynamic", "artifact_templates"],
        where=f"{source}: feature",
    )
    fid = _expect_str(obj["id"], f"{source}: feature id")
    where = f"{source}: feature {fid}"
    name = _expect_str(obj["name"], f"{where}: name")

    parent = obj.get("parent")
    if parent is not None:
        parent = _expect_str(parent, f"{where}: parent")

    variation_raw = obj.get("variation", "optional")
    try:
        variation = Variation(variation_raw)
    except ValueError:
        raise ModelFormatError(f"{where}: invalid variation: {variation_raw}") from None

    group = None
    if obj.get("group") is not None:
        g = take_keys(obj["group"], ["min", "max", "members"], where=f"{where}: group")
        members = g["members"]
        if not isinstance(members, list) or not all(isinstance(m, str) for m in members):
            raise ModelFormatError(f"{where}: group members must be an array of feature ids")
        gmin = _expect_int(g["min"], f"{where}: group min")
        gmax = _expect_int(g["max"], f"{where}: group max")
        if gmin < 0 or gmax < 0:
            raise ModelFormatError(f"{where}: group cardinality must be non-negative")
        group = Group(min=gmin, max=gmax, members=tuple(members))

    attributes: dict[str, AttributeSpec] = {}
    for raw in obj.get("attributes", []):
        spec = _parse_attribute(raw, where=where)
        if spec.name in attributes:
            raise ModelFormatError(f"{where}: duplicate attribute name: {spec.name}")
        attributes[spec.name] = spec

    dynamic = obj.get("dynamic", False)
    if not isinstance(dynamic, bool):
        raise ModelFormatError(f"{where}: dynamic must be a boolean")

    templates = tuple(_parse_template(raw, where=where) for raw in obj.get("artifact_templates", []))

    return Feature(
        id=fid,
        name=name,
        parent=parent,
        variation=variation,
        group=group,
        attributes=attributes,
        dynamic=dynamic,
        artifact_templates=templates,
    )


def _parse_attribute(node: Any, *, where: str) -> AttributeSpec:
    obj = take_keys(node, ["name", "domain", "default"], where=f"{where}: attribute")
    name = _expect_str(obj["name"], f"{where}: attribute name")
    raw_domain = obj["domain"]
    domain: Domain
    if isinstance(raw_domain, list):
        if not raw_domain:
            raise ModelFormatError(f"{where}: attribute {name}: empty domain")
        if not all(is_attr_value(v) for v in raw_domain):
            raise ModelFormatError(f"{where}: attribute {name}: domain values must be int or str")
        kinds = {type(v) for v in raw_domain}
        if len(kinds) != 1:
            raise ModelFormatError(f"{where}: attribute {name}: mixed-type domain")
        if len(set(raw_domain)) != len(raw_domain):
            raise ModelFormatError(f"{where}: attribute {name}: duplicate domain value")
        domain = EnumDomain(values=tuple(raw_domain))
    else:
        rng = take_keys(raw_domain, ["lo", "hi"], where=f"{where}: attribute {name} domain")
        lo = _expect_int(rng["lo"], f"{where}: attribute {name}: lo")
        hi = _expect_int(rng["hi"], f"{where}: attribute {name}: hi")
        if lo > hi:
            raise ModelFormatError(f"{where}: attribute {name}: invalid range: lo {lo} > hi {hi}")
        domain = IntRange(lo=lo, hi=hi)
    default = obj["default"]
    if not is_attr_value(default) or not domain.contains(default):
        raise ModelFormatError(f"default outside domain: {name}={default!r} ({where})")
    return AttributeSpec(name=name, domain=domain, default=default)


def _parse_template(node: Any, *, where: str) -> ArtifactTemplate:
    if not isinstance(node, Mapping) or "kind" not in node:
        raise ModelFormatError(f"{where}: artifact template must be an object with a kind")
    kind = node["kind"]
    if kind == "entry":
        obj = take_keys(node, ["kind", "key", "value"], where=f"{where}: entry template")
        return ConfigEntryTemplate(
            key=_expect_str(obj["key"], f"{where}: entry key"),
            value=_expect_str(obj["value"], f"{where}: entry value"),
        )
    if kind == "command":
        obj = take_keys(node, ["kind", "verb", "args"], ["precondition"], where=f"{where}: command template")
        args = obj["args"]
        if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
            raise ModelFormatError(f"{where}: command args must be an array of strings")
        precondition = obj.get("precondition")
        if precondition is not None:
            precondition = _expect_str(precondition, f"{where}: command precondition")
        return CommandTemplate(
            verb=_expect_str(obj["verb"], f"{where}: command verb"),
            args=tuple(args),
            precondition=precondition,
        )
    raise ModelFormatError(f"{where}: unknown template kind: {kind}")


def _check_templates(f: Feature, source: str) -> None:
    patterns: list[str] = []
    for t in f.artifact_templates:
        if isinstance(t, ConfigEntryTemplate):
            patterns.extend((t.key, t.value))
        else:
            patterns.extend((t.verb, *t.args))
    for pattern in patterns:
        for match in _PLACEHOLDER_RE.finditer(pattern):
            if match.group(1) not in f.attributes:
                raise ModelFormatError(
                    f"undeclared placeholder: ${{{match.group(1)}}} (feature {f.id})", source=source
                )


def _check_tree(features: Mapping[str, Feature], root: str, source: str) -> None:
    for fid in features:
        seen = {fid}
        cur = features[fid].parent
        while cur is not None:
            if cur in seen:
                raise ModelFormatError(f"parent cycle involving: {fid}", source=source)
            seen.add(cur)
            cur = features[cur].parent


def _parse_constraint(node: Any, features: Mapping[str, Feature], *, source: str) -> CrossTreeConstraint:
    if not isinstance(node, Mapping) or "kind" not in node:
        raise ModelFormatError("constraint must be an object with a kind", source=source)
    kind = node["kind"]
    if kind in ("requires", "excludes"):
        obj = take_keys(node, ["kind", "a", "b"], where=f"{source}: {kind} constraint")
        a, b = obj["a"], obj["b"]
        for fid in (a, b):
            if fid not in features:
                raise ModelFormatError(f"unknown feature in constraint: {fid}", source=source)
        return Requires(a=a, b=b) if kind == "requires" else Excludes(a=a, b=b)
    if kind == "attr_predicate":
        obj = take_keys(
            node, ["kind", "feature", "attr", "comparator", "literal"], where=f"{source}: attr_predicate"
        )
        fid, attr = obj["feature"], obj["attr"]
        if fid not in features:
            raise ModelFormatError(f"unknown feature in constraint: {fid}", source=source)
        if attr not in features[fid].attributes:
            raise ModelFormatError(f"unknown attribute in constraint: {attr} (feature {fid})", source=source)
        comparator = obj["comparator"]
        if comparator not in COMPARATORS:
            raise ModelFormatError(f"invalid comparator: {comparator}", source=source)
        literal = obj["literal"]
        if not is_attr_value(literal):
            raise ModelFormatError(f"constraint literal must be int or str: {literal!r}", source=source)
        domain = features[fid].attributes[attr].domain
        sample = domain.lo if isinstance(domain, IntRange) else domain.values[0]
        if type(literal) is not type(sample):
            raise ModelFormatError(
                f"literal type does not match attribute domain: {attr} (feature {fid})", source=source
            )
        if comparator in ORDERING_COMPARATORS and not isinstance(literal, int):
            raise ModelFormatError(
                f"ordering comparator needs a numeric literal: {comparator} {literal!r}", source=source
            )
        return AttrPredicate(feature=fid, attr=attr, comparator=comparator, literal=literal)
    raise ModelFormatError(f"unknown constraint kind: {kind}", source=source)


def feature_model_to_doc(fm: FeatureModel) -> dict:
    features = []
    for fid in sorted(fm.features):
        f = fm.features[fid]
        node: dict[str, Any] = {"id": f.id, "name": f.name, "parent": f.parent, "variation": f.variation.value}
        if f.group is not None:
            node["group"] = {"min": f.group.min, "max": f.group.max, "members": list(f.group.members)}
        if f.attributes:
            node["attributes"] = [
                {"name": a.name, "domain": _domain_to_doc(a.domain), "default": a.default}
                for a in sorted(f.attributes.values(), key=lambda a: a.name)
            ]
        if f.dynamic:
            node["dynamic"] = True
        if f.artifact_templates:
            node["artifact_templates"] = [_template_to_doc(t) for t in f.artifact_templates]
        features.append(node)
    return {
        "model_id": fm.model_id,
        "provider_id": fm.provider_id,
        "layer": fm.layer.value,
        "features": features,
        "constraints": [_constraint_to_doc(c) for c in fm.constraints],
    }


def _domain_to_doc(domain: Domain) -> Any:
    if isinstance(domain, IntRange):
        return {"lo": domain.lo, "hi": domain.hi}
    return list(domain.values)


def _template_to_doc(t: ArtifactTemplate) -> dict:
    if isinstance(t, ConfigEntryTemplate):
        return {"kind": "entry", "key": t.key, "value": t.value}
    doc: dict[str, Any] = {"kind": "command", "verb": t.verb, "args": list(t.args)}
    if t.precondition is not None:
        doc["precondition"] = t.precondition
    return doc


def _constraint_to_doc(c: CrossTreeConstraint) -> dict:
    if isinstance(c, Requires):
        return {"kind": "requires", "a": c.a, "b": c.b}
    if isinstance(c, Excludes):
        return {"kind": "excludes", "a": c.a, "b": c.b}
    return {
        "kind": "attr_predicate",
        "feature": c.feature,
        "attr": c.attr,
        "comparator": c.comparator,
        "literal": c.literal,
    }


def serialize_feature_model(fm: FeatureModel) -> str:
    import json

    return json.dumps(feature_model_to_doc(fm), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def parse_configuration(doc: Union[str, Mapping[str, Any]], *, source: str = "configuration") -> Configuration:
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    obj = take_keys(doc, ["model_id", "selected"], ["bindings"], where=source)
    model_id = _expect_str(obj["model_id"], f"{source}: model_id")
    raw_selected = obj["selected"]
    if not isinstance(raw_selected, list) or not all(isinstance(s, str) for s in raw_selected):
        raise DocumentError(f"{source}: selected must be an array of feature ids")
    if len(set(raw_selected)) != len(raw_selected):
        dup = sorted({s for s in raw_selected if raw_selected.count(s) > 1})[0]
        raise DocumentError(f"{source}: duplicate selected feature: {dup}")
    bindings: dict[tuple[str, str], AttrValue] = {}
    for fid, attrs in (obj.get("bindings") or {}).items():
        if not isinstance(attrs, Mapping):
            raise DocumentError(f"{source}: bindings for {fid} must be an object")
        for attr, value in attrs.items():
            if not is_attr_value(value):
                raise DocumentError(f"{source}: binding {fid}.{attr} must be int or str")
            bindings[(fid, attr)] = value
    return Configuration(model_id=model_id, selected=frozenset(raw_selected), bindings=bindings)


def configuration_to_doc(cfg: Configuration) -> dict:
    nested: dict[str, dict[str, AttrValue]] = {}
    for (fid, attr), value in sorted(cfg.bindings.items()):
        nested.setdefault(fid, {})[attr] = value
    return {
        "model_id": cfg.model_id,
        "selected": sorted(cfg.selected),
        "bindings": {fid: dict(sorted(attrs.items())) for fid, attrs in sorted(nested.items())},
    }


def config_digest(cfg: Configuration) -> str:
    return sha256_hex(canonical_json(configuration_to_doc(cfg)))


# ---------------------------------------------------------------------------
# Validation


def validate_configuration(fm: FeatureModel, cfg: Configuration) -> ValidationReport:
    """Check a configuration against the model's semantic rules.

    Structural problems (id mismatch, unknown ids, bindings on unselected
    features, out-of-domain values) raise ValueError; semantic rule failures
    come back as the report's violations, ordered by rule then feature id.
    """
    if cfg.model_id != fm.model_id:
        raise ValueError(f"configuration targets model {cfg.model_id}, not {fm.model_id}")
    for fid in cfg.selected:
        if fid not in fm.features:
            raise ValueError(f"unknown feature id: {fid}")
    for (fid, attr), value in cfg.bindings.items():
        if fid not in fm.features:
            raise ValueError(f"unknown feature id: {fid}")
        spec = fm.features[fid].attributes.get(attr)
        if spec is None:
            raise ValueError(f"unknown attribute: {attr} (feature {fid})")
        if fid not in cfg.selected:
            raise ValueError(f"binding on unselected feature: {fid}.{attr}")
        if not spec.domain.contains(value):
            raise ValueError(f"binding outside domain: {fid}.{attr}={value!r}")

    violations: list[Violation] = []

    if fm.root not in cfg.selected:
        violations.append(
            Violation(ViolationRule.ROOT_MISSING, (fm.root,), f"root feature {fm.root} is not selected")
        )

    for fid in cfg.selected:
        f = fm.features[fid]
        if f.parent is not None and f.parent not in cfg.selected:
            violations.append(
                Violation(
                    ViolationRule.PARENT_MISSING,
                    (fid,),
                    f"feature {fid} is selected but its parent {f.parent} is not",
                )
            )
        for child in fm.children[fid]:
            c = fm.features[child]
            if c.variation is Variation.MANDATORY and child not in cfg.selected:
                violations.append(
                    Violation(
                        ViolationRule.MANDATORY_MISSING,
                        (child,),
                        f"mandatory feature {child} of selected parent {fid} is not selected",
                    )
                )
        if f.group is not None:
            count = sum(1 for m in f.group.members if m in cfg.selected)
            if not (f.group.min <= count <= f.group.max):
                violations.append(
                    Violation(
                        ViolationRule.GROUP_CARDINALITY,
                        (fid,),
                        f"group at {fid} has {count} selected members, needs {f.group.min}..{f.group.max}",
                    )
                )
        for attr in f.attributes:
            if (fid, attr) not in cfg.bindings:
                violations.append(
                    Violation(
                        ViolationRule.ATTR_UNBOUND,
                        (fid,),
                        f"attribute {attr} of selected feature {fid} is unbound",
                    )
                )

    for c in fm.constraints:
        if isinstance(c, Requires):
            if c.a in cfg.selected and c.b not in cfg.selected:
                violations.append(
                    Violation(ViolationRule.REQUIRES, (c.a, c.b), f"{c.a} requires {c.b}")
                )
        elif isinstance(c, Excludes):
            if c.a in cfg.selected and c.b in cfg.selected:
                violations.append(
                    Violation(ViolationRule.EXCLUDES, (c.a, c.b), f"{c.a} excludes {c.b}")
                )
        else:
            if c.feature in cfg.selected:
                value = cfg.bindings.get((c.feature, c.attr))
                if value is not None and not compare_values(c.comparator, value, c.literal):
                    violations.append(
                        Violation(
                            ViolationRule.ATTR_PREDICATE,
                            (c.feature,),
                            f"{c.feature}.{c.attr} {c.comparator} {c.literal!r} fails for {value!r}",
                        )
                    )

    violations.sort(key=lambda v: (_RULE_ORDER[v.rule], v.offenders, v.message))
    return ValidationReport(violations=tuple(violations))


def evaluate_constraint(fm: FeatureModel, cfg: Configuration, c: CrossTreeConstraint) -> bool:
    """Evaluate one cross-tree constraint against a configuration."""
    if isinstance(c, Requires):
        return c.a not in cfg.selected or c.b in cfg.selected
    if isinstance(c, Excludes):
        return not (c.a in cfg.selected and c.b in cfg.selected)
    if c.feature not in cfg.selected:
        return True
    value = cfg.bindings.get((c.feature, c.attr))
    if value is None:
        raise UnboundAttributeError(f"attribute {c.attr} of selected feature {c.feature} is unbound")
    return compare_values(c.comparator, value, c.literal)


# ---------------------------------------------------------------------------
# Decision propagation


@dataclass(frozen=True)
class Contradiction:
    message: str
    features: tuple[str, ...]
    conflicting_decisions: tuple[str, ...]


@dataclass(frozen=True)
class Propagation:
    decisions: Optional[Mapping[str, bool]]
    contradiction: Optional[Contradiction]

    @property
    def ok(self) -> bool:
        return self.contradiction is None


def propagate_decisions(fm: FeatureModel, decisions: Mapping[str, bool]) -> Propagation:
    """Extend partial decisions (True=selected) to their forced consequences.

    Runs the rule closure (tree rules, requires/excludes with contrapositives,
    group min/max forcing) to a fixpoint, then verifies that at least one
    valid full configuration extends the result; decision sets admitting no
    completion come back as a contradiction even when no single feature was
    forced both ways.
    """
    for fid in decisions:
        if fid not in fm.features:
            raise KeyError(f"unknown feature id: {fid}")
    assign, contradiction = _propagate_rules(fm, decisions)
    if contradiction is not None:
        return Propagation(decisions=None, contradiction=contradiction)
    if not _exists_completion(fm, assign):
        return Propagation(
            decisions=None,
            contradiction=Contradiction(
                message="no valid configuration extends the decisions",
                features=(),
                conflicting_decisions=tuple(sorted(decisions)),
            ),
        )
    return Propagation(decisions=dict(sorted(assign.items())), contradiction=None)


def _propagate_rules(
    fm: FeatureModel, decisions: Mapping[str, bool]
) -> tuple[dict[str, bool], Optional[Contradiction]]:
    assign: dict[str, bool] = {}
    origin: dict[str, str] = {}
    conflict: list[Contradiction] = []

    def set_lit(fid: str, value: bool, via: str) -> None:
        if conflict:
            return
        cur = assign.get(fid)
        if cur is None:
            assign[fid] = value
            origin[fid] = via
        elif cur != value:
            pair = tuple(sorted({origin[fid], via}))
            conflict.append(
                Contradiction(
                    message=f"feature {fid} is forced both selected and deselected",
                    features=(fid,),
                    conflicting_decisions=pair,
                )
            )

    def group_conflict(owner: str, message: str, members: Iterable[str]) -> None:
        if conflict:
            return
        causes = tuple(sorted({origin[m] for m in members if m in origin}))
        conflict.append(
            Contradiction(message=message, features=(owner,), conflicting_decisions=causes)
        )

    set_lit(fm.root, True, fm.root)
    for fid in sorted(decisions):
        set_lit(fid, decisions[fid], fid)
    for fid in fm.unselectable:
        set_lit(fid, False, fid)

    changed = True
    while changed and not conflict:
        before = len(assign)
        snapshot = dict(assign)
        for fid in fm.ids_in_name_order:
            value = assign.get(fid)
            f = fm.features[fid]
            if value is True:
                if f.parent is not None:
                    set_lit(f.parent, True, origin[fid])
                for child in fm.children[fid]:
                    if fm.features[child].variation is Variation.MANDATORY:
                        set_lit(child, True, origin[fid])
            elif value is False:
                for child in fm.children[fid]:
                    set_lit(child, False, origin[fid])
            if (
                f.variation is Variation.MANDATORY
                and f.parent is not None
                and assign.get(fid) is False
            ):
                set_lit(f.parent, False, origin[fid])
            if conflict:
                break

        for c in fm.constraints:
            if conflict:
                break
            if isinstance(c, Requires):
                if assign.get(c.a) is True:
                    set_lit(c.b, True, origin[c.a])
                if assign.get(c.b) is False:
                    set_lit(c.a, False, origin[c.b])
            elif isinstance(c, Excludes):
                if assign.get(c.a) is True:
                    set_lit(c.b, False, origin[c.a])
                if assign.get(c.b) is True:
                    set_lit(c.a, False, origin[c.b])

        for fid in fm.ids_in_name_order:
            if conflict:
                break
            f = fm.features[fid]
            if f.group is None or assign.get(fid) is not True:
                continue
            selected = [m for m in f.group.members if assign.get(m) is True]
            undecided = [m for m in f.group.members if m not in assign]
            if len(selected) > f.group.max:
                group_conflict(
                    fid,
                    f"group at {fid} exceeds its maximum of {f.group.max}",
                    selected,
                )
            elif len(selected) + len(undecided) < f.group.min:
                group_conflict(
                    fid,
                    f"group at {fid} cannot reach its minimum of {f.group.min}",
                    [m for m in f.group.members if assign.get(m) is False] + [fid],
                )
            elif len(selected) == f.group.max:
                for m in undecided:
                    set_lit(m, False, origin[fid])
            elif len(selected) + len(undecided) == f.group.min:
                for m in undecided:
                    set_lit(m, True, origin[fid])

        changed = len(assign) != before or assign != snapshot

    return assign, (conflict[0] if conflict else None)


def _exists_completion(fm: FeatureModel, assign: Mapping[str, bool]) -> bool:
    """Backtracking check that some valid full selection extends the assignment."""
    undecided = [fid for fid in fm.ids_in_name_order if fid not in assign]
    if not undecided:
        return True
    fid = undecided[0]
    for value in (False, True):
        extended, contradiction = _propagate_rules(fm, {**assign, fid: value})
        if contradiction is None and _exists_completion(fm, extended):
            return True
    return False


# ---------------------------------------------------------------------------
# Enumeration


@dataclass(frozen=True)
class EnumerationResult:
    configurations: tuple[Configuration, ...]
    truncated: bool


def enumerate_configurations(fm: FeatureModel, limit: int) -> EnumerationResult:
    """All valid full configurations (selection x bindings) in canonical order:
    lexicographic over sorted selected-feature-name vectors, then over the
    binding vector sorted by (feature name, attribute name)."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    out: list[Configuration] = []
    truncated = False
    for cfg in _iter_configurations(fm):
        if len(out) == limit:
            truncated = True
            break
        out.append(cfg)
    return EnumerationResult(configurations=tuple(out), truncated=truncated)


def _iter_configurations(fm: FeatureModel) -> Iterator[Configuration]:
    for selected in iter_valid_selections(fm):
        yield from _expand_bindings(fm, selected)


def iter_valid_selections(fm: FeatureModel) -> Iterator[frozenset[str]]:
    """Valid selections in canonical (name-vector lexicographic) order."""
    order = fm.ids_in_name_order

    def closes(chosen: set[str]) -> bool:
        decisions = {fid: (fid in chosen) for fid in order}
        _, contradiction = _propagate_rules(fm, decisions)
        return contradiction is None

    def viable(chosen: set[str], next_index: int) -> bool:
        decisions = {fid: True for fid in chosen}
        for fid in order[:next_index]:
            if fid not in chosen:
                decisions[fid] = False
        _, contradiction = _propagate_rules(fm, decisions)
        return contradiction is None

    def walk(chosen: set[str], start: int) -> Iterator[frozenset[str]]:
        if closes(chosen):
            yield frozenset(chosen)
        for j in range(start, len(order)):
            extended = chosen | {order[j]}
            if viable(extended, j + 1):
                yield from walk(extended, j + 1)

    yield from walk(set(), 0)


def _expand_bindings(fm: FeatureModel, selected: frozenset[str]) -> Iterator[Configuration]:
    coords: list[tuple[str, str]] = []
    value_lists: list[tuple[AttrValue, ...]] = []
    for fid in sorted(selected, key=lambda s: fm.features[s].name):
        for attr in sorted(fm.features[fid].attributes):
            feasible = fm.feasible_attr_values(fid, attr)
            if not feasible:
                return
            coords.append((fid, attr))
            value_lists.append(feasible)
    if not coords:
        yield Configuration(model_id=fm.model_id, selected=selected)
        return
    for combo in itertools.product(*value_lists):
        bindings = {coord: value for coord, value in zip(coords, combo)}
        yield Configuration(model_id=fm.model_id, selected=selected, bindings=bindings)
