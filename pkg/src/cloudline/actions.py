"""Reconfiguration actions: select/deselect features, rebind attributes.

Plans and trace entries carry these as a model-free delta over a
configuration, so a persisted trace can be replayed without the feature
model at hand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Union

from .common import AttrValue, DocumentError, is_attr_value, take_keys
from .feature_model import Configuration, FeatureModel


@dataclass(frozen=True)
class Select:
    feature: str


@dataclass(frozen=True)
class Deselect:
    feature: str


@dataclass(frozen=True)
class SetAttribute:
    feature: str
    attr: str
    value: AttrValue


Action = Union[Select, Deselect, SetAttribute]


def action_to_doc(action: Action) -> dict:
    if isinstance(action, Select):
        return {"op": "select", "feature": action.feature}
    if isinstance(action, Deselect):
        return {"op": "deselect", "feature": action.feature}
    return {"op": "set_attribute", "feature": action.feature, "attr": action.attr, "value": action.value}


def action_from_doc(doc: Any, *, source: str = "action") -> Action:
    if not isinstance(doc, Mapping) or "op" not in doc:
        raise DocumentError(f"{source}: action must be an object with an op")
    op = doc["op"]
    if op == "select":
        obj = take_keys(doc, ["op", "feature"], where=source)
        return Select(feature=obj["feature"])
    if op == "deselect":
        obj = take_keys(doc, ["op", "feature"], where=source)
        return Deselect(feature=obj["feature"])
    if op == "set_attribute":
        obj = take_keys(doc, ["op", "feature", "attr", "value"], where=source)
        if not is_attr_value(obj["value"]):
            raise DocumentError(f"{source}: set_attribute value must be int or str")
        return SetAttribute(feature=obj["feature"], attr=obj["attr"], value=obj["value"])
    raise DocumentError(f"{source}: unknown action op: {op}")


def apply_actions(cfg: Configuration, actions: Iterable[Action]) -> Configuration:
    """Fold actions over a configuration, purely structurally.

    Deselect drops the feature together with its bindings; SetAttribute on an
    unselected feature is a no-op. Later actions win over earlier ones.
    """
    selected = set(cfg.selected)
    bindings = dict(cfg.bindings)
    for action in actions:
        if isinstance(action, Select):
            selected.add(action.feature)
        elif isinstance(action, Deselect):
            selected.discard(action.feature)
            for key in [k for k in bindings if k[0] == action.feature]:
                del bindings[key]
        else:
            if action.feature in selected:
                bindings[(action.feature, action.attr)] = action.value
    return Configuration(model_id=cfg.model_id, selected=frozenset(selected), bindings=bindings)


def apply_actions_with_defaults(fm: FeatureModel, cfg: Configuration, actions: Iterable[Action]) -> Configuration:
    """Model-aware fold used when applying adaptation-rule actions: Select
    additionally binds the feature's declared attributes to their defaults so
    a plain Select can yield a fully bound configuration."""
    out = cfg
    for action in actions:
        if isinstance(action, Select) and action.feature in fm.features:
            out = apply_actions(out, [action])
            filled = dict(out.bindings)
            for attr, spec in fm.features[action.feature].attributes.items():
                filled.setdefault((action.feature, attr), spec.default)
            out = Configuration(model_id=out.model_id, selected=out.selected, bindings=filled)
        else:
            out = apply_actions(out, [action])
    return out


def diff_configurations(old: Configuration, new: Configuration) -> tuple[Action, ...]:
    """Canonical action list transforming old into new under apply_actions.

    Removed features become Deselect, added ones Select followed by their
    bindings, and retained features contribute SetAttribute for every changed
    binding. A retained feature that must lose a binding is re-expressed as
    Deselect + Select, since there is no unbind action.
    """
    removed = sorted(old.selected - new.selected)
    added = sorted(new.selected - old.selected)
    kept = old.selected & new.selected

    reset: list[str] = []
    for fid in sorted(kept):
        old_attrs = {k[1] for k in old.bindings if k[0] == fid}
        new_attrs = {k[1] for k in new.bindings if k[0] == fid}
        if old_attrs - new_attrs:
            reset.append(fid)

    actions: list[Action] = [Deselect(fid) for fid in sorted(removed + reset)]
    for fid in sorted(added + reset):
        actions.append(Select(fid))
        for (bfid, attr), value in sorted(new.bindings.items()):
            if bfid == fid:
                actions.append(SetAttribute(bfid, attr, value))
    for (fid, attr), value in sorted(new.bindings.items()):
        if fid in kept and fid not in reset and old.bindings.get((fid, attr)) != value:
            actions.append(SetAttribute(fid, attr, value))
    return tuple(actions)
