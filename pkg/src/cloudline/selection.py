"""Provider matching, valid-configuration search, and cost/CSL optimization.

The objective is a weighted linear scalarization: score = w_cost * cost -
w_csl * csl * cost_scale, where cost sums a conventional `cost` attribute
over selected features, csl is the fraction of preferred requirements the
configuration satisfies, and cost_scale makes the two terms commensurable.
Exact fractions keep the argmin invariant under positive weight scaling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence

from .common import AttrValue, compare_values
from .feature_model import (
    Configuration,
    FeatureModel,
    _propagate_rules,
    configuration_to_doc,
)
from .mapping import FeatureRequirement, RequirementSet


@dataclass(frozen=True)
class Objective:
    w_cost: Fraction = Fraction(1)
    w_csl: Fraction = Fraction(1)
    cost_attr: str = "cost"

    def __post_init__(self) -> None:
        if self.w_cost < 0 or self.w_csl < 0 or self.w_cost + self.w_csl == 0:
            raise ValueError("objective weights must be non-negative and not both zero")


@dataclass(frozen=True)
class ScoredConfiguration:
    provider_id: str
    configuration: Configuration
    cost: int
    csl: Fraction
    score: Fraction

    def to_doc(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "configuration": configuration_to_doc(self.configuration),
            "cost": self.cost,
            "csl": str(self.csl),
            "score": str(self.score),
        }


def requirement_applies(req: FeatureRequirement, fm: FeatureModel) -> bool:
    return req.scope is None or req.scope == fm.provider_id


def model_offers(fm: FeatureModel, req: FeatureRequirement) -> bool:
    """True when the model can satisfy the requirement at all: right provider
    scope, the feature name exists, and the attribute constraint has at least
    one satisfying domain value."""
    if not requirement_applies(req, fm):
        return False
    fid = fm.ids_by_name.get(req.feature_name)
    if fid is None:
        return False
    if req.attr_constraint is None:
        return True
    constraint = req.attr_constraint
    if constraint.attr not in fm.features[fid].attributes:
        return False
    return any(
        compare_values(constraint.comparator, value, constraint.literal)
        for value in fm.feasible_attr_values(fid, constraint.attr)
    )


def match_providers(req: RequirementSet, catalog: Sequence[FeatureModel]) -> list[str]:
    """Model ids offering every required feature, sorted by model_id.
    Preferred requirements never exclude a provider."""
    return sorted(
        fm.model_id for fm in catalog if all(model_offers(fm, r) for r in req.required)
    )


def requirement_satisfied(fm: FeatureModel, cfg: Configuration, req: FeatureRequirement) -> bool:
    if not requirement_applies(req, fm):
        return False
    fid = fm.ids_by_name.get(req.feature_name)
    if fid is None or fid not in cfg.selected:
        return False
    if req.attr_constraint is None:
        return True
    value = cfg.bindings.get((fid, req.attr_constraint.attr))
    if value is None:
        return False
    return compare_values(req.attr_constraint.comparator, value, req.attr_constraint.literal)


def meets_required(fm: FeatureModel, cfg: Configuration, req: RequirementSet) -> bool:
    return all(requirement_satisfied(fm, cfg, r) for r in req.required)


def _required_value_sets(
    fm: FeatureModel, req: RequirementSet
) -> Optional[dict[tuple[str, str], tuple[AttrValue, ...]]]:
    """Per-(feature, attr) feasible values narrowed by the required attribute
    constraints; None when some required constraint is unsatisfiable here."""
    narrowed: dict[tuple[str, str], tuple[AttrValue, ...]] = {}
    for r in req.required:
        if not requirement_applies(r, fm):
            return None
        fid = fm.ids_by_name.get(r.feature_name)
        if fid is None:
            return None
        if r.attr_constraint is None:
            continue
        constraint = r.attr_constraint
        if constraint.attr not in fm.features[fid].attributes:
            return None
        key = (fid, constraint.attr)
        base = narrowed.get(key, fm.feasible_attr_values(fid, constraint.attr))
        values = tuple(
            v for v in base if compare_values(constraint.comparator, v, constraint.literal)
        )
        if not values:
            return None
        narrowed[key] = values
    return narrowed


def _iter_satisfying(fm: FeatureModel, req: RequirementSet) -> Iterator[Configuration]:
    """Valid full configurations selecting every required feature with a
    satisfying binding, in canonical order. Deterministic backtracking:
    features in name order, deselect before select, domain values ascending."""
    narrowed = _required_value_sets(fm, req)
    if narrowed is None:
        return
    seeds = {fm.ids_by_name[r.feature_name]: True for r in req.required}
    propagated, contradiction = _propagate_rules(fm, seeds)
    if contradiction is not None:
        return

    order = fm.ids_in_name_order

    def consistent(decisions: dict[str, bool]) -> bool:
        _, c = _propagate_rules(fm, decisions)
        return c is None

    def walk(index: int, decisions: dict[str, bool]) -> Iterator[frozenset[str]]:
        if index == len(order):
            yield frozenset(fid for fid, v in decisions.items() if v)
            return
        fid = order[index]
        if fid in decisions:
            yield from walk(index + 1, decisions)
            return
        for value in (False, True):
            trial = {**decisions, fid: value}
            if consistent(trial):
                yield from walk(index + 1, trial)

    # Literals forced by propagation are fixed up front; re-deciding them both
    # ways would only produce contradictions.
    for selected in walk(0, dict(propagated)):
        yield from _expand(fm, selected, narrowed)


def _expand(
    fm: FeatureModel,
    selected: frozenset[str],
    narrowed: dict[tuple[str, str], tuple[AttrValue, ...]],
) -> Iterator[Configuration]:
    coords: list[tuple[str, str]] = []
    value_lists: list[tuple[AttrValue, ...]] = []
    for fid in sorted(selected, key=lambda s: fm.features[s].name):
        for attr in sorted(fm.features[fid].attributes):
            values = narrowed.get((fid, attr), fm.feasible_attr_values(fid, attr))
            if not values:
                return
            coords.append((fid, attr))
            value_lists.append(values)
    if not coords:
        yield Configuration(model_id=fm.model_id, selected=selected)
        return
    for combo in itertools.product(*value_lists):
        yield Configuration(
            model_id=fm.model_id,
            selected=selected,
            bindings=dict(zip(coords, combo)),
        )


def find_valid_configuration(fm: FeatureModel, req: RequirementSet) -> Optional[Configuration]:
    """First configuration of the deterministic search, or None when no valid
    configuration satisfies the required features."""
    return next(_iter_satisfying(fm, req), None)


def configuration_cost(fm: FeatureModel, cfg: Configuration, cost_attr: str = "cost") -> int:
    total = 0
    for fid in cfg.selected:
        spec = fm.features[fid].attributes.get(cost_attr)
        if spec is None:
            continue
        value = cfg.bindings.get((fid, cost_attr), spec.default)
        if isinstance(value, int):
            total += value
    return total


def satisfaction_level(fm: FeatureModel, cfg: Configuration, req: RequirementSet) -> Fraction:
    if not req.preferred:
        return Fraction(1)
    satisfied = sum(1 for r in req.preferred if requirement_satisfied(fm, cfg, r))
    return Fraction(satisfied, len(req.preferred))


def cost_scale(fm: FeatureModel, cost_attr: str = "cost") -> int:
    """Largest total cost any selection could reach; 1 when the model carries
    no costs, so the satisfaction term still discriminates."""
    total = 0
    for f in fm.features.values():
        spec = f.attributes.get(cost_attr)
        if spec is not None:
            candidates = [v for v in spec.domain.ordered_values() if isinstance(v, int)]
            if candidates:
                total += max(candidates)
    return max(total, 1)


def score_configuration(
    fm: FeatureModel, cfg: Configuration, req: RequirementSet, obj: Objective
) -> ScoredConfiguration:
    cost = configuration_cost(fm, cfg, obj.cost_attr)
    csl = satisfaction_level(fm, cfg, req)
    score = obj.w_cost * cost - obj.w_csl * csl * cost_scale(fm, obj.cost_attr)
    return ScoredConfiguration(
        provider_id=fm.provider_id, configuration=cfg, cost=cost, csl=csl, score=score
    )


def canonical_key(fm: FeatureModel, cfg: Configuration) -> tuple:
    """Sort key realizing the canonical configuration order: the sorted
    selected-feature-name vector, then the sorted binding vector."""
    names = tuple(sorted(fm.features[fid].name for fid in cfg.selected))
    bindings = tuple(
        (fm.features[fid].name, attr, value)
        for (fid, attr), value in sorted(
            cfg.bindings.items(), key=lambda item: (fm.features[item[0][0]].name, item[0][1])
        )
    )
    return (names, bindings)


def optimize_configuration(
    fm: FeatureModel, req: RequirementSet, obj: Objective
) -> Optional[ScoredConfiguration]:
    """Exhaustively scored search over the satisfying configurations; ties are
    broken by the canonical configuration order."""
    best: Optional[ScoredConfiguration] = None
    best_key: Optional[tuple] = None
    for cfg in _iter_satisfying(fm, req):
        scored = score_configuration(fm, cfg, req, obj)
        key = canonical_key(fm, cfg)
        if best is None or scored.score < best.score or (scored.score == best.score and key < best_key):
            best = scored
            best_key = key
    return best


def select_environment(
    req: RequirementSet, catalog: Sequence[FeatureModel], obj: Objective
) -> Optional[ScoredConfiguration]:
    """Best scored configuration across all matching providers; ties resolved
    by model_id order."""
    by_id = {fm.model_id: fm for fm in catalog}
    best: Optional[ScoredConfiguration] = None
    for model_id in match_providers(req, catalog):
        scored = optimize_configuration(by_id[model_id], req, obj)
        if scored is None:
            continue
        if best is None or scored.score < best.score:
            best = scored
    return best
