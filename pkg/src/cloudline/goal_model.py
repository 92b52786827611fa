"""AND/OR goal trees with context-triggered creation/drop conditions and
inhibits edges, plus the conjunctive comparator predicate language used by
conditions, adaptation rules, and trace filters.

Predicate text syntax: `path OP literal [AND path OP literal]*` where OP is
one of == != < <= > >= and a literal is an integer, a bare word, or a
double-quoted string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping, Optional, Union

from .common import (
    AttrValue,
    COMPARATORS,
    DocumentError,
    ORDERING_COMPARATORS,
    compare_values,
    is_attr_value,
    load_json_text,
    take_keys,
)

if TYPE_CHECKING:
    from .knowledge import ContextSnapshot

_BARE_WORD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_INT_RE = re.compile(r"^-?\d+$")
_TOKEN_RE = re.compile(r'\s*(==|!=|<=|>=|<|>|"(?:[^"\\]|\\.)*"|[^\s]+)')


class GoalFormatError(DocumentError):
    """A goal-model document violates the file format or a model invariant."""


@dataclass(frozen=True)
class PredicateAtom:
    path: str
    comparator: str
    literal: AttrValue


@dataclass(frozen=True)
class ContextPredicate:
    """Conjunction of comparator atoms over dotted context paths."""

    atoms: tuple[PredicateAtom, ...]

    def evaluate(self, dimensions: Mapping[str, AttrValue]) -> bool:
        """True iff every atom holds; an unresolvable path makes its atom false."""
        for atom in self.atoms:
            if atom.path not in dimensions:
                return False
            if not compare_values(atom.comparator, dimensions[atom.path], atom.literal):
                return False
        return True

    def paths(self) -> tuple[str, ...]:
        return tuple(sorted({a.path for a in self.atoms}))

    def to_text(self) -> str:
        return " AND ".join(
            f"{a.path} {a.comparator} {_literal_to_text(a.literal)}" for a in self.atoms
        )


def _literal_to_text(literal: AttrValue) -> str:
    if isinstance(literal, int):
        return str(literal)
    if _BARE_WORD_RE.match(literal) and not _INT_RE.match(literal):
        return literal
    escaped = literal.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def parse_predicate(text: str, *, source: str = "predicate") -> ContextPredicate:
    tokens = _tokenize(text, source)
    atoms: list[PredicateAtom] = []
    pos = 0
    while True:
        if pos + 3 > len(tokens):
            raise DocumentError(f"{source}: malformed predicate: {text!r}")
        path, op, literal_token = tokens[pos : pos + 3]
        if not _BARE_WORD_RE.match(path):
            raise DocumentError(f"{source}: malformed predicate path: {path!r}")
        if op not in COMPARATORS:
            raise DocumentError(f"{source}: unknown comparator: {op!r}")
        literal = _parse_literal(literal_token)
        if op in ORDERING_COMPARATORS and not isinstance(literal, int):
            raise DocumentError(f"{source}: ordering comparator needs a numeric literal: {op} {literal!r}")
        atoms.append(PredicateAtom(path=path, comparator=op, literal=literal))
        pos += 3
        if pos == len(tokens):
            break
        if tokens[pos] != "AND":
            raise DocumentError(f"{source}: expected AND, got {tokens[pos]!r}")
        pos += 1
    return ContextPredicate(atoms=tuple(atoms))


def _tokenize(text: str, source: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            break
        tokens.append(match.group(1))
        pos = match.end()
    if not tokens:
        raise DocumentError(f"{source}: empty predicate")
    return tokens


def _parse_literal(token: str) -> AttrValue:
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        body = token[1:-1]
        return body.replace('\\"', '"').replace("\\\\", "\\")
    if _INT_RE.match(token):
        return int(token)
    return token


def equality_predicate(values: Mapping[str, AttrValue]) -> ContextPredicate:
    """Predicate asserting `path == value` for every pair, in path order."""
    return ContextPredicate(
        atoms=tuple(PredicateAtom(path, "==", values[path]) for path in sorted(values))
    )


# ---------------------------------------------------------------------------
# Goal model


class Decomposition(str, Enum):
    AND = "AND"
    OR = "OR"
    LEAF = "leaf"


@dataclass(frozen=True)
class Goal:
    id: str
    name: str
    decomposition: Decomposition = Decomposition.LEAF
    children: tuple[str, ...] = ()
    parameters: Mapping[str, AttrValue] = field(default_factory=dict)
    creation_condition: Optional[ContextPredicate] = None
    drop_condition: Optional[ContextPredicate] = None
    inhibits: tuple[str, ...] = ()


@dataclass(frozen=True)
class GoalModel:
    model_id: str
    root: str
    goals: Mapping[str, Goal]

    def goal(self, gid: str) -> Goal:
        try:
            return self.goals[gid]
        except KeyError:
            raise KeyError(f"unknown goal id: {gid}") from None


def parse_goal_model(doc: Union[str, Mapping[str, Any]], *, source: str = "goal model") -> GoalModel:
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    top = take_keys(doc, ["model_id", "root", "goals"], where=source)
    model_id = top["model_id"]
    root = top["root"]
    if not isinstance(top["goals"], list) or not top["goals"]:
        raise GoalFormatError("goals must be a non-empty array", source=source)

    goals: dict[str, Goal] = {}
    for node in top["goals"]:
        g = _parse_goal(node, source=source)
        if g.id in goals:
            raise GoalFormatError(f"duplicate goal id: {g.id}", source=source)
        goals[g.id] = g

    if root not in goals:
        raise GoalFormatError(f"unknown root goal: {root}", source=source)

    parents: dict[str, str] = {}
    for g in goals.values():
        for child in g.children:
            if child not in goals:
                raise GoalFormatError(f"unknown child goal: {child} (goal {g.id})", source=source)
            if child in parents:
                raise GoalFormatError(f"goal {child} has multiple parents", source=source)
            if child == root:
                raise GoalFormatError(f"root goal {root} cannot be a child", source=source)
            parents[child] = g.id
        for target in g.inhibits:
            if target not in goals:
                raise GoalFormatError(f"unknown inhibits target: {target} (goal {g.id})", source=source)

    _check_goal_tree(goals, parents, root, source)

    for g in goals.values():
        ancestors = _ancestors(parents, g.id)
        for target in g.inhibits:
            if target == g.id:
                raise GoalFormatError(f"goal {g.id} inhibits itself", source=source)
            if target in ancestors:
                raise GoalFormatError(f"goal {g.id} inhibits its ancestor {target}", source=source)

    return GoalModel(model_id=model_id, root=root, goals=goals)


def _parse_goal(node: Any, *, source: str) -> Goal:
    obj = take_keys(
        node,
        ["id", "name"],
        ["decomposition", "children", "parameters", "creation_condition", "drop_condition", "inhibits"],
        where=f"{source}: goal",
    )
    gid = obj["id"]
    where = f"{source}: goal {gid}"
    children = tuple(obj.get("children") or ())
    if gid in children:
        raise GoalFormatError(f"decomposition cycle: goal {gid} lists itself as a child", source=source)
    decomposition_raw = obj.get("decomposition", "leaf" if not children else "AND")
    try:
        decomposition = Decomposition(decomposition_raw)
    except ValueError:
        raise GoalFormatError(f"{where}: invalid decomposition: {decomposition_raw}") from None
    if (decomposition is Decomposition.LEAF) != (not children):
        raise GoalFormatError(f"{where}: leaf goals have no children and vice versa")

    parameters = obj.get("parameters") or {}
    if not isinstance(parameters, Mapping) or not all(is_attr_value(v) for v in parameters.values()):
        raise GoalFormatError(f"{where}: parameters must map names to int or str values")

    def condition(key: str) -> Optional[ContextPredicate]:
        raw = obj.get(key)
        if raw is None:
            return None
        if not isinstance(raw, str):
            raise GoalFormatError(f"{where}: {key} must be a predicate string")
        return parse_predicate(raw, source=where)

    return Goal(
        id=gid,
        name=obj["name"],
        decomposition=decomposition,
        children=children,
        parameters=dict(parameters),
        creation_condition=condition("creation_condition"),
        drop_condition=condition("drop_condition"),
        inhibits=tuple(obj.get("inhibits") or ()),
    )


def _check_goal_tree(goals: Mapping[str, Goal], parents: Mapping[str, str], root: str, source: str) -> None:
    reachable: set[str] = set()
    path: set[str] = set()

    def visit(gid: str) -> None:
        if gid in path:
            raise GoalFormatError(f"decomposition cycle involving: {gid}", source=source)
        if gid in reachable:
            return
        path.add(gid)
        reachable.add(gid)
        for child in goals[gid].children:
            visit(child)
        path.discard(gid)

    visit(root)
    unreachable = sorted(set(goals) - reachable)
    if unreachable:
        raise GoalFormatError(f"goals unreachable from root: {', '.join(unreachable)}", source=source)


def _ancestors(parents: Mapping[str, str], gid: str) -> set[str]:
    out: set[str] = set()
    cur = parents.get(gid)
    while cur is not None:
        out.add(cur)
        cur = parents.get(cur)
    return out


def goal_model_to_doc(gm: GoalModel) -> dict:
    nodes = []
    for gid in sorted(gm.goals):
        g = gm.goals[gid]
        node: dict[str, Any] = {"id": g.id, "name": g.name, "decomposition": g.decomposition.value}
        if g.children:
            node["children"] = list(g.children)
        if g.parameters:
            node["parameters"] = dict(sorted(g.parameters.items()))
        if g.creation_condition is not None:
            node["creation_condition"] = g.creation_condition.to_text()
        if g.drop_condition is not None:
            node["drop_condition"] = g.drop_condition.to_text()
        if g.inhibits:
            node["inhibits"] = list(g.inhibits)
        nodes.append(node)
    return {"model_id": gm.model_id, "root": gm.root, "goals": nodes}


def active_goals(gm: GoalModel, ctx: "ContextSnapshot | Mapping[str, AttrValue]") -> tuple[str, ...]:
    """Goal ids eligible under the context, minus goals inhibited by another
    eligible goal (single pass, inhibitor wins), sorted by goal id."""
    dimensions = getattr(ctx, "dimensions", ctx)
    eligible: set[str] = set()
    for gid, g in gm.goals.items():
        if g.creation_condition is not None and not g.creation_condition.evaluate(dimensions):
            continue
        if g.drop_condition is not None and g.drop_condition.evaluate(dimensions):
            continue
        eligible.add(gid)
    suppressed = {
        target
        for gid in eligible
        for target in gm.goals[gid].inhibits
        if target in eligible
    }
    return tuple(sorted(eligible - suppressed))


def goal_satisfied(gm: GoalModel, achieved_leaves: frozenset[str] | set[str], gid: str) -> bool:
    """Leaf: achieved membership; AND: all children satisfied; OR: any child."""
    g = gm.goal(gid)
    if g.decomposition is Decomposition.LEAF:
        return gid in achieved_leaves
    results = (goal_satisfied(gm, achieved_leaves, child) for child in g.children)
    return all(results) if g.decomposition is Decomposition.AND else any(results)
