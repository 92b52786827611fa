"""Shared plumbing: canonical JSON, digests, comparator evaluation, document errors."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

AttrValue = Union[int, str]

COMPARATORS = ("==", "!=", "<", "<=", ">", ">=")
ORDERING_COMPARATORS = ("<", "<=", ">", ">=")


class DocumentError(ValueError):
    """A structured-text document does not conform to its file format."""

    def __init__(self, message: str, *, source: str | None = None):
        self.source = source
        if source:
            message = f"{source}: {message}"
        super().__init__(message)


def canonical_json(value: Any) -> str:
    """Serialize with sorted keys and fixed separators; byte-stable across runs."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def compare_values(op: str, left: AttrValue, right: AttrValue) -> bool:
    """Evaluate a comparator atom.

    Equality comparators work across types (int 4 != str "4"). Ordering
    comparators require two non-bool numbers; a type mismatch evaluates to
    False rather than raising, since context sensors may report anything.
    """
    if op == "==":
        return type(left) is type(right) and left == right
    if op == "!=":
        return not (type(left) is type(right) and left == right)
    if op not in ORDERING_COMPARATORS:
        raise ValueError(f"unknown comparator: {op}")
    if not _is_plain_int(left) or not _is_plain_int(right):
        return False
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _is_plain_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def is_attr_value(value: Any) -> bool:
    """True for the value types allowed in attributes and context dimensions."""
    return isinstance(value, str) or _is_plain_int(value)


def take_keys(
    obj: Any,
    required: Iterable[str],
    optional: Iterable[str] = (),
    *,
    where: str,
) -> Mapping[str, Any]:
    """Check an object node against its schema; unknown keys are rejected."""
    if not isinstance(obj, Mapping):
        raise DocumentError(f"{where}: expected an object, got {type(obj).__name__}")
    required = tuple(required)
    allowed = set(required) | set(optional)
    unknown = sorted(k for k in obj if k not in allowed)
    if unknown:
        raise DocumentError(f"{where}: unknown keys: {', '.join(unknown)}")
    missing = sorted(k for k in required if k not in obj)
    if missing:
        raise DocumentError(f"{where}: missing keys: {', '.join(missing)}")
    return obj


def load_json_text(text: str, *, source: str = "document") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON at line {exc.lineno}: {exc.msg}", source=source) from exc


def load_json_file(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read file: {exc.strerror}", source=str(path)) from exc
    return load_json_text(text, source=str(path))
