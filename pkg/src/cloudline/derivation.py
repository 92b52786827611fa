"""Derive configuration files and scripts from a configuration, and apply
them to a simulated environment with transactional semantics.

A bundle holds sorted key=value entries plus an ordered command script; the
script order is the pre-order walk of the selected feature tree (children in
name order), templates in declaration order within a feature. The simulated
environment replaces the real cloud effector surface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .common import canonical_json, sha256_hex
from .feature_model import (
    ArtifactTemplate,
    CommandTemplate,
    ConfigEntryTemplate,
    Configuration,
    FeatureModel,
    validate_configuration,
)

_PLACEHOLDER_RE = re.compile(r"\$\{([^}]*)\}")


class DerivationError(ValueError):
    """A template could not be rendered for the given configuration."""


@dataclass(frozen=True)
class ResolvedCommand:
    verb: str
    args: tuple[str, ...]
    precondition: Optional[str] = None

    def text(self) -> str:
        return " ".join((self.verb, *self.args))


@dataclass(frozen=True)
class ConfigBundle:
    entries: tuple[tuple[str, str], ...]
    script: tuple[ResolvedCommand, ...]
    digest: str

    def to_doc(self) -> dict:
        return _bundle_doc(self.entries, self.script) | {"digest": self.digest}


def _bundle_doc(entries, script) -> dict:
    return {
        "entries": [[k, v] for k, v in entries],
        "script": [
            {"verb": c.verb, "args": list(c.args), "precondition": c.precondition} for c in script
        ],
    }


def derive_bundle(fm: FeatureModel, cfg: Configuration) -> ConfigBundle:
    """Render the artifact templates of the selected features. Pure: the same
    (model, configuration) pair always yields a byte-identical bundle."""
    report = validate_configuration(fm, cfg)
    if not report.ok:
        raise ValueError(
            f"cannot derive from an invalid configuration ({report.violations[0].message})"
        )

    entries: dict[str, str] = {}
    script: list[ResolvedCommand] = []
    for fid in _preorder(fm, cfg):
        feature = fm.features[fid]

        def resolve(pattern: str) -> str:
            def substitute(match: re.Match) -> str:
                attr = match.group(1)
                if attr not in feature.attributes:
                    raise DerivationError(
                        f"undeclared placeholder: ${{{attr}}} (feature {fid})"
                    )
                return str(cfg.bindings[(fid, attr)])

            return _PLACEHOLDER_RE.sub(substitute, pattern)

        for template in feature.artifact_templates:
            if isinstance(template, ConfigEntryTemplate):
                key = resolve(template.key)
                if key in entries:
                    raise DerivationError(f"duplicate bundle key: {key} (feature {fid})")
                entries[key] = resolve(template.value)
            else:
                script.append(
                    ResolvedCommand(
                        verb=resolve(template.verb),
                        args=tuple(resolve(a) for a in template.args),
                        precondition=template.precondition,
                    )
                )

    sorted_entries = tuple(sorted(entries.items()))
    script_tuple = tuple(script)
    digest = sha256_hex(canonical_json(_bundle_doc(sorted_entries, script_tuple)))
    return ConfigBundle(entries=sorted_entries, script=script_tuple, digest=digest)


def _preorder(fm: FeatureModel, cfg: Configuration) -> list[str]:
    out: list[str] = []

    def visit(fid: str) -> None:
        if fid not in cfg.selected:
            return
        out.append(fid)
        for child in fm.children[fid]:
            visit(child)

    visit(fm.root)
    return out


def write_bundle_files(bundle: ConfigBundle, directory: Union[str, Path], name: str) -> tuple[Path, Path]:
    """Emit <name>.conf (sorted key=value lines) and <name>.script (one
    space-separated command per line)."""
    directory = Path(directory)
    conf = directory / f"{name}.conf"
    script = directory / f"{name}.script"
    conf.write_text("".join(f"{k}={v}\n" for k, v in bundle.entries), encoding="utf-8")
    script.write_text("".join(c.text() + "\n" for c in bundle.script), encoding="utf-8")
    return conf, script


class SimEnvironment:
    """Stand-in cloud environment: applied key/value state plus a command log."""

    def __init__(self, provider_id: str):
        self.provider_id = provider_id
        self.applied: dict[str, str] = {}
        self.command_log: list[str] = []

    def state(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "applied": dict(sorted(self.applied.items())),
            "command_log": list(self.command_log),
        }


@dataclass(frozen=True)
class FailedCommand:
    index: int
    text: str


@dataclass(frozen=True)
class ExecutionReport:
    status: str
    failed_command: Optional[FailedCommand] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_bundle(env: SimEnvironment, bundle: ConfigBundle) -> ExecutionReport:
    """Apply entries, then run the script in order. A command whose declared
    precondition key is absent fails; any failure rolls the environment back
    to its pre-call state."""
    saved_applied = dict(env.applied)
    saved_log = list(env.command_log)
    for key, value in bundle.entries:
        env.applied[key] = value
    for index, command in enumerate(bundle.script):
        if command.precondition is not None and command.precondition not in env.applied:
            env.applied = saved_applied
            env.command_log = saved_log
            return ExecutionReport(
                status="failed", failed_command=FailedCommand(index=index, text=command.text())
            )
        env.command_log.append(command.text())
    return ExecutionReport(status="ok")


def verify_environment(env: SimEnvironment, bundle: ConfigBundle) -> bool:
    """True iff the environment state, restricted to the bundle's keys,
    matches the bundle's entries exactly."""
    return all(env.applied.get(key) == value for key, value in bundle.entries)
