"""Build step scorers from ``kind:path`` specs and manifest files.

A manifest is JSON::

    {"floor_margin": 10.0,
     "members": [{"kind": "toy", "rules": "a.rules"},
                 {"kind": "toy", "rules": "b.rules", "max_edits_per_pass": 2}]}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
from pathlib import Path

from .decode import ensemble
from .errors import ConfigError
from .toy_model import RuleScorer, load_rules

_TOY_OVERRIDES = ("copy_cost", "eos_cost", "max_edits_per_pass")


def _member(entry: dict, base: Path):
    kind = entry.get("kind")
    if kind == "toy":
        rules = entry.get("rules")
        if not rules:
            raise ConfigError("toy member needs a 'rules' path")
        path = Path(rules)
        if not path.is_absolute() and (base / path).exists():
            path = base / path
        overrides = {k: entry[k] for k in _TOY_OVERRIDES if k in entry}
        return RuleScorer(load_rules(path, **overrides))
    if kind == "ensemble":
        return load_manifest(base / entry["manifest"])
    raise ConfigError(f"unknown scorer kind {kind!r}")


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    members = doc.get("members") or []
    if not members:
        raise ConfigError(f"{path}: manifest lists no members")
    scorers = [_member(m, path.parent) for m in members]
    return ensemble(scorers, float(doc.get("floor_margin", 10.0)))


def load_scorer(spec: str):
    """``toy:<rules file or packaged name>`` or ``ensemble:<manifest>``."""
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ConfigError(f"model spec {spec!r} must look like toy:<rules> or ensemble:<manifest>")
    if kind == "toy":
        return RuleScorer(load_rules(arg))
    if kind == "ensemble":
        return load_manifest(arg)
    raise ConfigError(f"unknown model kind {kind!r} (expected toy or ensemble)")
