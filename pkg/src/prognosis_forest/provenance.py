"""Version and config-hash metadata stamped on every emitted artifact."""

from __future__ import annotations

import hashlib
import json
from importlib import metadata

PACKAGE = "artifact"


def tool_version() -> str:
    try:
        return metadata.version(PACKAGE)
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(config: dict) -> str:
    """sha256 over the canonical JSON form, so key order and spacing do not matter."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def provenance(config: dict, seed: int) -> dict:
    return {"tool_version": tool_version(), "config_hash": config_hash(config), "seed": int(seed)}


def check_provenance(record: dict, expected_hash: str) -> list[str]:
    """Problems found in an artifact's provenance block (empty when it matches)."""
    prov = record.get("provenance")
    if not isinstance(prov, dict):
        return ["no provenance block"]
    problems = [f"missing {k}" for k in ("tool_version", "config_hash", "seed") if k not in prov]
    if "config_hash" in prov and prov["config_hash"] != expected_hash:
        problems.append(f"config hash {prov['config_hash'][:12]} != {expected_hash[:12]}")
    return problems
