"""Loader for the bundled data files (design spaces, constraints, models).

Every bundled file is listed in ``assets/manifest.json`` with its sha256;
loads go through the manifest so a corrupted checkout fails loudly instead of
silently changing experiment oracles.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .constraints import parse_constraints, tree_parameters
from .errors import AssetError
from .space import ParameterSpace

#: processors with a bundled constraint file
CONSTRAINED = ("boom",)

PROCESSORS = ("el2_veer", "rocketchip", "boom")


def asset_root() -> Path:
    return Path(resources.files("aspo") / "assets")


def load_manifest(root=None) -> dict:
    root = Path(root) if root is not None else asset_root()
    path = root / "manifest.json"
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise AssetError(f"manifest missing: {path}") from None
    except json.JSONDecodeError as exc:
        raise AssetError(f"manifest unreadable: {exc}") from None


def _verified_text(root: Path, rel: str, manifest: dict) -> str:
    entry = next((f for f in manifest["files"] if f["path"] == rel), None)
    if entry is None:
        raise AssetError(f"file not listed in manifest: {rel}")
    path = root / rel
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise AssetError(f"bundled file missing: {rel}") from None
    digest = hashlib.sha256(raw).hexdigest()
    if digest != entry["sha256"]:
        raise AssetError(f"hash mismatch for {rel}: expected {entry['sha256']},"
                         f" got {digest}")
    return raw.decode("utf-8")


def load_space(processor: str, root=None) -> ParameterSpace:
    root = Path(root) if root is not None else asset_root()
    manifest = load_manifest(root)
    text = _verified_text(root, f"spaces/{processor}.json", manifest)
    return ParameterSpace.from_json(text)


def load_constraint_tree(processor: str, space: ParameterSpace, root=None):
    """Constraint tree for a processor, or None when none is bundled."""
    if processor not in CONSTRAINED:
        return None
    root = Path(root) if root is not None else asset_root()
    manifest = load_manifest(root)
    text = _verified_text(root, f"constraints/{processor}.json", manifest)
    return parse_constraints(text, space)


def load_model_dict(processor: str, root=None) -> dict:
    root = Path(root) if root is not None else asset_root()
    manifest = load_manifest(root)
    return json.loads(_verified_text(root, f"models/{processor}.json", manifest))


@dataclass
class Bundle:
    processor: str
    space: ParameterSpace
    tree: object  # Conj or None
    model: dict


def load_bundle(processor: str, root=None) -> Bundle:
    if processor not in PROCESSORS:
        raise AssetError(f"unknown processor {processor!r}; "
                         f"bundled: {', '.join(PROCESSORS)}")
    space = load_space(processor, root)
    tree = load_constraint_tree(processor, space, root)
    model = load_model_dict(processor, root)
    _cross_check(processor, space, tree, model)
    return Bundle(processor, space, tree, model)


def load_assets(root=None) -> dict:
    """Verify and parse every bundled file; returns processor -> Bundle."""
    root = Path(root) if root is not None else asset_root()
    manifest = load_manifest(root)
    for entry in manifest["files"]:
        _verified_text(root, entry["path"], manifest)
    listed = {f["path"] for f in manifest["files"]}
    on_disk = {str(p.relative_to(root)) for p in root.rglob("*.json")
               if p.name != "manifest.json"}
    unlisted = on_disk - listed
    if unlisted:
        raise AssetError(f"bundled files missing from manifest: {sorted(unlisted)}")
    return {p: load_bundle(p, root) for p in PROCESSORS}


def _cross_check(processor, space, tree, model) -> None:
    if tree is not None:
        undeclared = tree_parameters(tree) - {p.name for p in space.params}
        if undeclared:
            raise AssetError(f"{processor}: constraints reference undeclared "
                             f"parameters {sorted(undeclared)}")
    missing = {p.name for p in space.params} - set(model.get("parameters", {}))
    if missing:
        raise AssetError(f"{processor}: model file lacks coefficients for "
                         f"{sorted(missing)}")
