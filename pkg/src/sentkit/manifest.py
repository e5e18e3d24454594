"""Provenance manifest (_RUNINFO.json).

Records config hash, input hashes, master seed, toolkit version, per-stage
wall time, and a content hash for every emitted file. Two runs from
identical inputs produce manifests that differ only in the wall-time
fields.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

MANIFEST_NAME = "_RUNINFO.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_config(config) -> str:
    """Hash the config file bytes when it came from disk, else its dict."""
    if config.source_path is not None and Path(config.source_path).exists():
        return sha256_file(config.source_path)
    canonical = json.dumps(config.raw, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


class RunManifest:
    def __init__(self, config, version: str):
        self.data = {
            "toolkit_version": version,
            "config_hash": sha256_config(config),
            "master_seed": config.seed,
            "inputs": {},
            "stages": [],
            "outputs": {},
        }
        for key in ("sentiment", "market", "panel"):
            path = config.input_path(key)
            if path is not None:
                self.data["inputs"][key] = {
                    "path": str(path),
                    "sha256": sha256_file(path),
                }

    def record_stage(self, name: str, wall_time_s: float) -> None:
        self.data["stages"].append({"name": name, "wall_time_s": round(wall_time_s, 6)})

    def record_output(self, outdir: Path, path: Path) -> None:
        rel = str(path.relative_to(outdir))
        self.data["outputs"][rel] = sha256_file(path)

    def write(self, outdir: Path) -> Path:
        self.data["outputs"] = dict(sorted(self.data["outputs"].items()))
        target = outdir / MANIFEST_NAME
        with open(target, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return target


def load_manifest(outdir: str | Path) -> dict:
    with open(Path(outdir) / MANIFEST_NAME) as fh:
        return json.load(fh)


def comparable_view(manifest: dict) -> dict:
    """Manifest with wall times stripped, for determinism checks."""
    view = json.loads(json.dumps(manifest))
    view["stages"] = [{"name": s["name"]} for s in view.get("stages", [])]
    return view
