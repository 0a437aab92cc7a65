"""On-disk stage artifacts.

Every stage writes a manifest next to its data files recording the stage
name, a schema version, the hash of the config slice visible to that
stage, and the files it produced. Downstream stages verify the hash
before touching upstream data, so output from one configuration can
never silently feed a run of another.
"""

import json
import os

from ..errors import StageError

MANIFEST_VERSION = 1


def manifest_path(directory, stage):
    return os.path.join(directory, f"{stage}.manifest.json")


def write_manifest(directory, stage, config, files, extra=None, hash_stage=None):
    # hash_stage covers artifacts that follow another stage's protocol
    # (the feature-set comparison reuses the train configuration).
    anchor = hash_stage or stage
    payload = {
        "stage": stage,
        "manifest_version": MANIFEST_VERSION,
        "config_hash": config.chain_hash(anchor),
        "seed": config.stage_seed(anchor),
        "files": list(files),
    }
    if extra:
        payload["extra"] = extra
    os.makedirs(directory, exist_ok=True)
    with open(manifest_path(directory, stage), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(directory, stage, config, hash_stage=None):
    path = manifest_path(directory, stage)
    if not os.path.exists(path):
        raise StageError(
            f"stage {stage!r} has not produced artifacts yet: missing {path}"
        )
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    expected = config.chain_hash(hash_stage or stage)
    found = payload.get("config_hash")
    if found != expected:
        raise StageError(
            f"artifacts in {path} were produced by a different configuration "
            f"(hash {found}, current config expects {expected}); re-run the "
            f"{stage!r} stage"
        )
    return payload


def require_file(directory, name):
    path = os.path.join(directory, name)
    if not os.path.exists(path):
        raise StageError(f"missing stage artifact: {path}")
    return path


def write_table(path, header, rows):
    """Plain delimited text; values are written as given (use repr for
    floats that must survive a round trip bit for bit)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def read_table(path):
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise StageError(f"artifact {path} is empty")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise StageError(f"artifact {path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
    return header, rows
