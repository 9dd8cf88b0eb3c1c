import hashlib
import json
from collections.abc import Iterable
from pathlib import Path
from typing import Any

# run-specific keys that never change numeric results
VOLATILE_KEYS = frozenset({"output_dir", "threads", "run_id", "started_at", "completed_at"})


def spec_hash(spec: dict[str, Any]) -> str:
    """SHA256 of a spec with volatile keys removed, keys sorted"""
    stable = {k: v for k, v in spec.items() if k not in VOLATILE_KEYS}
    payload = json.dumps(stable, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def files_hash(paths: Iterable[Path], root: Path) -> str:
    """SHA256 over (relative name, bytes) of every file, in sorted name order"""
    hasher = hashlib.sha256()
    for path in sorted(paths, key=lambda p: p.relative_to(root).as_posix()):
        hasher.update(path.relative_to(root).as_posix().encode())
        hasher.update(b"\0")
        hasher.update(path.read_bytes())
    return hasher.hexdigest()
