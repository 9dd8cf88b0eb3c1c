"""Artifact files: spaces, datasets, policies, traces, curves and reports.

Every file carries a ``format_version``; readers refuse a different major
version. JSON artifacts hold it as a top-level key, the dataset JSONL in
its header line and CSV files in a leading ``#`` comment line.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from semver import VersionInfo

from core.__version__ import FORMAT_VERSION
from core.distributions import ResponseSpace, build_space
from core.exceptions import ArtifactError, UnsupportedFormatError
from core.logger import LOG
from core.payloads.run_manifest import RunManifest
from core.payloads.training import TRACE_COLUMNS, TraceRow, TrainTrace
from core.sampling import GENERATOR_VERSION, PreferenceDataset, PreferenceRecord
from core.utils.hashing import files_hash

CSV_HEADER_PREFIX = "# format_version="
MANIFEST_NAME = "manifest.json"


def check_format_version(path: Path, found: Any) -> None:
    """Reject artifacts written with a different major format version"""
    try:
        version = VersionInfo.parse(str(found))
    except (TypeError, ValueError):
        raise UnsupportedFormatError(path, str(found), str(FORMAT_VERSION)) from None
    if version.major != FORMAT_VERSION.major:
        raise UnsupportedFormatError(path, str(found), str(FORMAT_VERSION))


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ArtifactError(f"{path}: file not found") from None
    except OSError as e:
        raise ArtifactError(f"{path}: {e}") from e


def read_json(path: Path, kind: str) -> dict:
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ArtifactError(f"{path}: expected a JSON object")
    check_format_version(path, data.get("format_version"))
    if data.get("kind") != kind:
        raise ArtifactError(f"{path}: expected a '{kind}' artifact, found '{data.get('kind')}'")
    return data


def _dump(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


# readers
def load_spaces(path: Path) -> list[ResponseSpace]:
    data = read_json(path, "spaces")
    try:
        return [
            build_space(s["probs"], s["rewards"], s.get("attribute"), prompt_id=s["prompt_id"])
            for s in data["spaces"]
        ]
    except KeyError as e:
        raise ArtifactError(f"{path}: space entry is missing {e}") from None


def load_dataset(path: Path) -> PreferenceDataset:
    lines = _read_text(path).splitlines()
    if not lines:
        raise ArtifactError(f"{path}: empty dataset file (no header)")
    try:
        header = json.loads(lines[0])
        check_format_version(path, header.get("format_version"))
        if header.get("kind") != "dataset":
            raise ArtifactError(f"{path}: first line is not a dataset header")
        n = int(header["n"])
        spaces_ref = tuple(header["spaces_ref"])
        records = []
        for line in lines[1:]:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                PreferenceRecord(
                    prompt_id=row["prompt_id"],
                    best_index=int(row["best"]),
                    worst_index=int(row["worst"]),
                    n=int(row["n"]),
                    weight=float(row.get("weight", 1.0)),
                )
            )
    except (json.JSONDecodeError, AttributeError, KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"{path}: malformed dataset ({e})") from e
    return PreferenceDataset(tuple(records), n, spaces_ref, seed=header.get("seed"))


def load_policy(path: Path) -> dict[str, list[float]]:
    """``{prompt_id: logits}`` as saved by :meth:`ArtifactStore.write_policy`"""
    return read_json(path, "policy")["logits"]


def load_trace(path: Path) -> TrainTrace:
    trace = TrainTrace()
    for row in _read_csv(path):
        trace.append(
            TraceRow(
                step=int(row["step"]),
                loss_value=float(row["loss"]),
                win_rate_vs_reference=float(row["win_rate"]),
                kl_vs_reference=float(row["kl"]),
                mean_attribute=_optional_float(row["mean_attribute"]),
                mean_log_ratio_statistic=float(row["mean_h"]),
                sft_term=_optional_float(row["sft_term"]),
                ipo_term=_optional_float(row["ipo_term"]),
            )
        )
    return trace


def load_csv(path: Path) -> list[dict[str, str]]:
    return _read_csv(path)


def load_manifest(path: Path) -> RunManifest:
    return RunManifest.from_dict(read_json(path, "manifest"))


def _optional_float(value: str) -> float | None:
    return float(value) if value != "" else None


def _read_csv(path: Path) -> list[dict[str, str]]:
    lines = _read_text(path).splitlines()
    if not lines or not lines[0].startswith(CSV_HEADER_PREFIX):
        raise ArtifactError(f"{path}: missing format version line")
    check_format_version(path, lines[0].removeprefix(CSV_HEADER_PREFIX).strip())
    return list(csv.DictReader(lines[1:]))


class ArtifactStore:
    """Writes the artifacts of one run below a single output folder"""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []

    def _target(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def _stamp(self, kind: str, payload: dict) -> dict:
        return {"kind": kind, "format_version": str(FORMAT_VERSION), **payload}

    def write_json(self, name: str, kind: str, payload: dict) -> Path:
        path = self._target(name)
        path.write_text(_dump(self._stamp(kind, payload)), encoding="utf-8")
        LOG.debug(f"Wrote {kind} to {path}")
        return path

    def write_spaces(self, name: str, spaces: Sequence[ResponseSpace]) -> Path:
        return self.write_json(name, "spaces", {"spaces": [s.to_dict() for s in spaces]})

    def write_dataset(self, name: str, dataset: PreferenceDataset) -> Path:
        header = self._stamp(
            "dataset",
            {
                "seed": dataset.seed,
                "n": dataset.n,
                "generator_version": GENERATOR_VERSION,
                "records": len(dataset),
                "duplicate_rate": dataset.duplicate_rate,
                "spaces_ref": list(dataset.spaces_ref),
            },
        )
        path = self._target(name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(header) + "\n")
            for record in dataset.records:
                f.write(json.dumps(record.to_dict()) + "\n")
        LOG.debug(f"Wrote {len(dataset)} records to {path}")
        return path

    def write_policy(self, name: str, logits: dict[str, list[float]]) -> Path:
        return self.write_json(name, "policy", {"logits": logits})

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[dict]) -> Path:
        path = self._target(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(f"{CSV_HEADER_PREFIX}{FORMAT_VERSION}\n")
            writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: "" if v is None else v for k, v in row.items()})
        return path

    def write_trace(self, name: str, trace: TrainTrace) -> Path:
        return self.write_csv(name, TRACE_COLUMNS, (row.to_row() for row in trace.rows))

    def numeric_hash(self) -> str:
        return files_hash(self.outputs, self.root)

    def write_manifest(self, manifest: RunManifest) -> Path:
        """The manifest is provenance, never part of the hashed outputs"""
        path = self.root / MANIFEST_NAME
        path.write_text(_dump(manifest.to_dict()), encoding="utf-8")
        return path

    def relative_outputs(self) -> list[str]:
        return [p.relative_to(self.root).as_posix() for p in self.outputs]
