from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

import shortuuid

from core.__version__ import FORMAT_VERSION, __version__
from core.enums.run_status import RunStatus


@dataclass
class RunManifest:
    """Provenance of one harness run, written before and finalized after it"""

    command: str
    spec_hash: str
    seed: int
    run_id: str = field(default_factory=lambda: shortuuid.uuid()[:12])
    status: RunStatus = RunStatus.QUEUED
    tool_version: str = str(__version__)
    format_version: str = str(FORMAT_VERSION)
    outputs: list[str] = field(default_factory=list)
    numeric_hash: str | None = None
    error_message: str | None = None
    created_at: datetime = field(default_factory=datetime.now)
    started_at: datetime | None = None
    completed_at: datetime | None = None

    def start(self) -> None:
        self.status = RunStatus.RUNNING
        self.started_at = datetime.now()

    def finish(self, outputs: list[str], numeric_hash: str) -> None:
        self.status = RunStatus.COMPLETED
        self.outputs = outputs
        self.numeric_hash = numeric_hash
        self.completed_at = datetime.now()

    def fail(self, error: str) -> None:
        self.status = RunStatus.FAILED
        self.error_message = error
        self.completed_at = datetime.now()

    def to_dict(self) -> dict:
        """Export manifest as dictionary for serialization"""
        return {
            "kind": "manifest",
            "format_version": self.format_version,
            "run_id": self.run_id,
            "command": self.command,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "status": self.status.name,
            "tool_version": self.tool_version,
            "outputs": list(self.outputs),
            "numeric_hash": self.numeric_hash,
            "error_message": self.error_message,
            "created_at": self.created_at.isoformat(),
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "completed_at": self.completed_at.isoformat()
            if self.completed_at
            else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunManifest:
        return cls(
            command=data["command"],
            spec_hash=data["spec_hash"],
            seed=data["seed"],
            run_id=data["run_id"],
            status=RunStatus[data["status"]],
            tool_version=data["tool_version"],
            format_version=data["format_version"],
            outputs=list(data["outputs"]),
            numeric_hash=data["numeric_hash"],
            error_message=data["error_message"],
            created_at=datetime.fromisoformat(data["created_at"]),
            started_at=datetime.fromisoformat(data["started_at"])
            if data["started_at"]
            else None,
            completed_at=datetime.fromisoformat(data["completed_at"])
            if data["completed_at"]
            else None,
        )
