from __future__ import annotations

from dataclasses import dataclass

from cli.schemas import ExperimentSpec
from core.logger import LOG, LogSource
from core.storage import ArtifactStore


@dataclass
class RunContext:
    """Everything a command needs: its validated spec, resolved flags and output folder"""

    spec: ExperimentSpec
    seed: int
    threads: int
    store: ArtifactStore

    def echo(self, message: str) -> None:
        """User-facing result line, mirrored to the run log"""
        print(message)
        LOG.info(message, LogSource.CLI)
