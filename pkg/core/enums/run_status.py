from enum import Enum, auto


class RunStatus(Enum):
    """Lifecycle of a harness run, as recorded in its manifest"""

    QUEUED = auto()
    RUNNING = auto()
    COMPLETED = auto()
    FAILED = auto()
