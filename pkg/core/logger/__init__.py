import logging
import os
from datetime import datetime
from enum import Enum
from logging.handlers import RotatingFileHandler
from pathlib import Path

import shortuuid
from typing_extensions import override

from core.__version__ import __version__, program_name
from core.utils.working_dir import RUNTIME_DIR

_STAMP_FORMAT = "%Y-%m-%d_%H-%M-%S"


class LogLevel(Enum):
    """Levels of the standard logging module"""

    DEBUG = logging.DEBUG
    INFO = logging.INFO
    WARNING = logging.WARNING
    ERROR = logging.ERROR
    CRITICAL = logging.CRITICAL

    @override
    def __str__(self) -> str:
        return self.name.title()


class LogSource(Enum):
    """Line tag: CLI for the command front end, ENG for the numeric engine"""

    CLI = "[CLI]"
    ENG = "[ENG]"


class Logger:
    """Run log that opens its file lazily on the first line that passes the level.

    One file per process, named ``<program>_<timestamp>_<id>.log`` so
    ``clean_up_logs`` can order them by start time.
    """

    SRC = LogSource
    LVL = LogLevel

    def __init__(
        self,
        log_file: Path,
        log_level: LogLevel = LogLevel.DEBUG,
        to_console: bool = False,
        default_source: LogSource = LogSource.ENG,
    ) -> None:
        self.logger = logging.getLogger(__name__)
        self.logger.setLevel(log_level.value)
        self.log_file = log_file
        self.file_handler: RotatingFileHandler | None = None
        self.console_handler: logging.StreamHandler | None = None
        self.to_console = to_console
        self.default_source = default_source

    def _open(self) -> None:
        if self.file_handler is not None:
            return
        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self.file_handler = RotatingFileHandler(
            self.log_file, maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8"
        )
        self.file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
        )
        self.logger.addHandler(self.file_handler)
        if self.to_console:
            self._attach_console()
        self._emit(LogLevel.INFO, f"{program_name} v{__version__} (pid {os.getpid()})", None)

    def _attach_console(self) -> None:
        if self.console_handler is not None:
            return
        self.console_handler = logging.StreamHandler()
        self.console_handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        self.logger.addHandler(self.console_handler)

    def _emit(
        self,
        level: LogLevel,
        message: str,
        source: LogSource | None,
        exc_info: bool = False,
    ) -> None:
        if not self.logger.isEnabledFor(level.value):
            return
        self._open()
        tag = (source or self.default_source).value
        self.logger.log(level.value, f"{tag}: {str(message).strip()}", exc_info=exc_info)

    def enable_console(self) -> None:
        """Mirror records to stderr, used by ``--verbose``"""
        self.to_console = True
        if self.file_handler is not None:
            self._attach_console()

    def debug(self, message: str, source: LogSource | None = None) -> None:
        self._emit(LogLevel.DEBUG, message, source)

    def info(self, message: str, source: LogSource | None = None) -> None:
        self._emit(LogLevel.INFO, message, source)

    def warning(self, message: str, source: LogSource | None = None) -> None:
        self._emit(LogLevel.WARNING, message, source)

    def error(self, message: str, source: LogSource | None = None) -> None:
        self._emit(LogLevel.ERROR, message, source)

    def exception(self, message: str, source: LogSource | None = None) -> None:
        """Error with traceback; call inside an ``except`` block"""
        self._emit(LogLevel.ERROR, message, source, exc_info=True)

    def set_log_level(self, log_level: LogLevel) -> None:
        self.logger.setLevel(log_level.value)

    def clean_up_logs(self, max_logs: int) -> None:
        """Delete the oldest run logs so at most ``max_logs`` remain"""

        def started(path: Path) -> datetime:
            parts = path.stem.split("_")
            try:
                return datetime.strptime(f"{parts[1]}_{parts[2]}", _STAMP_FORMAT)
            except (IndexError, ValueError):
                return datetime.min

        logs = sorted(self.log_file.parent.glob("*.log"), key=started)
        for old in logs[: max(0, len(logs) - max_logs)]:
            if old != self.log_file:
                old.unlink(missing_ok=True)


_log_name = (
    f"{program_name.lower().replace(' ', '_')}_"
    f"{datetime.now().strftime(_STAMP_FORMAT)}_{shortuuid.uuid()[:7]}.log"
)
LOG = Logger(
    RUNTIME_DIR / "logs" / _log_name,
    to_console=os.getenv("BONFORGE_LOG_CONSOLE", "").lower() in ("1", "true", "yes"),
)
