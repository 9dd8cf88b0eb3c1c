from pathlib import Path
from typing import Any

import psutil
import tomlkit
from tomlkit.toml_document import TOMLDocument

from core.__version__ import __version__
from core.logger import LogLevel
from core.utils.working_dir import CONFIG_DIR

# section -> key -> default, written in this order to a fresh config
DEFAULTS: dict[str, dict[str, Any]] = {
    "general": {
        "log_level": "INFO",
        "max_logs": 20,
        "threads": 0,
        "output_dir": "runs",
    },
    "training": {
        "learning_rate": 0.1,
        "alpha": 0.005,
    },
}


class Config:
    """Application defaults persisted as TOML in the user config folder.

    Spec files override everything here; this only holds what a user would
    otherwise repeat on every run (log level, threads, output folder and the
    tabular training defaults).
    """

    # bump when a key changes meaning, older files are backed up and replaced
    CONFIG_VERSION = 1

    def __init__(self, config_path: Path | None = None) -> None:
        self.config_path = config_path or CONFIG_DIR / "config.toml"
        self._config: TOMLDocument = self._read()
        self.version = str(__version__)

    def _read(self) -> TOMLDocument:
        if not self.config_path.exists():
            return self._fresh()

        doc = tomlkit.parse(self.config_path.read_text(encoding="utf-8"))
        found = doc.get("general", {}).get("config_version", 0)
        if found != self.CONFIG_VERSION:
            self.config_path.rename(self.config_path.with_suffix(f".toml.v{found}.bak"))
            return self._fresh()

        # keys added in later releases of the same config version
        for section, values in DEFAULTS.items():
            for key, value in values.items():
                if key not in doc.get(section, {}):
                    self._put(doc, section, key, value)
        return doc

    def _fresh(self) -> TOMLDocument:
        doc = tomlkit.document()
        doc.add(tomlkit.comment("BonForge Configuration"))
        doc.add(tomlkit.nl())
        self._put(doc, "general", "config_version", self.CONFIG_VERSION)
        for section, values in DEFAULTS.items():
            for key, value in values.items():
                self._put(doc, section, key, value)
        return doc

    @staticmethod
    def _put(doc: TOMLDocument, section: str, key: str, value: Any) -> None:
        if section not in doc:
            doc.add(section, tomlkit.table())
        doc[section][key] = value  # pyright: ignore[reportIndexIssue]

    def save(self) -> None:
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(tomlkit.dumps(self._config), encoding="utf-8")

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Raw value from ``[section]``, ``default`` when either is missing"""
        return self._config.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        self._put(self._config, section, key, value)

    def _default(self, section: str, key: str) -> Any:
        return self.get(section, key, DEFAULTS[section][key])

    @property
    def log_level(self) -> LogLevel:
        """Unknown names fall back to INFO"""
        name = str(self._default("general", "log_level"))
        return LogLevel.__members__.get(name.upper(), LogLevel.INFO)

    @log_level.setter
    def log_level(self, value: LogLevel) -> None:
        self.set("general", "log_level", value.name)

    @property
    def max_logs(self) -> int:
        return int(self._default("general", "max_logs"))

    @property
    def threads(self) -> int:
        """Worker threads; 0 in the file means one per physical core"""
        threads = int(self._default("general", "threads"))
        if threads > 0:
            return threads
        return psutil.cpu_count(logical=False) or 1

    @threads.setter
    def threads(self, value: int) -> None:
        self.set("general", "threads", int(value))

    @property
    def output_dir(self) -> Path:
        """Parent folder for runs started without --out"""
        return Path(self._default("general", "output_dir"))

    @output_dir.setter
    def output_dir(self, value: Path) -> None:
        self.set("general", "output_dir", str(value))

    @property
    def learning_rate(self) -> float:
        return float(self._default("training", "learning_rate"))

    @property
    def alpha(self) -> float:
        """BoNBoN weight on the SFT term"""
        return float(self._default("training", "alpha"))


Conf = Config()
