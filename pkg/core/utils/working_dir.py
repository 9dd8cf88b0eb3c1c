import os
from pathlib import Path

import platformdirs
from dotenv import load_dotenv

load_dotenv()


def _get_runtime_directory() -> Path:
    """
    Directory for logs and other per-checkout state.

    ``BONFORGE_HOME`` relocates it, otherwise it sits next to the invocation
    directory so runs started from a checkout keep their state together.
    """
    override = os.getenv("BONFORGE_HOME", "").strip()
    if override:
        return Path(override).expanduser() / "runtime"
    return Path.cwd() / "runtime"


def _get_config_directory() -> Path:
    """
    Get the appropriate config directory based on portable mode.

    Portable mode (runtime dir) is used when the PORTABLE_MODE environment
    variable is set, which is useful for containers and CI where config should
    live in a known mounted location.

    Returns:
        Path: Config directory (runtime dir for portable, user config dir otherwise)
    """
    if os.getenv("PORTABLE_MODE", "").lower() in ("1", "true", "yes"):
        return RUNTIME_DIR
    return Path(platformdirs.user_config_dir("BonForge", "BonForge"))


RUNTIME_DIR = _get_runtime_directory()
CONFIG_DIR = _get_config_directory()
