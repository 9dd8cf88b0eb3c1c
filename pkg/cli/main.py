"""Command-line entry point: ``bonforge <command> [--spec FILE] [--seed N] [--out DIR] [--threads K]``.

Exit codes: 0 success, 1 failed criterion / bound violation / divergence,
2 invalid input (bad spec, missing or unreadable artifact).
"""

from __future__ import annotations

import argparse
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from cli.command_registry import get_command_runner
from cli.context import RunContext
from cli.schemas import ExperimentSpec, load_spec
from cli.types import Command
from core.__version__ import __version__, program_name
from core.config import Conf
from core.exceptions import BonForgeError, DivergenceError, SolverError
from core.logger import LOG, LogLevel, LogSource
from core.payloads.run_manifest import RunManifest
from core.storage import ArtifactStore
from core.utils.hashing import spec_hash

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=program_name.lower(),
        description="Best-of-n alignment desk: exact policies, analytics, sampling and training.",
    )
    parser.add_argument("--version", action="version", version=f"{program_name} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in Command:
        cmd = sub.add_parser(command.value, help=command.help)
        cmd.add_argument("--spec", type=Path, help="experiment spec (.toml or .json)")
        cmd.add_argument("--seed", type=int, help="override the spec seed")
        cmd.add_argument("--out", type=Path, help="output folder for artifacts")
        cmd.add_argument("--threads", type=int, help="worker threads (default: config)")
        cmd.add_argument("-v", "--verbose", action="store_true", help="debug log to the console")
    return parser


def _resolve(args: argparse.Namespace, spec: ExperimentSpec, command: Command) -> tuple[int, int, Path]:
    seed = spec.seed if args.seed is None else args.seed
    if not 0 <= seed < 2**64:
        raise ValueError(f"--seed must be an unsigned 64-bit integer, got {seed}")
    threads = args.threads if args.threads is not None else (spec.threads or Conf.threads)
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    if args.out is not None:
        out = args.out
    elif spec.output_dir:
        out = Path(spec.output_dir)
    else:
        out = Conf.output_dir / f"{command.value}-{seed}"
    return seed, threads, out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = Command(args.command)

    LOG.set_log_level(LogLevel.DEBUG if args.verbose else Conf.log_level)
    if args.verbose:
        LOG.enable_console()
    LOG.clean_up_logs(Conf.max_logs)

    try:
        spec = load_spec(args.spec)
        seed, threads, out = _resolve(args, spec, command)
    except ValidationError as e:
        print(f"Invalid spec: {e}")
        LOG.error(f"Invalid spec {args.spec}: {e}", LogSource.CLI)
        return EXIT_INVALID_INPUT
    except (OSError, ValueError, BonForgeError) as e:
        print(f"Invalid input: {e}")
        LOG.error(f"Invalid input: {e}", LogSource.CLI)
        return EXIT_INVALID_INPUT

    store = ArtifactStore(out)
    section = spec.section(command.value).model_dump(mode="json")
    manifest = RunManifest(
        command=command.value,
        spec_hash=spec_hash({"command": command.value, "seed": seed, command.value: section}),
        seed=seed,
    )
    manifest.start()
    store.write_manifest(manifest)
    LOG.info(f"Run {manifest.run_id}: {command.value} seed={seed} out={out}", LogSource.CLI)

    ctx = RunContext(spec=spec, seed=seed, threads=threads, store=store)
    try:
        code = get_command_runner(command)(ctx)
    except (DivergenceError, SolverError) as e:
        LOG.exception(f"{command.value} failed: {e}", LogSource.CLI)
        print(f"Failed: {e}")
        code = EXIT_FAILED
        manifest.fail(str(e))
    except BonForgeError as e:
        LOG.error(f"{command.value}: invalid input: {e}", LogSource.CLI)
        print(f"Invalid input: {e}")
        code = EXIT_INVALID_INPUT
        manifest.fail(str(e))
    except Exception as e:
        LOG.exception(f"{command.value} crashed: {e}", LogSource.CLI)
        print(f"Unexpected error: {e}")
        code = EXIT_FAILED
        manifest.fail(str(e))
    else:
        manifest.finish(store.relative_outputs(), store.numeric_hash())
        if code != EXIT_OK:
            manifest.error_message = f"exit status {code}"

    store.write_manifest(manifest)
    LOG.info(f"Run {manifest.run_id} finished with exit status {code}", LogSource.CLI)
    return code


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
