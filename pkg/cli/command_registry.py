"""Central registry for command entry points.

Command modules import most of the engine; resolving them here at call time
keeps ``bonforge --help`` fast and free of circular imports.
"""

from collections.abc import Callable

from cli.context import RunContext
from cli.types import Command


def get_command_runner(command: Command) -> Callable[[RunContext], int]:
    """Get the run function for a given command."""
    from cli.commands import bounds, curves, evaluate, gen, reproduce, sweep, train

    registry = {
        Command.CURVES: curves.run,
        Command.BOUNDS: bounds.run,
        Command.GEN: gen.run,
        Command.TRAIN: train.run,
        Command.EVAL: evaluate.run,
        Command.REPRODUCE: reproduce.run,
        Command.SWEEP: sweep.run,
    }

    return registry[command]
