from core.enums import CaseInsensitiveStrEnum


class Command(CaseInsensitiveStrEnum):
    """Subcommands of the bonforge command line"""

    CURVES = "curves"
    BOUNDS = "bounds"
    GEN = "gen"
    TRAIN = "train"
    EVAL = "eval"
    REPRODUCE = "reproduce"
    SWEEP = "sweep"

    @property
    def help(self) -> str:
        return _HELP[self]


_HELP = {
    Command.CURVES: "win rate vs KL curves of best-of-n and the optimal policy",
    Command.BOUNDS: "check every discrete-vs-continuous inequality on a set of spaces",
    Command.GEN: "generate spaces and a best/worst-of-n preference dataset",
    Command.TRAIN: "train a tabular policy on a saved dataset",
    Command.EVAL: "score a saved policy against the reference and best-of-n",
    Command.REPRODUCE: "run the full acceptance suite",
    Command.SWEEP: "BoNBoN over an alpha x beta-scale grid",
}
