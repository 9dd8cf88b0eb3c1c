from core.enums import CaseInsensitiveStrEnum


class TiltKind(CaseInsensitiveStrEnum):
    """Families of non-decreasing reward-quantile weights"""

    POWER = "power"
    EXPONENTIAL = "exponential"


class SpaceDistribution(CaseInsensitiveStrEnum):
    """Probability families for synthetic response spaces"""

    UNIFORM = "uniform"
    DIRICHLET = "dirichlet"
    ZIPF = "zipf"
