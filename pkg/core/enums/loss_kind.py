from core.enums import CaseInsensitiveStrEnum


class LossKind(CaseInsensitiveStrEnum):
    """Training objectives available to the tabular trainer"""

    SFT_BON = "sft_bon"
    IPO_BON = "ipo_bon"
    BONBON = "bonbon"
    DPO = "dpo"
    IPO = "ipo"

    @property
    def takes_beta(self) -> bool:
        """Whether the loss has a free regularization strength"""
        return self in (LossKind.DPO, LossKind.IPO)

    @property
    def fixes_beta(self) -> bool:
        """Whether beta is pinned to the best-of-n constant"""
        return self in (LossKind.IPO_BON, LossKind.BONBON)


class OptimizerKind(CaseInsensitiveStrEnum):
    """Update rule for the trainer"""

    SGD = "sgd"
    RMSPROP = "rmsprop"
