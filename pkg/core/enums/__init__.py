import re
from enum import StrEnum

_SEPARATORS = re.compile(r"[\s\-]+")


def _normalize(value: str) -> str:
    return _SEPARATORS.sub("_", value.strip().lower())


class CaseInsensitiveStrEnum(StrEnum):
    """StrEnum that also accepts member names and loose spellings.

    Spec files and CLI flags write ``SFT-BoN``, ``sft bon`` or ``Dirichlet``;
    case, spaces and hyphens are folded to underscores before matching
    either the member name or its value.
    """

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            wanted = _normalize(value)
            for member in cls:
                if wanted in (member.name.lower(), _normalize(member.value)):
                    return member
        raise ValueError(f"No {cls.__name__} member with value '{value}'")
