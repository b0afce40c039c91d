from __future__ import annotations

import enum


class ClassLabel(enum.Enum):
    """Speaker group. Declaration order is the fixed tie-break order."""

    NEUROTYPICAL = "neurotypical"
    DYSARTHRIA = "dysarthria"
    AOS = "aos"

    @property
    def is_patient(self) -> bool:
        return self is not ClassLabel.NEUROTYPICAL

    @property
    def order(self) -> int:
        return _ORDER[self]

    @classmethod
    def parse(cls, value: str | ClassLabel) -> ClassLabel:
        if isinstance(value, ClassLabel):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {value!r}; expected one of "
                             f"{[c.value for c in cls]}") from None

    def __str__(self) -> str:
        return self.value


CLASSES = (ClassLabel.NEUROTYPICAL, ClassLabel.DYSARTHRIA, ClassLabel.AOS)
_ORDER = {c: i for i, c in enumerate(CLASSES)}
