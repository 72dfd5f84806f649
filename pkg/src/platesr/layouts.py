"""Plate layouts and the shared 36-symbol alphabet."""

from __future__ import annotations

import enum

import numpy as np

from .errors import DataError

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
DIGITS = "0123456789"
ALPHABET = LETTERS + DIGITS
PLATE_LEN = 7


class PlateLayout(enum.Enum):
    """Seven-position plate formats, described by per-position classes."""

    BRAZILIAN = "brazilian"
    MERCOSUR = "mercosur"

    @property
    def position_classes(self) -> str:
        # L = letter, D = digit, one symbol per plate position.
        return {
            PlateLayout.BRAZILIAN: "LLLDDDD",
            PlateLayout.MERCOSUR: "LLLDLDD",
        }[self]

    def legal_symbols(self, position: int) -> str:
        if not 0 <= position < PLATE_LEN:
            raise DataError(f"position {position} outside 0..{PLATE_LEN - 1}")
        return LETTERS if self.position_classes[position] == "L" else DIGITS

    def is_legal(self, label: str) -> bool:
        if len(label) != PLATE_LEN:
            return False
        return all(ch in self.legal_symbols(i) for i, ch in enumerate(label))

    def random_label(self, rng: np.random.Generator) -> str:
        chars = []
        for cls in self.position_classes:
            pool = LETTERS if cls == "L" else DIGITS
            chars.append(pool[int(rng.integers(len(pool)))])
        return "".join(chars)


def parse_layout(name: str) -> PlateLayout:
    try:
        return PlateLayout(name.lower())
    except ValueError:
        choices = ", ".join(l.value for l in PlateLayout)
        raise DataError(f"unknown layout {name!r}; expected one of: {choices}") from None
