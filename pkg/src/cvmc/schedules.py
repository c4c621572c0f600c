"""Growth schedules n -> m_n of the form ``const k`` or ``floor(c * n^p)``."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

_NUM = r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?"
_POWER_RE = re.compile(
    rf"^(?:floor\()?\s*(?:(?P<coef>{_NUM})\s*\*?\s*)?n\s*(?:\^|\*\*)\s*"
    rf"\(?\s*(?P<num>{_NUM})\s*(?:/\s*(?P<den>{_NUM}))?\s*\)?\s*\)?$")
_CONST_RE = re.compile(r"^(?:const\s*)?(?P<k>[0-9]+)$")


@dataclass(frozen=True)
class Schedule:
    """m_n = floor(coef * n ** power); ``power == 0`` is a constant schedule."""

    coef: float = 1.0
    power: float = 0.0

    @classmethod
    def const(cls, k: int) -> "Schedule":
        if k < 0:
            raise ValueError("m must be >= 0")
        return cls(float(k), 0.0)

    @classmethod
    def parse(cls, text) -> "Schedule":
        """Parse ``"5"``, ``"const 5"``, ``"n^1/3"``, ``"2*n^(1/4)"``, ``"floor(n^0.5)"``."""
        if isinstance(text, Schedule):
            return text
        if isinstance(text, int):
            return cls.const(text)
        s = str(text).strip().lower()
        m = _CONST_RE.match(s)
        if m:
            return cls.const(int(m["k"]))
        m = _POWER_RE.match(s)
        if not m:
            raise ValueError(f"cannot parse schedule {text!r}; expected 'const k' or 'c*n^p'")
        power = Fraction(m["num"])
        if m["den"]:
            power /= Fraction(m["den"])
        coef = float(m["coef"]) if m["coef"] else 1.0
        if coef < 0 or power < 0:
            raise ValueError("schedule coefficient and power must be >= 0")
        return cls(coef, float(power))

    @property
    def is_const(self) -> bool:
        return self.power == 0.0

    def __call__(self, n: int) -> int:
        v = self.coef * float(n) ** self.power
        # guard against n^(1/3) landing just below an exact integer
        return int(math.floor(v * (1 + 1e-12) + 1e-12))

    def __str__(self) -> str:
        if self.is_const:
            return f"const {int(self.coef)}"
        p = Fraction(self.power).limit_denominator(1000)
        ptxt = f"{p.numerator}/{p.denominator}" if p.denominator != 1 else str(p.numerator)
        c = "" if self.coef == 1.0 else f"{self.coef:g}*"
        return f"{c}n^{ptxt}"
