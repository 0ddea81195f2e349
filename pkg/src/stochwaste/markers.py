"""Explicit infinity markers for profits and loss measures.

Infinite outcomes (an infeasible rolling-horizon subproblem, an infeasible
auxiliary problem in the stochastic measures) are reported through these
singletons instead of float infinities, so that they can never leak into
arithmetic unnoticed.
"""

from __future__ import annotations


class _Infinity:
    __slots__ = ("_sign",)

    def __init__(self, sign: int) -> None:
        self._sign = sign

    def __repr__(self) -> str:
        return "NegativeInfinity" if self._sign < 0 else "PositiveInfinity"

    def __str__(self) -> str:
        return "-∞" if self._sign < 0 else "∞"

    def __bool__(self) -> bool:
        return True

    def __lt__(self, other):
        if other is self:
            return False
        return self._sign < 0

    def __gt__(self, other):
        if other is self:
            return False
        return self._sign > 0

    def __le__(self, other):
        return other is self or self < other

    def __ge__(self, other):
        return other is self or self > other

    def __float__(self) -> float:
        raise TypeError(f"{self!r} has no float value; check is_finite() first")

    def __reduce__(self):
        return (_marker, (self._sign,))


def _marker(sign: int) -> _Infinity:
    return NEG_INF if sign < 0 else POS_INF


NEG_INF = _Infinity(-1)
POS_INF = _Infinity(+1)


def is_finite(value) -> bool:
    return not isinstance(value, _Infinity)


def to_text(value, fmt: str = "{:.6g}") -> str:
    """Render a number or marker; markers are rendered literally as ∞ / -∞."""
    if isinstance(value, _Infinity):
        return str(value)
    if value is None:
        return "n/a"
    return fmt.format(value)


def to_json(value):
    if isinstance(value, _Infinity):
        return "-inf" if value is NEG_INF else "inf"
    return value


def from_json(value):
    if value == "-inf":
        return NEG_INF
    if value == "inf":
        return POS_INF
    return value
