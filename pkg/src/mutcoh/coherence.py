"""Exact degree of justification, confirmation and coherence.

All counts are Python ints and every ratio is a Fraction; floats appear
only when a caller reads ``.value``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .argmap import ArgumentMap, to_cnf
from .counter import CounterBackend, ModelCounter
from .logic import CnfFormula, Position

DEFAULT_CAP = 20

ENTAILED = "entailed"
REFUTED = "refuted"
GRADED = "graded"


class InconsistentCondition(ValueError):
    """A conditioning position has no complete consistent extension."""

    def __init__(self, position: Position, name: str = "position"):
        self.position = position
        super().__init__(f"{name} {position.to_ints()} is inconsistent with the arguments")


class OpinionTooLarge(ValueError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        self.cost = exact_cost(size)
        super().__init__(
            f"opinion of size {size} exceeds cap {cap}; exact computation needs "
            f"{self.cost} conditioned model counts"
        )


def exact_cost(k: int) -> int:
    """Conditioned counts used by one exact one-sided coherence."""
    return 2 * ((1 << k) - 1) + 2


@dataclass(frozen=True)
class ConfirmationValue:
    exact: Fraction
    classification: str

    @property
    def value(self) -> float:
        return float(self.exact)


@dataclass(frozen=True)
class CoherenceValue:
    exact: Fraction

    @property
    def value(self) -> float:
        return float(self.exact)


def gray_masks(k: int) -> Iterator[int]:
    """All non-empty k-bit masks, successive masks differing in one bit."""
    for i in range(1, 1 << k):
        yield i ^ (i >> 1)


def subposition(a: Position, mask: int, order: list[int] | None = None) -> Position:
    """Restrict `a` to the variables selected by `mask`.

    Bit i selects the i-th smallest variable of the domain.
    """
    order = order if order is not None else sorted(a.domain)
    return a.restrict(v for i, v in enumerate(order) if mask >> i & 1)


def mask_of(a: Position, variables) -> int:
    order = sorted(a.domain)
    index = {v: i for i, v in enumerate(order)}
    mask = 0
    for v in variables:
        mask |= 1 << index[v]
    return mask


def classify(sigma_top: int, sigma_b: int, sigma_x: int, sigma_bx: int) -> ConfirmationValue:
    """Kemeny-Oppenheim confirmation of B by X from the four model counts."""
    if sigma_b == 0:
        raise ValueError("confirmation is undefined when sigma_B = 0")
    if sigma_bx == sigma_b:
        return ConfirmationValue(Fraction(1), ENTAILED)
    if sigma_bx == 0:
        return ConfirmationValue(Fraction(-1), REFUTED)
    j_plus = Fraction(sigma_bx, sigma_x)
    j_minus = Fraction(sigma_b - sigma_bx, sigma_top - sigma_x)
    return ConfirmationValue((j_plus - j_minus) / (j_plus + j_minus), GRADED)


class CoherenceEngine:
    """Coherence computations over one argument map, sharing one counter."""

    def __init__(
        self,
        source: ArgumentMap | CnfFormula | ModelCounter,
        *,
        timeout: float | None = None,
        backend: CounterBackend | None = None,
    ):
        if isinstance(source, ModelCounter):
            self.counter = source
        else:
            formula = to_cnf(source) if isinstance(source, ArgumentMap) else source
            self.counter = ModelCounter(formula, timeout=timeout, backend=backend)
        self._sigma_top: int | None = None

    @property
    def calls(self) -> int:
        return self.counter.calls

    def sigma(self, position: Position | None = None) -> int:
        return self.counter.count(position)

    def sigma_top(self) -> int:
        if self._sigma_top is None:
            self._sigma_top = self.counter.count()
        return self._sigma_top

    def _sigma_consistent(self, position: Position, name: str) -> int:
        value = self.counter.count(position)
        if value == 0:
            raise InconsistentCondition(position, name)
        return value

    def doj(self, a: Position, b: Position) -> Fraction:
        """Degree of justification of a by b: sigma_{a,b} / sigma_b."""
        sigma_b = self._sigma_consistent(b, "conditioning position")
        return Fraction(self.counter.count_joint(a, b), sigma_b)

    def confirmation(self, x: Position, b: Position) -> ConfirmationValue:
        sigma_top = self.counter.count()
        sigma_b = self._sigma_consistent(b, "confirmed position")
        return self._confirm(x, b, sigma_b, sigma_top)

    def _confirm(self, x: Position, b: Position, sigma_b: int, sigma_top: int) -> ConfirmationValue:
        sigma_x = self.counter.count(x)
        sigma_bx = self.counter.count_joint(b, x)
        return classify(sigma_top, sigma_b, sigma_x, sigma_bx)

    def confirmation_table(self, a: Position, b: Position, cap: int = DEFAULT_CAP) -> dict[int, ConfirmationValue]:
        """Confirmation of b by every non-empty subposition of a, keyed by mask."""
        k = len(a)
        if k < 1:
            raise ValueError("one-sided coherence needs a non-empty opinion")
        if k > cap:
            raise OpinionTooLarge(k, cap)
        sigma_top = self.counter.count()
        sigma_b = self._sigma_consistent(b, "position B")
        order = sorted(a.domain)
        return {
            mask: self._confirm(subposition(a, mask, order), b, sigma_b, sigma_top)
            for mask in gray_masks(k)
        }

    def one_coh(self, a: Position, b: Position, cap: int = DEFAULT_CAP) -> CoherenceValue:
        table = self.confirmation_table(a, b, cap)
        total = sum((c.exact for c in table.values()), Fraction(0))
        return CoherenceValue(total / len(table))

    def mut_coh(self, a: Position, b: Position, cap: int = DEFAULT_CAP) -> CoherenceValue:
        ab = self.one_coh(a, b, cap).exact
        ba = self.one_coh(b, a, cap).exact
        return CoherenceValue((ab + ba) / 2)


def doj(amap: ArgumentMap, a: Position, b: Position) -> Fraction:
    return CoherenceEngine(amap).doj(a, b)


def confirmation(amap: ArgumentMap, x: Position, b: Position) -> ConfirmationValue:
    return CoherenceEngine(amap).confirmation(x, b)


def one_coh(amap: ArgumentMap, a: Position, b: Position, cap: int = DEFAULT_CAP) -> CoherenceValue:
    return CoherenceEngine(amap).one_coh(a, b, cap)


def mut_coh(amap: ArgumentMap, a: Position, b: Position, cap: int = DEFAULT_CAP) -> CoherenceValue:
    return CoherenceEngine(amap).mut_coh(a, b, cap)
