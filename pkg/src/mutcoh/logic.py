"""Propositional substrate: literals, clauses, CNF formulas, positions, DIMACS I/O."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping


class DimacsError(ValueError):
    """Raised for malformed DIMACS input."""


class TautologyError(ValueError):
    """A clause contains both a literal and its negation."""


class PositionConflict(ValueError):
    """Two positions assign different truth values to the same variables."""

    def __init__(self, variables: Iterable[int]):
        self.variables = frozenset(variables)
        super().__init__(f"positions conflict on variables {sorted(self.variables)}")


@dataclass(frozen=True, slots=True, order=True)
class Literal:
    variable: int
    polarity: bool = True

    def __post_init__(self):
        if self.variable < 1:
            raise ValueError(f"variable index must be >= 1, got {self.variable}")

    @classmethod
    def from_int(cls, value: int) -> Literal:
        if value == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(value), value > 0)

    def neg(self) -> Literal:
        return Literal(self.variable, not self.polarity)

    def __neg__(self) -> Literal:
        return self.neg()

    def __int__(self) -> int:
        return self.variable if self.polarity else -self.variable

    def __repr__(self) -> str:
        return f"Literal({int(self)})"


@dataclass(frozen=True, slots=True)
class Clause:
    """A disjunction of literals. Order is kept so DIMACS output is stable."""

    literals: tuple[Literal, ...]

    def __post_init__(self):
        seen: dict[int, bool] = {}
        unique = []
        for lit in self.literals:
            prev = seen.get(lit.variable)
            if prev is None:
                seen[lit.variable] = lit.polarity
                unique.append(lit)
            elif prev != lit.polarity:
                raise TautologyError(f"tautological clause on variable {lit.variable}")
        if len(unique) != len(self.literals):
            object.__setattr__(self, "literals", tuple(unique))

    @classmethod
    def of(cls, *values: int) -> Clause:
        return cls(tuple(Literal.from_int(v) for v in values))

    def to_ints(self) -> tuple[int, ...]:
        return tuple(int(lit) for lit in self.literals)

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.literals)

    def __len__(self) -> int:
        return len(self.literals)


@dataclass(frozen=True, slots=True)
class CnfFormula:
    num_variables: int
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        if self.num_variables < 0:
            raise ValueError("num_variables must be non-negative")
        object.__setattr__(self, "clauses", tuple(self.clauses))
        for clause in self.clauses:
            for lit in clause:
                if lit.variable > self.num_variables:
                    raise ValueError(
                        f"literal {int(lit)} exceeds num_variables={self.num_variables}"
                    )

    @classmethod
    def from_ints(cls, num_variables: int, clauses: Iterable[Iterable[int]]) -> CnfFormula:
        return cls(num_variables, tuple(Clause.of(*c) for c in clauses))

    def int_clauses(self) -> list[tuple[int, ...]]:
        return [c.to_ints() for c in self.clauses]


class Position:
    """A partial truth assignment, immutable.

    Stored as variable -> bool so a variable can never be both true and false.
    """

    __slots__ = ("_assignment", "_hash")

    def __init__(self, assignment: Mapping[int, bool] | None = None):
        assignment = dict(assignment or {})
        for var in assignment:
            if not isinstance(var, int) or var < 1:
                raise ValueError(f"invalid variable {var!r}")
        self._assignment = assignment
        self._hash = None

    @classmethod
    def from_literals(cls, literals: Iterable[int | Literal]) -> Position:
        """Build from signed ints (DIMACS polarity) or Literal objects.

        Raises PositionConflict when a variable appears with both polarities.
        """
        assignment: dict[int, bool] = {}
        conflicts = set()
        for lit in literals:
            if not isinstance(lit, Literal):
                lit = Literal.from_int(int(lit))
            prev = assignment.setdefault(lit.variable, lit.polarity)
            if prev != lit.polarity:
                conflicts.add(lit.variable)
        if conflicts:
            raise PositionConflict(conflicts)
        return cls(assignment)

    @property
    def domain(self) -> frozenset[int]:
        return frozenset(self._assignment)

    def items(self):
        return self._assignment.items()

    def literals(self) -> frozenset[Literal]:
        """The set-of-true-literals view of the position."""
        return frozenset(Literal(v, b) for v, b in self._assignment.items())

    def to_ints(self) -> list[int]:
        return [v if b else -v for v, b in sorted(self._assignment.items())]

    def restrict(self, variables: Iterable[int]) -> Position:
        return Position({v: self._assignment[v] for v in variables})

    def negated(self) -> Position:
        return Position({v: not b for v, b in self._assignment.items()})

    def union(self, other: Position) -> Position:
        return position_union(self, other)

    def extends(self, other: Position) -> bool:
        """True if this position agrees with every assignment of `other`."""
        mine = self._assignment
        return all(mine.get(v) == b for v, b in other._assignment.items())

    def get(self, variable: int):
        return self._assignment.get(variable)

    def __getitem__(self, variable: int) -> bool:
        return self._assignment[variable]

    def __contains__(self, variable: int) -> bool:
        return variable in self._assignment

    def __len__(self) -> int:
        return len(self._assignment)

    def __iter__(self):
        return iter(self._assignment)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Position):
            return NotImplemented
        return self._assignment == other._assignment

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._assignment.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Position({self.to_ints()})"


def position_union(a: Position, b: Position) -> Position:
    """Union of two positions; raises PositionConflict on disagreement."""
    if len(a) < len(b):
        a, b = b, a
    merged = dict(a._assignment)
    conflicts = []
    for var, val in b._assignment.items():
        prev = merged.setdefault(var, val)
        if prev != val:
            conflicts.append(var)
    if conflicts:
        raise PositionConflict(conflicts)
    return Position(merged)


def parse_dimacs(data: bytes | str) -> CnfFormula:
    if isinstance(data, bytes):
        data = data.decode("ascii")
    header = None
    clauses: list[Clause] = []
    current: list[int] = []
    for lineno, raw in enumerate(data.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if header is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for token in line.split():
            try:
                value = int(token)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad token {token!r}") from None
            if value == 0:
                try:
                    clauses.append(Clause.of(*current))
                except TautologyError as exc:
                    raise DimacsError(f"line {lineno}: {exc}") from None
                current = []
            else:
                if abs(value) > header[0]:
                    raise DimacsError(
                        f"line {lineno}: variable {abs(value)} out of range 1..{header[0]}"
                    )
                current.append(value)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause is not zero-terminated")
    if len(clauses) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], tuple(clauses))


def emit_dimacs(formula: CnfFormula) -> bytes:
    lines = [f"p cnf {formula.num_variables} {len(formula.clauses)}"]
    for clause in formula.clauses:
        lines.append(" ".join(str(v) for v in clause.to_ints()) + " 0")
    return ("\n".join(lines) + "\n").encode("ascii")
