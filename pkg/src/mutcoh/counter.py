"""Exact model counting conditioned on partial assignments.

The internal backend is an exhaustive DPLL counter: unit propagation,
decomposition of the residual clause set into variable-disjoint components
whose counts multiply, a factor of two for every variable that drops out of
all clauses, and a memo of component counts shared across conditions.
"""

from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from typing import Iterable

from .logic import CnfFormula, Position, PositionConflict, emit_dimacs, position_union

log = logging.getLogger(__name__)

ENV_BACKEND = "MUTCOH_COUNTER"

Component = frozenset  # frozenset[frozenset[int]]


class CounterError(RuntimeError):
    """The counting backend failed or produced unusable output."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class CounterTimeout(CounterError):
    pass


@dataclass(frozen=True)
class CounterBackend:
    """`kind` is "internal" or "external"; external needs a command template
    with exactly one ``{input}`` placeholder."""

    kind: str = "internal"
    command: str | None = None

    def __post_init__(self):
        if self.kind not in ("internal", "external"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external":
            if not self.command or self.command.count("{input}") != 1:
                raise ValueError("external command template needs exactly one {input} placeholder")

    @classmethod
    def from_env(cls) -> CounterBackend:
        command = os.environ.get(ENV_BACKEND)
        if command:
            return cls("external", command)
        return cls()


def _propagate(clauses: Iterable[frozenset], true: set[int]):
    """Unit-propagate `true` through `clauses`.

    Mutates `true` with implied literals. Returns the residual clauses (each
    shortened by its false literals, satisfied clauses dropped) or None on
    conflict.
    """
    for lit in true:
        if -lit in true:
            return None
    neg = {-lit for lit in true}
    pending = list(clauses)
    while True:
        out = []
        units = []
        for clause in pending:
            if not clause.isdisjoint(true):
                continue
            if not clause.isdisjoint(neg):
                clause = clause - neg
            if not clause:
                return None
            if len(clause) == 1:
                units.append(next(iter(clause)))
            else:
                out.append(clause)
        if not units:
            return out
        for lit in units:
            if lit in neg:
                return None
            if lit not in true:
                true.add(lit)
                neg.add(-lit)
        pending = out


def _components(clauses: list[frozenset]) -> list[Component]:
    """Split clauses into groups with pairwise disjoint variable sets."""
    if len(clauses) <= 1:
        return [frozenset(clauses)] if clauses else []
    parent: dict[int, int] = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for clause in clauses:
        it = iter(clause)
        first = abs(next(it))
        parent.setdefault(first, first)
        r1 = find(first)
        for lit in it:
            v = abs(lit)
            parent.setdefault(v, v)
            r2 = find(v)
            if r2 != r1:
                parent[r2] = r1
    groups: dict[int, list] = {}
    for clause in clauses:
        groups.setdefault(find(abs(next(iter(clause)))), []).append(clause)
    return [frozenset(g) for g in groups.values()]


def _variables(clauses: Iterable[frozenset]) -> set[int]:
    out: set[int] = set()
    for clause in clauses:
        out.update(abs(lit) for lit in clause)
    return out


class ModelCounter:
    """Counts models of one formula under varying conditions.

    ``calls`` counts conditioned-count queries (the unit the coherence code
    budgets against). The component cache is keyed by the residual component
    itself, so it is shared between all conditions on the same formula.
    """

    def __init__(
        self,
        formula: CnfFormula,
        *,
        cache_size: int = 200_000,
        timeout: float | None = None,
        backend: CounterBackend | None = None,
    ):
        self.formula = formula
        self.num_variables = formula.num_variables
        self.backend = backend or CounterBackend()
        self.cache_size = cache_size
        self.timeout = timeout
        self.calls = 0
        self._clauses = [frozenset(c) for c in formula.int_clauses()]
        self._cache: dict[Component, int] = {}
        self._deadline: float | None = None

    def _check_condition(self, condition: Position):
        for var in condition:
            if var > self.num_variables:
                raise ValueError(
                    f"condition variable {var} outside 1..{self.num_variables}"
                )

    def count(self, condition: Position | None = None) -> int:
        condition = condition or Position()
        self._check_condition(condition)
        self.calls += 1
        if self.backend.kind == "external":
            return _external_count(self.backend.command, self.formula, condition, self.timeout)
        self._deadline = None if self.timeout is None else time.monotonic() + self.timeout
        try:
            return self._count_internal(condition)
        finally:
            self._deadline = None

    def count_joint(self, y: Position, x: Position) -> int:
        """Models extending both y and x; a conflicting pair counts as 0."""
        try:
            joint = position_union(y, x)
        except PositionConflict:
            self._check_condition(y)
            self._check_condition(x)
            self.calls += 1
            return 0
        return self.count(joint)

    def _count_internal(self, condition: Position) -> int:
        true = set(condition.to_ints())
        residual = _propagate(self._clauses, true)
        if residual is None:
            return 0
        free = self.num_variables - len(true) - len(_variables(residual))
        total = 1 << free
        for comp in _components(residual):
            sub = self._count_component(comp)
            if sub == 0:
                return 0
            total *= sub
        return total

    def _count_component(self, comp: Component) -> int:
        cached = self._cache.get(comp)
        if cached is not None:
            return cached
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise CounterTimeout(f"model count exceeded {self.timeout}s")
        occurrences: dict[int, int] = {}
        for clause in comp:
            for lit in clause:
                v = abs(lit)
                occurrences[v] = occurrences.get(v, 0) + 1
        nvars = len(occurrences)
        branch = max(occurrences, key=lambda v: (occurrences[v], -v))
        total = 0
        for lit in (branch, -branch):
            true = {lit}
            residual = _propagate(comp, true)
            if residual is None:
                continue
            free = nvars - len(true) - len(_variables(residual))
            sub = 1 << free
            for part in _components(residual):
                sub *= self._count_component(part)
                if sub == 0:
                    break
            total += sub
        if len(self._cache) >= self.cache_size:
            self._cache.clear()
        self._cache[comp] = total
        return total

    def find_model(self, extra: Iterable[Iterable[int]] = ()) -> dict[int, bool] | None:
        """SAT mode: return one satisfying assignment over 1..N, or None."""
        return find_model(self.num_variables, self.formula.int_clauses() + [tuple(c) for c in extra])

    def satisfiable(self) -> bool:
        return self.find_model() is not None


def _solve(clauses: list[frozenset], true: set[int]) -> set[int] | None:
    residual = _propagate(clauses, true)
    if residual is None:
        return None
    if not residual:
        return true
    occurrences: dict[int, int] = {}
    for clause in residual:
        for lit in clause:
            occurrences[lit] = occurrences.get(lit, 0) + 1
    lit = max(occurrences, key=lambda l: (occurrences[l], -abs(l), l))
    for choice in (lit, -lit):
        branch = set(true)
        branch.add(choice)
        found = _solve(residual, branch)
        if found is not None:
            return found
    return None


def find_model(num_variables: int, clauses: Iterable[Iterable[int]]) -> dict[int, bool] | None:
    """Early-exit DPLL over signed-int clauses; unassigned variables default to False."""
    found = _solve([frozenset(c) for c in clauses], set())
    if found is None:
        return None
    model = {v: False for v in range(1, num_variables + 1)}
    for lit in found:
        model[abs(lit)] = lit > 0
    return model


def count_models(
    formula: CnfFormula,
    condition: Position | None = None,
    backend: CounterBackend | None = None,
    timeout: float | None = None,
) -> int:
    return ModelCounter(formula, backend=backend, timeout=timeout).count(condition)


def count_extending_not_extending(
    formula: CnfFormula,
    y: Position,
    x: Position,
    counter: ModelCounter | None = None,
) -> tuple[int, int]:
    """(models extending y and x, models extending y but not x)."""
    counter = counter or ModelCounter(formula)
    sigma_y = counter.count(y)
    joint = counter.count_joint(y, x)
    return joint, sigma_y - joint


def satisfiable(formula: CnfFormula) -> bool:
    return ModelCounter(formula).satisfiable()


_INT_RE = re.compile(r"(?<![\w.])\d+(?![\w.])")


def parse_counter_output(text: str) -> int:
    """Extract the model count from a counter's stdout.

    Prefers the last solution line (starting with ``s``) that carries an
    integer; falls back to the last line consisting of a bare integer.
    """
    solution = None
    bare = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("s "):
            numbers = _INT_RE.findall(stripped)
            if numbers:
                solution = int(numbers[-1])
        elif stripped.isdigit():
            bare = int(stripped)
    if solution is not None:
        return solution
    if bare is not None:
        return bare
    raise CounterError("no model count found in counter output", text)


def _external_count(command: str, formula: CnfFormula, condition: Position, timeout):
    units = [(lit,) for lit in condition.to_ints()]
    conditioned = CnfFormula.from_ints(
        formula.num_variables, formula.int_clauses() + units
    )
    fd, path = tempfile.mkstemp(suffix=".cnf", prefix="mutcoh-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(emit_dimacs(conditioned))
        argv = [part.replace("{input}", path) for part in shlex.split(command)]
        log.debug("running %s", argv)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            raise CounterTimeout(f"external counter timed out after {timeout}s", str(exc.stdout or "")) from None
        except OSError as exc:
            raise CounterError(f"cannot run external counter: {exc}") from None
        output = proc.stdout + proc.stderr
        # Some counters signal SAT/UNSAT through the exit code (10/20).
        if proc.returncode not in (0, 10, 20):
            raise CounterError(f"external counter exited with {proc.returncode}", output)
        return parse_counter_output(proc.stdout)
    finally:
        os.unlink(path)
