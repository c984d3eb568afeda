"""Argument maps: data model, CNF translation, statement levels, JSON I/O,
and the randomized synthetic generator."""

from __future__ import annotations

import json
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate
from typing import Iterable, Mapping

from .counter import find_model
from .logic import Clause, CnfFormula, Literal

# Premise-count distribution fitted to the Veggie Debate map.
REFERENCE_D = {2: 0.19, 3: 0.23, 4: 0.32, 5: 0.26}


class MapSchemaError(ValueError):
    pass


class UnsatisfiableMapError(ValueError):
    pass


class GenerationExhausted(RuntimeError):
    """Too many consecutive candidate arguments made the map unsatisfiable."""


@dataclass(frozen=True)
class Argument:
    premises: tuple[Literal, ...]
    conclusion: Literal

    def __post_init__(self):
        object.__setattr__(self, "premises", tuple(self.premises))
        if not self.premises:
            raise ValueError("an argument needs at least one premise")
        variables = [p.variable for p in self.premises]
        if len(set(variables)) != len(variables):
            raise ValueError(f"duplicate premise variables in {variables}")
        if self.conclusion.variable in variables:
            raise ValueError(f"conclusion variable {self.conclusion.variable} is also a premise")

    @classmethod
    def of(cls, premises: Iterable[int], conclusion: int) -> Argument:
        return cls(tuple(Literal.from_int(p) for p in premises), Literal.from_int(conclusion))

    def clause(self) -> Clause:
        return Clause(tuple(p.neg() for p in self.premises) + (self.conclusion,))

    def variables(self) -> list[int]:
        return [p.variable for p in self.premises] + [self.conclusion.variable]


@dataclass(frozen=True)
class ArgumentMap:
    num_statements: int
    arguments: tuple[Argument, ...] = ()
    key_statements: frozenset[int] = frozenset()
    statement_labels: Mapping[int, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "arguments", tuple(self.arguments))
        object.__setattr__(self, "key_statements", frozenset(self.key_statements))
        if self.num_statements < 1:
            raise ValueError("num_statements must be positive")
        for arg in self.arguments:
            for var in arg.variables():
                if var > self.num_statements:
                    raise ValueError(f"statement {var} outside 1..{self.num_statements}")
        for var in self.key_statements:
            if not 1 <= var <= self.num_statements:
                raise ValueError(f"key statement {var} outside 1..{self.num_statements}")

    @property
    def statements(self) -> frozenset[int]:
        """Statements present in the map: key statements plus those used by arguments."""
        present = set(self.key_statements)
        for arg in self.arguments:
            present.update(arg.variables())
        return frozenset(present)

    def is_satisfiable(self) -> bool:
        return find_model(self.num_statements, to_cnf(self).int_clauses()) is not None


def to_cnf(amap: ArgumentMap) -> CnfFormula:
    return CnfFormula(amap.num_statements, tuple(a.clause() for a in amap.arguments))


def levels(amap: ArgumentMap) -> dict[int, float]:
    """Shortest argument distance from each statement to a key statement.

    Key statements sit at 0; a premise is one level above the conclusion it
    supports or attacks. Statements not connected to any key statement map
    to ``math.inf``.
    """
    premises_of: dict[int, set[int]] = {}
    for arg in amap.arguments:
        premises_of.setdefault(arg.conclusion.variable, set()).update(
            p.variable for p in arg.premises
        )
    level: dict[int, float] = {s: math.inf for s in range(1, amap.num_statements + 1)}
    queue = deque()
    for s in sorted(amap.key_statements):
        level[s] = 0
        queue.append(s)
    while queue:
        s = queue.popleft()
        for p in premises_of.get(s, ()):
            if level[p] > level[s] + 1:
                level[p] = level[s] + 1
                queue.append(p)
    return level


class LevelTracker:
    """Maintains levels while arguments are appended one at a time."""

    def __init__(self, key_statements: Iterable[int]):
        self.level: dict[int, float] = {s: 0 for s in key_statements}
        self._premises_of: dict[int, set[int]] = {}

    def add(self, arg: Argument) -> None:
        c = arg.conclusion.variable
        self._premises_of.setdefault(c, set()).update(p.variable for p in arg.premises)
        for p in arg.premises:
            self.level.setdefault(p.variable, math.inf)
        self.level.setdefault(c, math.inf)
        queue = deque([c])
        while queue:
            s = queue.popleft()
            for p in self._premises_of.get(s, ()):
                if self.level[p] > self.level[s] + 1:
                    self.level[p] = self.level[s] + 1
                    queue.append(p)


@dataclass(frozen=True)
class GenParams:
    n: int
    k: int
    alpha: float
    psi: float = 0.5
    gamma: float = 0.5
    d: Mapping[int, float] = field(default_factory=lambda: dict(REFERENCE_D), hash=False)
    max_attempts: int = 1000
    # "prose": the drawn value is the premise count; "pseudocode": it is
    # premise count + 1 (clause width).
    premise_convention: str = "prose"

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (0 < self.psi <= 1 and 0 < self.gamma <= 1):
            raise ValueError("psi and gamma must lie in (0, 1]")
        if not self.d or any(p <= 0 for p in self.d.values()):
            raise ValueError("premise distribution needs positive probabilities")
        if abs(sum(self.d.values()) - 1) > 1e-9:
            raise ValueError(f"premise distribution sums to {sum(self.d.values())}, not 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if self.premise_convention not in ("prose", "pseudocode"):
            raise ValueError(f"unknown premise convention {self.premise_convention!r}")
        offset = 0 if self.premise_convention == "prose" else 1
        for u in self.d:
            t = u - offset
            if t < 1 or t > self.n - 1:
                raise ValueError(f"premise count {t} impossible with n={self.n}")

    @property
    def num_arguments(self) -> int:
        return math.ceil(round(self.alpha * self.n, 9))


def _satisfied_by(clause: Iterable[int], model: Mapping[int, bool]) -> bool:
    return any(model[abs(l)] == (l > 0) for l in clause)


def generate(params: GenParams, seed=None) -> ArgumentMap:
    """Grow a satisfiable argument map one argument at a time.

    Conclusions come from statements already in the map, weighted by
    psi ** level; premises come from all n statements, weighted by
    gamma ** (number of arguments using the statement). Each literal is
    negated with probability 0.5. Candidates that would make the clause set
    unsatisfiable are dropped; ``max_attempts`` consecutive drops raise
    GenerationExhausted.
    """
    rng = random.Random(seed)
    n = params.n
    sizes = sorted(params.d)
    size_weights = [params.d[u] for u in sizes]
    offset = 0 if params.premise_convention == "prose" else 1

    keys = list(range(1, params.k + 1))
    vertices = list(keys)
    in_map = set(keys)
    tracker = LevelTracker(keys)
    usage = [0] * (n + 1)
    statements = list(range(1, n + 1))

    arguments: list[Argument] = []
    clauses: list[tuple[int, ...]] = []
    model = {v: False for v in range(1, n + 1)}
    rejected = 0

    while len(arguments) < params.num_arguments:
        t = rng.choices(sizes, size_weights)[0] - offset
        weights = [params.psi ** tracker.level[v] for v in vertices]
        c_var = rng.choices(vertices, weights)[0]
        conclusion = Literal(c_var, not rng.random() > 0.5)

        cum_weights = list(accumulate(params.gamma ** usage[v] for v in statements))
        chosen: list[int] = []
        while len(chosen) < t:
            v = rng.choices(statements, cum_weights=cum_weights)[0]
            if v != c_var and v not in chosen:
                chosen.append(v)
        premises = tuple(Literal(v, not rng.random() > 0.5) for v in chosen)

        arg = Argument(premises, conclusion)
        clause = arg.clause().to_ints()
        if not _satisfied_by(clause, model):
            found = find_model(n, clauses + [clause])
            if found is None:
                rejected += 1
                if rejected >= params.max_attempts:
                    raise GenerationExhausted(
                        f"{rejected} consecutive candidates rejected after "
                        f"{len(arguments)} arguments"
                    )
                continue
            model = found
        rejected = 0
        arguments.append(arg)
        clauses.append(clause)
        tracker.add(arg)
        for v in arg.variables():
            usage[v] += 1
        for v in chosen:
            if v not in in_map:
                in_map.add(v)
                vertices.append(v)

    return ArgumentMap(n, tuple(arguments), frozenset(keys))


def fit_premise_distribution(maps: ArgumentMap | Iterable[ArgumentMap]) -> dict[int, Fraction]:
    """Empirical fraction of arguments per premise count."""
    if isinstance(maps, ArgumentMap):
        maps = [maps]
    tally = Counter(len(a.premises) for m in maps for a in m.arguments)
    total = sum(tally.values())
    if total == 0:
        raise ValueError("cannot fit a premise distribution without arguments")
    return {size: Fraction(count, total) for size, count in sorted(tally.items())}


@dataclass(frozen=True)
class AmGraph:
    """Bipartite view: statement vertices, one dummy vertex per argument.

    Edges are (source, target, color) with argument vertices named ``a<i>``.
    A positive premise supports its argument (green), a negated premise
    attacks it (red); the argument supports (green) or attacks (red) its
    conclusion's statement.
    """

    statements: tuple[int, ...]
    argument_vertices: tuple[str, ...]
    edges: tuple[tuple[int | str, int | str, str], ...]

    @classmethod
    def from_map(cls, amap: ArgumentMap) -> AmGraph:
        edges = []
        names = []
        for i, arg in enumerate(amap.arguments):
            name = f"a{i}"
            names.append(name)
            for p in arg.premises:
                edges.append((p.variable, name, "green" if p.polarity else "red"))
            c = arg.conclusion
            edges.append((name, c.variable, "green" if c.polarity else "red"))
        return cls(tuple(sorted(amap.statements)), tuple(names), tuple(edges))

    def in_degree(self, vertex) -> int:
        return sum(1 for _, dst, _ in self.edges if dst == vertex)

    def out_degree(self, vertex) -> int:
        return sum(1 for src, _, _ in self.edges if src == vertex)

    def edge_list(self) -> str:
        return "".join(f"{s} {d} {c}\n" for s, d, c in self.edges)


def map_to_dict(amap: ArgumentMap) -> dict:
    data = {
        "n": amap.num_statements,
        "key_statements": sorted(amap.key_statements),
        "arguments": [
            {"premises": [int(p) for p in a.premises], "conclusion": int(a.conclusion)}
            for a in amap.arguments
        ],
    }
    if amap.statement_labels:
        data["labels"] = {str(k): v for k, v in sorted(amap.statement_labels.items())}
    return data


def save_json(amap: ArgumentMap) -> str:
    return json.dumps(map_to_dict(amap), indent=2) + "\n"


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MapSchemaError(f"{what} must be an integer, got {value!r}")
    return value


def map_from_dict(data) -> ArgumentMap:
    if not isinstance(data, dict):
        raise MapSchemaError("map JSON must be an object")
    for key in ("n", "key_statements", "arguments"):
        if key not in data:
            raise MapSchemaError(f"missing field {key!r}")
    n = _require_int(data["n"], "n")
    if not isinstance(data["key_statements"], list):
        raise MapSchemaError("key_statements must be a list")
    keys = [_require_int(k, "key statement") for k in data["key_statements"]]
    if not isinstance(data["arguments"], list):
        raise MapSchemaError("arguments must be a list")
    arguments = []
    for i, entry in enumerate(data["arguments"]):
        if not isinstance(entry, dict) or "premises" not in entry or "conclusion" not in entry:
            raise MapSchemaError(f"argument {i} needs 'premises' and 'conclusion'")
        if not isinstance(entry["premises"], list):
            raise MapSchemaError(f"argument {i}: premises must be a list")
        premises = [_require_int(p, "premise") for p in entry["premises"]]
        conclusion = _require_int(entry["conclusion"], "conclusion")
        try:
            arguments.append(Argument.of(premises, conclusion))
        except ValueError as exc:
            raise MapSchemaError(f"argument {i}: {exc}") from None
    labels = data.get("labels") or {}
    if not isinstance(labels, dict):
        raise MapSchemaError("labels must be an object")
    try:
        labels = {int(k): str(v) for k, v in labels.items()}
        amap = ArgumentMap(n, tuple(arguments), frozenset(keys), labels)
    except ValueError as exc:
        raise MapSchemaError(str(exc)) from None
    if not amap.is_satisfiable():
        raise UnsatisfiableMapError("argument map has no complete consistent position")
    return amap


def load_json(text: str | bytes) -> ArgumentMap:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapSchemaError(f"invalid JSON: {exc}") from None
    return map_from_dict(data)
