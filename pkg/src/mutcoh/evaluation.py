"""Accuracy experiments: corpus building, ground truth, per-method errors,
MSE tables, scatter data and robustness summaries.

Corpus directory layout::

    spec.json            corpus parameters
    maps/<id>.json       argument maps
    pairs/<id>.json      opinion pairs drawn on each map
    truth/<id>.csv       exact one-sided coherence and overlap sets per pair
    truth/<id>.conf.csv  exact confirmation value of every subset of A
    records/<method>.csv per-(pair, beta) estimates and squared errors
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .argmap import REFERENCE_D, ArgumentMap, GenParams, generate, load_json, save_json, to_cnf
from .coherence import CoherenceEngine, OpinionTooLarge, mask_of
from .counter import CounterTimeout, ModelCounter
from .heuristics import (
    METHODS,
    SIMPLER,
    EMConfig,
    OverlapSets,
    approximate_one_coh,
    overlap_fine,
)
from .logic import Position

log = logging.getLogger(__name__)

BETAS = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
EVAL_METHODS = ("exact",) + METHODS
# Column order of the main comparison table, then the extensions.
TABLE_ORDER = (
    "fit-mu2",
    "filtered-fit-mu2",
    "average-mu2",
    "filtered-average-mu2",
    "direct",
    "direct-slope",
    "average",
    "exact",
)
GROUP_KEYS = ("opinion_size", "n", "alpha")


@dataclass
class CorpusSpec:
    n_values: tuple[int, ...] = (30, 50)
    alpha_values: tuple[float, ...] = (0.3, 0.5)
    k_values: tuple[int, ...] = (3, 5)
    psi: float = 0.5
    gamma: float = 0.5
    d: dict[int, float] = field(default_factory=lambda: dict(REFERENCE_D))
    opinion_sizes: tuple[int, ...] = (5, 7)
    pairs_per_config: int = 5
    maps_per_config: int = 3
    seed: int = 0
    time_budget: float = 60.0
    max_attempts: int = 1000

    def __post_init__(self):
        self.n_values = tuple(self.n_values)
        self.alpha_values = tuple(self.alpha_values)
        self.k_values = tuple(self.k_values)
        self.opinion_sizes = tuple(self.opinion_sizes)
        self.d = {int(k): float(v) for k, v in self.d.items()}
        numbers = self.n_values + self.alpha_values + self.k_values + self.opinion_sizes
        if not all(numbers) or min(numbers) <= 0:
            raise ValueError("corpus parameters must be positive")
        if max(self.opinion_sizes) > min(self.n_values):
            raise ValueError("opinion sizes cannot exceed the smallest map")
        if self.pairs_per_config < 1 or self.maps_per_config < 1:
            raise ValueError("need at least one map and one pair per configuration")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["d"] = {str(k): v for k, v in sorted(self.d.items())}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> CorpusSpec:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class PairTruth:
    map_id: str
    pair_id: str
    opinion_size: int
    a: Position
    b: Position
    exact: Fraction | None = None
    sets: OverlapSets | None = None
    table: dict[int, Fraction] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.map_id}/{self.pair_id}"


@dataclass
class MapEntry:
    map_id: str
    amap: ArgumentMap
    n: int
    k: int
    alpha: float
    pairs: list[PairTruth]


@dataclass
class Corpus:
    root: Path
    spec: CorpusSpec
    maps: list[MapEntry]

    def pairs(self) -> Iterable[tuple[MapEntry, PairTruth]]:
        for entry in self.maps:
            for pair in entry.pairs:
                if pair.exact is not None:
                    yield entry, pair

    @property
    def num_pairs(self) -> int:
        return sum(1 for _ in self.pairs())


@dataclass
class EvalRecord:
    map_id: str
    pair_id: str
    n: int
    alpha: float
    opinion_size: int
    neg: int
    com: int
    method: str
    beta: float
    exact: float
    estimate: float
    squared_error: float
    counter_calls: int = 0
    samples_used: int = 0
    wall_time: float = 0.0
    error: str = ""

    @property
    def k_a(self) -> int:
        return self.opinion_size


def map_id_for(n: int, alpha: float, k: int, rep: int) -> str:
    return f"n{n}_a{alpha:g}_k{k}_r{rep}"


def draw_opinion_pair(amap: ArgumentMap, size: int, rng: random.Random, counter: ModelCounter | None = None):
    """Draw two consistent opinions of `size` literals each.

    B shares a uniformly drawn number of A's variables, of which a uniformly
    drawn number are negated; the rest of B is fresh. This spreads pairs over
    the whole range of overlaps.
    """
    counter = counter or ModelCounter(to_cnf(amap))
    variables = list(range(1, amap.num_statements + 1))

    def consistent(pos: dict[int, bool]) -> bool:
        units = [(v if val else -v,) for v, val in pos.items()]
        return counter.find_model(units) is not None

    for _ in range(10_000):
        a_vars = rng.sample(variables, size)
        a = {v: rng.random() < 0.5 for v in a_vars}
        if not consistent(a):
            continue
        overlap = rng.randint(0, size)
        negated = rng.randint(0, overlap)
        shared = rng.sample(a_vars, overlap)
        flip = set(rng.sample(shared, negated))
        b = {v: a[v] != (v in flip) for v in shared}
        fresh = [v for v in variables if v not in a]
        for v in rng.sample(fresh, size - overlap):
            b[v] = rng.random() < 0.5
        if consistent(b):
            return Position(a), Position(b)
    raise RuntimeError("could not draw consistent opinions")


def _seeded(spec_seed, *parts) -> random.Random:
    return random.Random(":".join(str(p) for p in (spec_seed,) + parts))


def _ground_truth(map_json: str, pairs: list[dict], time_budget: float):
    """Worker: exact tables for all pairs of one map. Returns (rows, skipped)."""
    amap = load_json(map_json)
    engine = CoherenceEngine(amap, timeout=time_budget)
    rows, skipped = [], []
    for p in pairs:
        a = Position.from_literals(p["a"])
        b = Position.from_literals(p["b"])
        start = time.monotonic()
        try:
            table = engine.confirmation_table(a, b)
            sets = overlap_fine(engine, a, b)
        except (CounterTimeout, OpinionTooLarge) as exc:
            skipped.append((p["pair_id"], str(exc)))
            continue
        elapsed = time.monotonic() - start
        if elapsed > time_budget:
            skipped.append((p["pair_id"], f"took {elapsed:.1f}s"))
            continue
        rows.append((p["pair_id"], {m: c.exact for m, c in table.items()}, sets))
    return rows, skipped


def _fmt_vars(vs) -> str:
    return " ".join(str(v) for v in sorted(vs))


def _parse_vars(text: str) -> frozenset[int]:
    return frozenset(int(t) for t in text.split())


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def build_corpus(spec: CorpusSpec, root: str | Path, jobs: int = 1) -> Corpus:
    """Generate maps and opinion pairs, compute ground truth, write to `root`."""
    root = Path(root)
    for sub in ("maps", "pairs", "truth", "records"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")

    jobs_args = []
    for n in spec.n_values:
        for alpha in spec.alpha_values:
            for k in spec.k_values:
                params = GenParams(
                    n, k, alpha, spec.psi, spec.gamma, spec.d, spec.max_attempts
                )
                for rep in range(spec.maps_per_config):
                    map_id = map_id_for(n, alpha, k, rep)
                    amap = generate(params, seed=f"{spec.seed}:map:{map_id}")
                    map_json = save_json(amap)
                    (root / "maps" / f"{map_id}.json").write_text(map_json)
                    rng = _seeded(spec.seed, "pairs", map_id)
                    counter = ModelCounter(to_cnf(amap))
                    pairs = []
                    for size in spec.opinion_sizes:
                        for i in range(spec.pairs_per_config):
                            a, b = draw_opinion_pair(amap, size, rng, counter)
                            pairs.append(
                                {"pair_id": f"s{size}_p{i}", "size": size,
                                 "a": a.to_ints(), "b": b.to_ints()}
                            )
                    meta = {"map_id": map_id, "n": n, "k": k, "alpha": alpha,
                            "psi": spec.psi, "gamma": spec.gamma, "pairs": pairs}
                    (root / "pairs" / f"{map_id}.json").write_text(json.dumps(meta, indent=1) + "\n")
                    jobs_args.append((map_id, map_json, pairs))

    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(_ground_truth, mj, pr, spec.time_budget) for _, mj, pr in jobs_args]
            results = [f.result() for f in futures]
    else:
        results = [_ground_truth(mj, pr, spec.time_budget) for _, mj, pr in jobs_args]

    skipped_rows = []
    for (map_id, _, _), (rows, skipped) in zip(jobs_args, results):
        summary, conf = [], []
        for pair_id, table, sets in rows:
            exact = sum(table.values(), Fraction(0)) / len(table)
            summary.append((
                pair_id, exact.numerator, exact.denominator, repr(float(exact)),
                _fmt_vars(sets.neg), _fmt_vars(sets.com),
                _fmt_vars(sets.cntr), _fmt_vars(sets.impl),
            ))
            conf.extend((pair_id, m, c.numerator, c.denominator) for m, c in sorted(table.items()))
        _write_csv(root / "truth" / f"{map_id}.csv",
                   ("pair_id", "exact_num", "exact_den", "exact", "neg", "com", "cntr", "impl"),
                   summary)
        _write_csv(root / "truth" / f"{map_id}.conf.csv",
                   ("pair_id", "mask", "num", "den"), conf)
        for pair_id, reason in skipped:
            log.warning("excluded %s/%s: %s", map_id, pair_id, reason)
            skipped_rows.append((map_id, pair_id, reason))
    if skipped_rows:
        _write_csv(root / "truth" / "skipped.csv", ("map_id", "pair_id", "reason"), skipped_rows)
    return load_corpus(root)


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    spec = CorpusSpec.from_dict(json.loads((root / "spec.json").read_text()))
    entries = []
    for pairs_path in sorted((root / "pairs").glob("*.json")):
        meta = json.loads(pairs_path.read_text())
        map_id = meta["map_id"]
        amap = load_json((root / "maps" / f"{map_id}.json").read_text())
        truth_path = root / "truth" / f"{map_id}.csv"
        truth = {}
        tables: dict[str, dict[int, Fraction]] = {}
        if truth_path.exists():
            truth = {r["pair_id"]: r for r in _read_csv(truth_path)}
            for r in _read_csv(root / "truth" / f"{map_id}.conf.csv"):
                tables.setdefault(r["pair_id"], {})[int(r["mask"])] = Fraction(int(r["num"]), int(r["den"]))
        pairs = []
        for p in meta["pairs"]:
            pair = PairTruth(map_id, p["pair_id"], p["size"],
                             Position.from_literals(p["a"]), Position.from_literals(p["b"]))
            row = truth.get(p["pair_id"])
            if row is not None:
                pair.exact = Fraction(int(row["exact_num"]), int(row["exact_den"]))
                pair.sets = OverlapSets(_parse_vars(row["neg"]), _parse_vars(row["com"]),
                                        _parse_vars(row["cntr"]), _parse_vars(row["impl"]))
                pair.table = tables[p["pair_id"]]
            pairs.append(pair)
        entries.append(MapEntry(map_id, amap, meta["n"], meta["k"], meta["alpha"], pairs))
    return Corpus(root, spec, entries)


def _records_for_pair(entry: MapEntry, pair: PairTruth, methods, betas, weight_mode, em_config, seed):
    out = []
    exact = float(pair.exact)
    for method in methods:
        for beta in betas:
            start = time.perf_counter()
            error = ""
            calls = samples = 0
            try:
                if method == "exact":
                    estimate = exact
                    calls = 2 * len(pair.table) + 2
                    samples = len(pair.table)
                else:
                    report = approximate_one_coh(
                        entry.amap, pair.a, pair.b, method, beta, weight_mode,
                        seed=f"{seed}:{pair.key}:{method}:{beta:g}", em_config=em_config,
                        sets=pair.sets, confirm=pair.table.__getitem__,
                    )
                    estimate = report.estimate
                    calls = report.counter_calls
                    samples = report.samples_used
            except Exception as exc:  # a failed record must not stop the run
                estimate = math.nan
                error = f"{type(exc).__name__}: {exc}"
            out.append(EvalRecord(
                entry.map_id, pair.pair_id, entry.n, entry.alpha, pair.opinion_size,
                len(pair.sets.neg), len(pair.sets.com), method, float(beta),
                exact, estimate, (estimate - exact) ** 2, calls, samples,
                time.perf_counter() - start, error,
            ))
    return out


def run_methods(
    corpus: Corpus,
    methods: Sequence[str] = EVAL_METHODS,
    betas: Sequence[float] = BETAS,
    weight_mode: str = SIMPLER,
    em_config: EMConfig = EMConfig(),
    jobs: int = 1,
) -> list[EvalRecord]:
    """Estimate every (pair, method, beta); sampling seeds derive from the corpus seed."""
    for method in methods:
        if method not in EVAL_METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(EVAL_METHODS)}")
    tasks = list(corpus.pairs())
    args = (tuple(methods), tuple(betas), weight_mode, em_config, corpus.spec.seed)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = pool.map(_records_for_pair, *zip(*[(e, p) + args for e, p in tasks]))
            results = list(chunks)
    else:
        results = [_records_for_pair(e, p, *args) for e, p in tasks]
    records = [r for chunk in results for r in chunk]
    records.sort(key=lambda r: (r.method, r.beta, r.map_id, r.pair_id))
    return records


RECORD_FIELDS = [f.name for f in fields(EvalRecord)]


def write_records(records: Sequence[EvalRecord], root: str | Path) -> None:
    """One CSV per method under records/; overwrites only those methods."""
    folder = Path(root) / "records"
    folder.mkdir(parents=True, exist_ok=True)
    by_method: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    for method, rows in by_method.items():
        _write_csv(folder / f"{method}.csv", RECORD_FIELDS,
                   ([repr(v) if isinstance(v, float) else v for v in astuple_record(r)] for r in rows))


def astuple_record(r: EvalRecord) -> list:
    return [getattr(r, name) for name in RECORD_FIELDS]


def load_records(root: str | Path, methods: Sequence[str] | None = None) -> list[EvalRecord]:
    """Read records back; the stored squared error is checked against its inputs."""
    folder = Path(root) / "records"
    out = []
    for path in sorted(folder.glob("*.csv")):
        if methods is not None and path.stem not in methods:
            continue
        for row in _read_csv(path):
            rec = EvalRecord(
                row["map_id"], row["pair_id"], int(row["n"]), float(row["alpha"]),
                int(row["opinion_size"]), int(row["neg"]), int(row["com"]), row["method"],
                float(row["beta"]), float(row["exact"]), float(row["estimate"]),
                float(row["squared_error"]), int(row["counter_calls"]),
                int(row["samples_used"]), float(row["wall_time"]), row["error"],
            )
            expected = (rec.estimate - rec.exact) ** 2
            if not rec.error and expected != rec.squared_error:
                raise ValueError(f"squared error checksum mismatch in {path.name}: {row}")
            out.append(rec)
    return out


def mse_table(
    records: Sequence[EvalRecord],
    methods: Sequence[str] | None = None,
    betas: Sequence[float] | None = None,
) -> dict[tuple[float, str], float | None]:
    """Mean squared error per (beta, method); None marks an empty cell."""
    methods = methods or sorted({r.method for r in records}, key=_table_rank)
    betas = betas or sorted({r.beta for r in records})
    cells: dict[tuple[float, str], list[float]] = {(b, m): [] for b in betas for m in methods}
    for r in records:
        cell = cells.get((r.beta, r.method))
        if cell is not None and not r.error:
            cell.append(r.squared_error)
    return {key: (float(np.mean(v)) if v else None) for key, v in cells.items()}


def _table_rank(method: str) -> int:
    return TABLE_ORDER.index(method) if method in TABLE_ORDER else len(TABLE_ORDER)


def mse_csv(table: dict[tuple[float, str], float | None]) -> str:
    betas = sorted({b for b, _ in table})
    methods = sorted({m for _, m in table}, key=_table_rank)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["beta"] + methods)
    for b in betas:
        row = [f"{b:g}"]
        for m in methods:
            v = table[(b, m)]
            row.append("" if v is None else f"{v:.6g}")
        writer.writerow(row)
    return buf.getvalue()


def scatter_data(records: Sequence[EvalRecord], method: str, beta: float | None = None, color: str = "neg") -> list[tuple]:
    """(exact, estimate, color) rows; color is |neg| or beta."""
    if color not in ("neg", "beta"):
        raise ValueError("color must be 'neg' or 'beta'")
    rows = []
    for r in records:
        if r.method != method or r.error or (beta is not None and r.beta != beta):
            continue
        rows.append((r.exact, r.estimate, r.neg if color == "neg" else r.beta))
    return rows


def scatter_csv(rows: Sequence[tuple], color: str = "neg") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["exact", "estimate", color])
    writer.writerows((repr(e), repr(s), c) for e, s, c in rows)
    return buf.getvalue()


def robustness_groups(
    records: Sequence[EvalRecord],
    group_key: str,
    beta: float,
    method: str = "filtered-average-mu2",
) -> list[dict]:
    """Squared-error distribution summaries grouped by opinion size, n or alpha."""
    if group_key not in GROUP_KEYS:
        raise ValueError(f"unknown group key {group_key!r}; choose from {', '.join(GROUP_KEYS)}")
    groups: dict = {}
    for r in records:
        if r.method == method and r.beta == beta and not r.error:
            groups.setdefault(getattr(r, group_key), []).append(r.squared_error)
    out = []
    for value in sorted(groups):
        errs = np.asarray(groups[value])
        q = np.quantile(errs, [0, 0.25, 0.5, 0.75, 1])
        out.append({
            group_key: value, "beta": beta, "count": len(errs),
            "min": q[0], "q25": q[1], "median": q[2], "q75": q[3], "max": q[4],
            "mean": float(errs.mean()),
        })
    return out


def robustness_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def paired_errors(records: Sequence[EvalRecord], method_a: str, method_b: str, beta: float) -> np.ndarray:
    """Squared error of method_a minus that of method_b, matched by pair."""
    a = {(r.map_id, r.pair_id): r.squared_error for r in records
         if r.method == method_a and r.beta == beta and not r.error}
    b = {(r.map_id, r.pair_id): r.squared_error for r in records
         if r.method == method_b and r.beta == beta and not r.error}
    keys = sorted(a.keys() & b.keys())
    return np.array([a[k] - b[k] for k in keys])


def bootstrap_mean_ci(diffs: np.ndarray, n_boot: int = 2000, level: float = 0.95, seed: int = 0):
    """(mean, lower, upper) percentile bootstrap interval of the mean."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(diffs), size=(n_boot, len(diffs)))
    means = diffs[idx].mean(axis=1)
    tail = (1 - level) / 2
    lo, hi = np.quantile(means, [tail, 1 - tail])
    return float(diffs.mean()), float(lo), float(hi)


def write_reports(records: Sequence[EvalRecord], out_dir: str | Path, betas: Sequence[float] = BETAS) -> list[Path]:
    """mse.csv, scatter_<method>.csv and robustness_<key>.csv under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    methods = sorted({r.method for r in records}, key=_table_rank)
    path = out_dir / "mse.csv"
    path.write_text(mse_csv(mse_table(records, methods, list(betas))))
    written.append(path)
    for m in methods:
        color = "beta" if m in ("average", "average-mu2", "fit-mu2",
                                "filtered-average-mu2", "filtered-fit-mu2") else "neg"
        beta = None if color == "beta" else betas[0]
        path = out_dir / f"scatter_{m}.csv"
        path.write_text(scatter_csv(scatter_data(records, m, beta, color), color))
        written.append(path)
    if "filtered-average-mu2" in methods:
        for key in GROUP_KEYS:
            rows = [row for b in betas for row in robustness_groups(records, key, b)]
            path = out_dir / f"robustness_{key}.csv"
            path.write_text(robustness_csv(rows))
            written.append(path)
    return written
