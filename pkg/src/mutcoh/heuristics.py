"""Approximate one-sided coherence with a three-Gaussian mixture.

Confirmation values over the subsets of A are modelled as a mixture with
components fixed at -1 and +1 and one free middle component. Weights for
the outer components come from subsets whose confirmation is known without
counting (those hitting a refuted literal, those inside the entailed
literals); the middle mean is either 0, a sample mean, or fitted by EM.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .coherence import CoherenceEngine, InconsistentCondition, classify, subposition
from .logic import Position

SIMPLER = "simpler"
FINER = "finer"
WEIGHT_MODES = (SIMPLER, FINER)

METHODS = (
    "direct",
    "direct-slope",
    "average",
    "average-mu2",
    "fit-mu2",
    "filtered-average-mu2",
    "filtered-fit-mu2",
)
SAMPLE_METHODS = METHODS[2:]

DEFAULT_SIGMA = (0.1, 0.1, 0.1)


class EmptyPool(ValueError):
    """No subset is admissible for filtered sampling."""


@dataclass(frozen=True)
class OverlapSets:
    neg: frozenset[int]
    com: frozenset[int]
    cntr: frozenset[int] | None = None
    impl: frozenset[int] | None = None

    def __post_init__(self):
        if self.neg & self.com:
            raise ValueError("neg and com must be disjoint")
        if self.cntr is not None and not self.neg <= self.cntr:
            raise ValueError("neg must be contained in cntr")
        if self.impl is not None and not self.com <= self.impl:
            raise ValueError("com must be contained in impl")

    @property
    def has_fine(self) -> bool:
        return self.cntr is not None and self.impl is not None

    def bounds(self, mode: str = SIMPLER) -> tuple[frozenset[int], frozenset[int]]:
        """(refuted variables, entailed variables) for the given weight mode."""
        if mode == SIMPLER:
            return self.neg, self.com
        if mode == FINER:
            if not self.has_fine:
                raise ValueError("finer weights need cntr and impl")
            return self.cntr, self.impl
        raise ValueError(f"unknown weight mode {mode!r}")

    @property
    def fine_equals_simple(self) -> bool:
        return self.cntr == self.neg and self.impl == self.com


def overlap_simple(a: Position, b: Position) -> OverlapSets:
    """Variables of A negated in B, and variables shared with the same value."""
    la = sorted(a.to_ints(), key=abs)
    lb = sorted(b.to_ints(), key=abs)
    neg, com = set(), set()
    i = j = 0
    while i < len(la) and j < len(lb):
        va, vb = abs(la[i]), abs(lb[j])
        if va < vb:
            i += 1
        elif vb < va:
            j += 1
        else:
            (com if la[i] == lb[j] else neg).add(va)
            i += 1
            j += 1
    return OverlapSets(frozenset(neg), frozenset(com))


def overlap_fine(source, a: Position, b: Position) -> OverlapSets:
    """Add the semantic sets: A-literals refuted (cntr) or entailed (impl) by B.

    Uses exactly len(a) + 1 conditioned counts.
    """
    engine = source if isinstance(source, CoherenceEngine) else CoherenceEngine(source)
    simple = overlap_simple(a, b)
    sigma_b = engine.counter.count(b)
    if sigma_b == 0:
        raise InconsistentCondition(b, "position B")
    cntr, impl = set(), set()
    for var in sorted(a.domain):
        joint = engine.counter.count_joint(b, a.restrict([var]))
        if joint == 0:
            cntr.add(var)
        elif joint == sigma_b:
            impl.add(var)
    return OverlapSets(simple.neg, simple.com, frozenset(cntr), frozenset(impl))


def mixture_weights(k: int, sets: OverlapSets, mode: str = SIMPLER) -> tuple[Fraction, Fraction, Fraction]:
    """Exact mixture weights (w1, w2, w3) from the lower bounds on -1 and +1 subsets."""
    if k < 1:
        raise ValueError("opinion must be non-empty")
    refuted, entailed = sets.bounds(mode)
    total = (1 << k) - 1
    w1 = Fraction((1 << k) - (1 << (k - len(refuted))), total)
    w3 = Fraction((1 << len(entailed)) - 1, total)
    w2 = 1 - w1 - w3
    if w2 < 0:
        raise AssertionError(f"negative middle weight {w2}: refuted and entailed sets overlap")
    return w1, w2, w3


@dataclass(frozen=True)
class GaussianMixture3:
    weights: tuple[float, float, float]
    means: tuple[float, float, float] = (-1.0, 0.0, 1.0)
    stddevs: tuple[float, float, float] = DEFAULT_SIGMA

    def __post_init__(self):
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1) > 1e-12:
            raise ValueError(f"invalid mixture weights {self.weights}")
        if any(s <= 0 for s in self.stddevs):
            raise ValueError("standard deviations must be positive")

    def mean(self) -> float:
        return sum(w * m for w, m in zip(self.weights, self.means))

    def log_likelihood(self, values) -> float:
        return _log_likelihood(np.asarray(values, dtype=float), self.weights, self.means, self.stddevs)


@dataclass(frozen=True)
class EMConfig:
    tolerance: float = 1e-6
    max_iters: int = 100
    sigma: tuple[float, float, float] = DEFAULT_SIGMA


@dataclass
class SampleSet:
    values: list[float]
    masks: list[int] = field(default_factory=list)
    filtered: bool = False
    pool_exhausted: bool = False


@dataclass
class EstimationReport:
    estimate: float
    method: str
    weights_used: tuple[float, float, float] | None
    mu2: float | None
    samples_used: int = 0
    counter_calls: int = 0
    em_iterations: int = 0
    converged: bool = True
    log_likelihoods: list[float] = field(default_factory=list)
    pool_exhausted: bool = False
    fallback: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _float_weights(weights) -> tuple[float, float, float]:
    return tuple(float(w) for w in weights)


def _mixture_estimate(weights, mu2: float) -> float:
    w1, w2, w3 = _float_weights(weights)
    return min(1.0, max(-1.0, -w1 + w2 * mu2 + w3))


def estimate_direct(weights, method: str = "direct") -> EstimationReport:
    return EstimationReport(
        estimate=_mixture_estimate(weights, 0.0),
        method=method,
        weights_used=_float_weights(weights),
        mu2=0.0,
    )


def estimate_direct_slope(k: int, sets: OverlapSets, mode: str = SIMPLER) -> EstimationReport:
    """Direct estimation with w3 replaced by |entailed| / k when that still fits."""
    w1, _, w3 = mixture_weights(k, sets, mode)
    _, entailed = sets.bounds(mode)
    slope = Fraction(len(entailed), k)
    if w1 + slope <= 1:
        w3 = slope
    return estimate_direct((w1, 1 - w1 - w3, w3), method="direct-slope")


def _request_size(beta: float, k: int) -> int:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return math.ceil(round(beta * k, 9))


def sample_masks(
    k: int,
    beta: float,
    refuted_mask: int = 0,
    entailed_mask: int = 0,
    filtered: bool = False,
    rng: random.Random | None = None,
) -> tuple[list[int], bool]:
    """Draw ceil(beta*k) distinct subset masks uniformly without replacement.

    Unfiltered: from all non-empty subsets. Filtered: from subsets that
    avoid the refuted bits and are not contained in the entailed bits.
    Returns (masks, pool_exhausted).
    """
    rng = rng or random.Random()
    request = _request_size(beta, k)
    full = (1 << k) - 1
    if not filtered:
        pool = full
        if request >= pool:
            return list(range(1, full + 1)), True
        seen: set[int] = set()
        out = []
        while len(out) < request:
            m = rng.randrange(1, full + 1)
            if m not in seen:
                seen.add(m)
                out.append(m)
        return out, False

    free_bits = [i for i in range(k) if not refuted_mask >> i & 1]
    n_entailed = bin(entailed_mask & ~refuted_mask & full).count("1")
    pool = (1 << len(free_bits)) - (1 << n_entailed)
    if pool <= 0:
        raise EmptyPool("no admissible subset for filtered sampling")

    def expand(bits: int) -> int:
        return sum(1 << free_bits[j] for j in range(len(free_bits)) if bits >> j & 1)

    if request >= pool:
        masks = [expand(b) for b in range(1, 1 << len(free_bits))]
        return [m for m in masks if m & ~entailed_mask], True
    seen = set()
    out = []
    while len(out) < request:
        m = expand(rng.getrandbits(len(free_bits)))
        if m & ~entailed_mask and m not in seen:
            seen.add(m)
            out.append(m)
    return out, False


def _bits_of(a: Position, variables) -> int:
    order = sorted(a.domain)
    chosen = set(variables)
    return sum(1 << i for i, v in enumerate(order) if v in chosen)


def sample_subsets(
    a: Position,
    beta: float,
    sets: OverlapSets,
    filtered: bool = False,
    seed=None,
    mode: str = SIMPLER,
) -> list[Position]:
    refuted, entailed = sets.bounds(mode)
    masks, _ = sample_masks(
        len(a), beta, _bits_of(a, refuted), _bits_of(a, entailed), filtered, random.Random(seed)
    )
    order = sorted(a.domain)
    return [subposition(a, m, order) for m in masks]


def estimate_average(samples: SampleSet) -> EstimationReport:
    if not samples.values:
        raise ValueError("empty sample set")
    mean = float(np.mean(samples.values))
    return EstimationReport(
        estimate=mean,
        method="average",
        weights_used=None,
        mu2=mean,
        samples_used=len(samples.values),
        pool_exhausted=samples.pool_exhausted,
    )


def estimate_average_mu2(weights, samples: SampleSet) -> EstimationReport:
    if not samples.values:
        raise ValueError("empty sample set")
    mu2 = float(np.mean(samples.values))
    return EstimationReport(
        estimate=_mixture_estimate(weights, mu2),
        method="filtered-average-mu2" if samples.filtered else "average-mu2",
        weights_used=_float_weights(weights),
        mu2=mu2,
        samples_used=len(samples.values),
        pool_exhausted=samples.pool_exhausted,
    )


def _log_terms(values: np.ndarray, weights, means, sigma) -> tuple[np.ndarray, list[int]]:
    active = [j for j in range(3) if weights[j] > 0]
    cols = []
    for j in active:
        z = (values - means[j]) / sigma[j]
        cols.append(
            math.log(weights[j]) - 0.5 * z * z - math.log(sigma[j]) - 0.5 * math.log(2 * math.pi)
        )
    return np.stack(cols, axis=1), active


def _log_likelihood(values: np.ndarray, weights, means, sigma) -> float:
    terms, _ = _log_terms(values, weights, means, sigma)
    return float(np.sum(np.logaddexp.reduce(terms, axis=1)))


def fit_mu2(values, weights, config: EMConfig = EMConfig()):
    """EM over the middle mean only; weights, outer means and all sigmas stay fixed.

    Returns (mu2, iterations, converged, log_likelihoods), where the
    likelihood list starts with the value at the initial mu2 = mean(values).
    """
    v = np.asarray(values, dtype=float)
    w = _float_weights(weights)
    mu2 = float(np.mean(v))
    means = [-1.0, mu2, 1.0]
    history = [_log_likelihood(v, w, means, config.sigma)]
    for it in range(1, config.max_iters + 1):
        terms, active = _log_terms(v, w, means, config.sigma)
        resp = np.exp(terms[:, active.index(1)] - np.logaddexp.reduce(terms, axis=1))
        mass = float(resp.sum())
        new = float(resp @ v / mass) if mass > 0 else mu2
        means[1] = new
        history.append(_log_likelihood(v, w, means, config.sigma))
        delta = abs(new - mu2)
        mu2 = new
        if delta < config.tolerance:
            return mu2, it, True, history
    return mu2, config.max_iters, False, history


def estimate_fit_mu2(weights, samples: SampleSet, config: EMConfig = EMConfig()) -> EstimationReport:
    method = "filtered-fit-mu2" if samples.filtered else "fit-mu2"
    if not samples.values:
        raise ValueError("empty sample set")
    if weights[1] == 0:
        return EstimationReport(
            estimate=_mixture_estimate(weights, 0.0),
            method=method,
            weights_used=_float_weights(weights),
            mu2=None,
            samples_used=len(samples.values),
            pool_exhausted=samples.pool_exhausted,
        )
    mu2, iterations, converged, history = fit_mu2(samples.values, weights, config)
    mu2 = min(1.0, max(-1.0, mu2))
    return EstimationReport(
        estimate=_mixture_estimate(weights, mu2),
        method=method,
        weights_used=_float_weights(weights),
        mu2=mu2,
        samples_used=len(samples.values),
        em_iterations=iterations,
        converged=converged,
        log_likelihoods=history,
        pool_exhausted=samples.pool_exhausted,
    )


def approximate_one_coh(
    source,
    a: Position,
    b: Position,
    method: str = "filtered-average-mu2",
    beta: float = 1.0,
    weight_mode: str = SIMPLER,
    seed=None,
    em_config: EMConfig = EMConfig(),
    *,
    sets: OverlapSets | None = None,
    confirm: Callable[[int], float] | None = None,
) -> EstimationReport:
    """Estimate OneCoh(a, b) with one of METHODS.

    `confirm`, if given, maps a subset mask of `a` (bit i = i-th smallest
    variable) to its exact confirmation value, e.g. from a precomputed
    table; counter_calls then reports what live counting would have cost.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    k = len(a)
    if k < 1:
        raise ValueError("opinion A must be non-empty")
    engine = None

    def get_engine() -> CoherenceEngine:
        nonlocal engine
        if engine is None:
            engine = source if isinstance(source, CoherenceEngine) else CoherenceEngine(source)
        return engine

    calls = 0
    if sets is None:
        sets = overlap_simple(a, b)
    if weight_mode == FINER and not sets.has_fine:
        sets = overlap_fine(get_engine(), a, b)
        calls += k + 1
    weights = mixture_weights(k, sets, weight_mode)

    if weights[2] == 1:
        report = estimate_direct(weights, method=method)
        report.estimate = 1.0
    elif method == "direct":
        report = estimate_direct(weights)
    elif method == "direct-slope":
        report = estimate_direct_slope(k, sets, weight_mode)
    else:
        filtered = method.startswith("filtered-")
        refuted, entailed = sets.bounds(weight_mode)
        try:
            masks, exhausted = sample_masks(
                k, beta, _bits_of(a, refuted), _bits_of(a, entailed), filtered, random.Random(seed)
            )
        except EmptyPool:
            report = estimate_direct(weights, method=method)
            report.fallback = "direct"
            report.counter_calls = calls
            return report
        if confirm is not None:
            values = [float(confirm(m)) for m in masks]
        else:
            eng = get_engine()
            sigma_top = eng.counter.count()
            sigma_b = eng.counter.count(b)
            if sigma_b == 0:
                raise InconsistentCondition(b, "position B")
            order = sorted(a.domain)
            values = []
            for m in masks:
                x = subposition(a, m, order)
                sigma_x = eng.counter.count(x)
                sigma_bx = eng.counter.count_joint(b, x)
                values.append(classify(sigma_top, sigma_b, sigma_x, sigma_bx).value)
        calls += 2 * len(masks) + 2
        samples = SampleSet(values, masks, filtered, exhausted)
        if method == "average":
            report = estimate_average(samples)
        elif method.endswith("average-mu2"):
            report = estimate_average_mu2(weights, samples)
        else:
            report = estimate_fit_mu2(weights, samples, em_config)
        report.method = method
    report.counter_calls = calls
    return report
