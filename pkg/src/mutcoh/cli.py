"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Reports go to
stdout as JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import argmap, evaluation, heuristics
from .coherence import DEFAULT_CAP, CoherenceEngine, InconsistentCondition, OpinionTooLarge, exact_cost
from .counter import ENV_BACKEND, CounterBackend, CounterError, ModelCounter
from .logic import DimacsError, Position, PositionConflict, parse_dimacs


def _int_list(ctx, param, value):
    if value is None:
        return None
    try:
        return [int(t) for t in value.replace(" ", "").split(",") if t]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None


def _float_list(ctx, param, value):
    if value is None:
        return None
    try:
        return [float(t) for t in value.split(",") if t.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


def _position(ctx, param, value):
    ints = _int_list(ctx, param, value)
    if ints is None:
        return None
    try:
        return Position.from_literals(ints)
    except (PositionConflict, ValueError) as exc:
        raise click.BadParameter(str(exc)) from None


def _distribution(ctx, param, value):
    if value is None:
        return None
    try:
        pairs = [item.split(":") for item in value.split(",") if item.strip()]
        return {int(k): float(p) for k, p in pairs}
    except ValueError:
        raise click.BadParameter("expected COUNT:PROB pairs, e.g. 2:0.19,3:0.23") from None


def _methods(ctx, param, value):
    if value is None:
        return None
    names = [m.strip() for m in value.split(",") if m.strip()]
    for name in names:
        if name not in evaluation.EVAL_METHODS:
            raise click.BadParameter(
                f"unknown method {name!r}; valid: {', '.join(evaluation.EVAL_METHODS)}"
            )
    return names


def _emit(data) -> None:
    click.echo(json.dumps(data, indent=2))


def _load_map(path: str) -> argmap.ArgumentMap:
    try:
        return argmap.load_json(Path(path).read_text())
    except (argmap.MapSchemaError, argmap.UnsatisfiableMapError) as exc:
        raise click.ClickException(f"{path}: {exc}") from None


def _engine(ctx, amap) -> CoherenceEngine:
    return CoherenceEngine(amap, timeout=ctx.obj["timeout"], backend=ctx.obj["backend"])


@click.group()
@click.option("--counter", "counter_cmd", envvar=ENV_BACKEND, default=None,
              help="External counter command template with an {input} placeholder "
                   f"(default: internal counter; env {ENV_BACKEND}).")
@click.option("--timeout", type=float, default=None, help="Per-count timeout in seconds.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, counter_cmd, timeout, verbose):
    """Exact and approximate coherence between opinions over argument maps."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        backend = CounterBackend("external", counter_cmd) if counter_cmd else CounterBackend()
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--counter") from None
    ctx.obj = {"backend": backend, "timeout": timeout}


@main.command()
@click.option("--n", type=int, required=True, help="Number of statements.")
@click.option("--k", type=int, required=True, help="Number of key statements.")
@click.option("--alpha", type=float, required=True, help="Arguments per statement.")
@click.option("--psi", type=float, default=0.5, show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--d", "dist", callback=_distribution, default="2:0.19,3:0.23,4:0.32,5:0.26",
              show_default=True, help="Premise-count distribution.")
@click.option("--max-attempts", type=int, default=1000, show_default=True)
@click.option("--premise-count-convention", type=click.Choice(["prose", "pseudocode"]),
              default="prose", show_default=True,
              help="Whether the drawn value is the premise count or the clause width.")
@click.option("--seed", type=int, default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def generate(n, k, alpha, psi, gamma, dist, max_attempts, premise_count_convention, seed, output):
    """Generate a synthetic argument map as JSON."""
    try:
        params = argmap.GenParams(n, k, alpha, psi, gamma, dist, max_attempts, premise_count_convention)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    try:
        amap = argmap.generate(params, seed=seed)
    except argmap.GenerationExhausted as exc:
        raise click.ClickException(str(exc)) from None
    text = argmap.save_json(amap)
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--a", "a", callback=_position, required=True, help="Opinion A, e.g. 1,-4,9.")
@click.option("--b", "b", callback=_position, required=True, help="Opinion B.")
@click.option("--cap", type=int, default=DEFAULT_CAP, show_default=True,
              help="Largest opinion size computed without --force.")
@click.option("--force", is_flag=True, help="Ignore the opinion-size cap.")
@click.pass_context
def exact(ctx, map_file, a, b, cap, force):
    """Exact one-sided and mutual coherence."""
    amap = _load_map(map_file)
    engine = _engine(ctx, amap)
    cap = max(len(a), len(b)) if force else cap
    try:
        ab = engine.one_coh(a, b, cap).exact
        ba = engine.one_coh(b, a, cap).exact
    except OpinionTooLarge as exc:
        raise click.ClickException(f"{exc}; pass --force to run anyway") from None
    except (InconsistentCondition, CounterError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    mut = (ab + ba) / 2
    _emit({
        "one_coh_ab": {"exact": str(ab), "value": float(ab)},
        "one_coh_ba": {"exact": str(ba), "value": float(ba)},
        "mut_coh": {"exact": str(mut), "value": float(mut)},
        "counter_calls": engine.calls,
        "expected_calls": exact_cost(len(a)) + exact_cost(len(b)),
    })


@main.command()
@click.argument("map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--a", "a", callback=_position, required=True)
@click.option("--b", "b", callback=_position, required=True)
@click.option("--method", type=click.Choice(heuristics.METHODS), default="filtered-average-mu2",
              show_default=True)
@click.option("--beta", type=click.FloatRange(min=0, min_open=True), default=3.0, show_default=True)
@click.option("--weights", type=click.Choice(heuristics.WEIGHT_MODES), default="simpler",
              show_default=True)
@click.option("--sigma", callback=_float_list, default="0.1,0.1,0.1", show_default=True,
              help="Fixed standard deviations of the three components (EM only).")
@click.option("--em-tol", type=float, default=1e-6, show_default=True)
@click.option("--em-max-iters", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=None)
@click.pass_context
def approx(ctx, map_file, a, b, method, beta, weights, sigma, em_tol, em_max_iters, seed):
    """Approximate OneCoh(A, B) and print the estimation report."""
    if len(sigma) != 3 or min(sigma) <= 0:
        raise click.BadParameter("need three positive values", param_hint="--sigma")
    amap = _load_map(map_file)
    config = heuristics.EMConfig(em_tol, em_max_iters, tuple(sigma))
    try:
        report = heuristics.approximate_one_coh(
            _engine(ctx, amap), a, b, method, beta, weights, seed=seed, em_config=config
        )
    except (InconsistentCondition, CounterError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    _emit(report.to_dict())


@main.command(name="eval")
@click.option("--corpus", "corpus_dir", type=click.Path(file_okay=False), required=True,
              help="Corpus directory; built from the spec flags if it has no spec.json.")
@click.option("--n-values", callback=_int_list, default="30,50", show_default=True)
@click.option("--alpha-values", callback=_float_list, default="0.3,0.5", show_default=True)
@click.option("--k-values", callback=_int_list, default="3,5", show_default=True)
@click.option("--opinion-sizes", callback=_int_list, default="5,7", show_default=True)
@click.option("--pairs-per-config", type=int, default=5, show_default=True)
@click.option("--maps-per-config", type=int, default=3, show_default=True)
@click.option("--time-budget", type=float, default=60.0, show_default=True,
              help="Seconds allowed per ground-truth computation.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--methods", callback=_methods, default=",".join(evaluation.EVAL_METHODS),
              show_default=True)
@click.option("--betas", callback=_float_list, default="0.5,1,2,3,4,5", show_default=True)
@click.option("--weights", type=click.Choice(heuristics.WEIGHT_MODES), default="simpler",
              show_default=True)
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Where to write mse/scatter/robustness CSVs (default: corpus dir).")
def eval_cmd(corpus_dir, n_values, alpha_values, k_values, opinion_sizes, pairs_per_config,
             maps_per_config, time_budget, seed, methods, betas, weights, jobs, out_dir):
    """Build or reuse a corpus, run methods, and write CSV reports."""
    root = Path(corpus_dir)
    try:
        if (root / "spec.json").exists():
            corpus = evaluation.load_corpus(root)
            click.echo(f"reusing ground truth in {root} ({corpus.num_pairs} pairs)", err=True)
        else:
            spec = evaluation.CorpusSpec(
                n_values, alpha_values, k_values, opinion_sizes=opinion_sizes,
                pairs_per_config=pairs_per_config, maps_per_config=maps_per_config,
                seed=seed, time_budget=time_budget,
            )
            corpus = evaluation.build_corpus(spec, root, jobs=jobs)
            click.echo(f"built corpus in {root} ({corpus.num_pairs} pairs)", err=True)
        records = evaluation.run_methods(corpus, methods, betas, weights, jobs=jobs)
        evaluation.write_records(records, root)
        written = evaluation.write_reports(records, out_dir or root, betas)
    except (argmap.GenerationExhausted, CounterError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    failed = sum(1 for r in records if r.error)
    if failed:
        click.echo(f"{failed} records failed; see records/*.csv", err=True)
    for path in written:
        click.echo(str(path))


@main.command(name="fit-d")
@click.argument("map_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def fit_d(map_files):
    """Fit the premise-count distribution of one or more maps."""
    maps = [_load_map(p) for p in map_files]
    try:
        dist = argmap.fit_premise_distribution(maps)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(",".join(f"{k}:{float(v):.6g}" for k, v in dist.items()))


@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--condition", callback=_position, default=None, help="Signed literals, e.g. 1,-2.")
@click.pass_context
def count(ctx, input_file, condition):
    """Conditioned model count of a DIMACS file or argument-map JSON."""
    data = Path(input_file).read_bytes()
    try:
        if input_file.endswith(".json"):
            formula = argmap.to_cnf(argmap.load_json(data))
        else:
            formula = parse_dimacs(data)
    except (DimacsError, argmap.MapSchemaError, argmap.UnsatisfiableMapError) as exc:
        raise click.ClickException(f"{input_file}: {exc}") from None
    counter = ModelCounter(formula, timeout=ctx.obj["timeout"], backend=ctx.obj["backend"])
    try:
        click.echo(counter.count(condition))
    except (CounterError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None


if __name__ == "__main__":
    main()
