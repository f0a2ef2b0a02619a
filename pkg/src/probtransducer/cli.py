"""Command-line interface: ``probtransducer <command> ...``."""

from __future__ import annotations

import functools
import json
import logging
import sys

import click
import numpy as np

from . import io
from .calibrate import SamplerConfig, fit
from .decide import TieRule, canonical_form, sample_utility_space
from .errors import DimensionError, TransducerError
from .evaluate import (
    DEFAULT_QUANTILES,
    OutputGrid,
    accumulate_confusion,
    achievable_bounds,
    default_grid,
    evaluate_algorithm,
    prob_superior,
    raw_argmax_decisions,
    rescaled_yield,
    sweep_rescaled_yields,
    utility_yield,
    variability_band,
)
from .model import MixtureComponent
from .oracle import GeneratorSpec, synth_generate


def _handled(func):
    """Turn package errors into a message and the error's exit status."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TransducerError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(err.exit_code)

    return wrapper


def _floats(text, n=None, name="value"):
    if text is None:
        return None
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"{name} must be comma-separated numbers") from None
    if n is not None and len(values) != n:
        raise click.BadParameter(f"{name} needs {n} values")
    return values


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Calibrate classifier outputs into class probabilities and decide with utilities."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("fit")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False), help="Model file (.json or .json.gz).")
@click.option("--components", "K", default=64, show_default=True)
@click.option("--samples", "T", default=4096, show_default=True)
@click.option("--chains", default=16, show_default=True)
@click.option("--burn-in", default=2000, show_default=True)
@click.option("--thin", default=10, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--classes", "n_classes", type=int, default=None, help="Number of classes if some are absent from DATA.")
@click.option("--workers", type=int, default=None)
@_handled
def cmd_fit(data, output, K, T, chains, burn_in, thin, seed, n_classes, workers):
    """Fit a transducer to a calibration CSV (class,y1[,y2,...])."""
    calib = io.read_calibration_csv(data, n_classes=n_classes)
    try:
        config = SamplerConfig(n_components=K, n_samples=T, n_chains=chains, burn_in=burn_in,
                               thin=thin, seed=seed, workers=workers)
    except ValueError as err:
        raise click.BadParameter(str(err)) from None
    model = fit(calib, config)
    io.save_model(model, output)
    flagged = [k for k, v in model.provenance.get("diagnostics", {}).items() if v["flagged"]]
    click.echo(f"fitted T={model.n_samples} K={model.n_components} on {len(calib)} records -> {output}")
    if flagged:
        click.echo(f"warning: R-hat > 1.1 for {', '.join(flagged)}", err=True)


def _grid(model, cells, span):
    if span is None:
        return default_grid(model, cells)
    lo, hi = _floats(span, 2, "--range")
    if model.y_dim != 1:
        raise DimensionError("--range applies to one-dimensional outputs only")
    return OutputGrid.uniform(lo, hi, cells or 512)


@main.command("curve")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--grid-cells", type=int, default=None, help="Points per output dimension.")
@click.option("--range", "span", default=None, help="lo,hi of the output axis (d=1).")
@click.option("--quantiles", default=",".join(map(str, DEFAULT_QUANTILES)), show_default=True)
@click.option("--class", "band_class", default=1, show_default=True, help="Class whose band is written.")
@click.option("--generative", is_flag=True, help="Band the density p(y|class) instead of p(class|y).")
@click.option("--nonexchangeable", is_flag=True, help="Write the non-exchangeable conditional.")
@_handled
def cmd_curve(model_path, output, grid_cells, span, quantiles, band_class, generative, nonexchangeable):
    """Write the probability curve and its variability band on a grid."""
    model = io.load_model(model_path)
    q_lo, q_hi = _floats(quantiles, 2, "--quantiles")
    y = _grid(model, grid_cells, span).centers
    if nonexchangeable:
        probs = model.conditional_class_nonexchangeable(y)
    else:
        probs = model.conditional_class(y)
    kind = "generative" if generative else "class-conditional"
    band = variability_band(model, y, q_lo, q_hi, curve_kind=kind, c=band_class)
    header = [f"y{j + 1}" for j in range(model.y_dim)] + [f"p_{c}" for c in range(model.n_classes)]
    if generative:
        header.append(f"density_{band_class}")
    header += ["band_lower", "band_upper"]
    rows = []
    for i in range(y.shape[0]):
        row = list(y[i]) + list(probs[i])
        if generative:
            row.append(band.center[i])
        rows.append(row + [band.lower[i], band.upper[i]])
    io.write_table(output, header, rows)


@main.command("decide")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("outputs", type=click.Path(exists=True, dir_okay=False))
@click.option("--utility", type=click.Path(exists=True, dir_okay=False), help="Utility matrix CSV (decisions x classes).")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--prevalence", default=None, help="Deployment class prevalences r0,r1,...")
@click.option("--generative", is_flag=True, help="Bayes with --prevalence on p(y|c).")
@click.option("--nonexchangeable", is_flag=True)
@click.option("--tie-rule", type=click.Choice([r.value for r in TieRule]), default=TieRule.REPORT.value, show_default=True)
@click.option("--seed", type=int, default=None, help="Needed by --tie-rule seeded-uniform.")
@_handled
def cmd_decide(model_path, outputs, utility, output, prevalence, generative, nonexchangeable, tie_rule, seed):
    """Class probabilities and utility-maximizing decisions for new outputs."""
    model = io.load_model(model_path)
    table = io.read_outputs_csv(outputs, y_dim=model.y_dim, n_classes=model.n_classes)
    if generative and nonexchangeable:
        raise click.UsageError("--generative and --nonexchangeable are exclusive")
    if generative and prevalence is None:
        raise click.UsageError("--generative needs --prevalence")
    if prevalence is not None and not generative:
        raise click.UsageError("--prevalence is only used with --generative")
    if generative:
        probs = model.reweight_with_prevalence(table.outputs, _floats(prevalence, model.n_classes, "--prevalence"))
    elif nonexchangeable:
        probs = model.conditional_class_nonexchangeable(table.outputs)
    else:
        probs = model.conditional_class(table.outputs)
    if table.utilities is not None:
        per_row = table.utilities
    elif utility is not None:
        U = io.read_matrix_csv(utility)
        if U.shape[1] != model.n_classes:
            raise DimensionError(f"utility matrix has {U.shape[1]} columns, model has {model.n_classes} classes")
        per_row = np.broadcast_to(U, (len(table.rows),) + U.shape)
    else:
        raise click.UsageError("give --utility or per-row u_<i>_<c> columns")
    decisions, ties = _decide_rows(per_row, probs, TieRule(tie_rule), seed)
    io.write_decisions_csv(output, table, probs, decisions, ties)


def _decide_rows(per_row_U, probs, tie_rule, seed):
    eu = np.einsum("nic,nc->ni", per_row_U, probs)
    best = eu.max(axis=1, keepdims=True)
    hits = eu == best
    rng = None
    if tie_rule is TieRule.SEEDED_UNIFORM:
        if seed is None:
            raise click.UsageError("--tie-rule seeded-uniform needs --seed")
        rng = np.random.default_rng(seed)
    decisions, tie_sets = [], []
    for row in hits:
        ties = tuple(np.flatnonzero(row).tolist())
        pick = ties[0]
        if rng is not None and len(ties) > 1:
            pick = ties[int(rng.integers(len(ties)))]
        decisions.append(pick)
        tie_sets.append(ties)
    return decisions, tie_sets


@main.command("evaluate")
@click.option("--decisions", "decisions_path", type=click.Path(exists=True, dir_okay=False), help="Decisions CSV with a class column.")
@click.option("--confusion", "confusion_path", type=click.Path(exists=True, dir_okay=False), help="Confusion matrix CSV (decisions x classes).")
@click.option("--utility", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@_handled
def cmd_evaluate(decisions_path, confusion_path, utility, as_json):
    """Confusion matrix, utility yield, achievable bounds and rescaled yield."""
    if (decisions_path is None) == (confusion_path is None):
        raise click.UsageError("give exactly one of --decisions and --confusion")
    U = io.read_matrix_csv(utility)
    if confusion_path:
        counts = io.read_matrix_csv(confusion_path)
    else:
        classes, decisions, ties = io.read_decisions_csv(decisions_path)
        counts = accumulate_confusion(decisions, classes, U.shape[0], U.shape[1], tie_sets=ties).counts
    if counts.shape != U.shape:
        raise DimensionError(f"confusion shape {counts.shape} does not match utility shape {U.shape}")
    value = utility_yield(U, counts)
    bounds = achievable_bounds(U, counts.sum(axis=0))
    report = {
        "confusion": counts.tolist(),
        "yield": value,
        "min_achievable": bounds[0],
        "max_achievable": bounds[1],
        "rescaled_yield": rescaled_yield(value, bounds) if bounds[1] > bounds[0] else None,
    }
    if as_json:
        click.echo(json.dumps(report))
        return
    click.echo("confusion (rows: decisions, columns: true classes)")
    for row in counts:
        click.echo("  " + "  ".join(f"{v:g}" for v in row))
    click.echo(f"yield per datum: {value:.6g}")
    click.echo(f"achievable: [{bounds[0]:.6g}, {bounds[1]:.6g}]")
    if report["rescaled_yield"] is not None:
        click.echo(f"rescaled yield: {report['rescaled_yield']:.6g}")


@main.command("algeval")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--utility", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--grid-cells", type=int, default=None)
@click.option("--range", "span", default=None, help="lo,hi of the output axis (d=1).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Long-run utility per posterior sample (CSV).")
@click.option("--histogram", type=click.Path(dir_okay=False), help="Histogram CSV of the long-run utilities.")
@click.option("--bins", default=50, show_default=True)
@_handled
def cmd_algeval(model_path, utility, grid_cells, span, output, histogram, bins):
    """Expected utility of the augmented classifier and its long-run distribution."""
    model = io.load_model(model_path)
    U = io.read_matrix_csv(utility)
    result = evaluate_algorithm(model, U, _grid(model, grid_cells, span))
    click.echo(f"expected utility: {result.expected_utility:.6g}")
    lo, med, hi = np.quantile(result.long_run_samples, [0.125, 0.5, 0.875])
    click.echo(f"long-run utility median {med:.6g}, 75% interval [{lo:.6g}, {hi:.6g}]")
    if output:
        io.write_table(output, ["sample", "utility"], list(enumerate(result.long_run_samples)))
    if histogram:
        dens, edges = np.histogram(result.long_run_samples, bins=bins, density=True)
        io.write_table(histogram, ["bin_lower", "bin_upper", "density"],
                       zip(edges[:-1], edges[1:], dens))


@main.command("compare")
@click.argument("samples_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples_b", type=click.Path(exists=True, dir_okay=False))
@_handled
def cmd_compare(samples_a, samples_b):
    """Probability that algorithm A's long-run utility exceeds B's."""
    p = prob_superior(io.read_column(samples_a, "utility"), io.read_column(samples_b, "utility"))
    click.echo(f"{p:.6g}")


@main.command("sweep")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "n_matrices", default=10000, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--prevalence", default=None, help="Use the generative mode with these prevalences.")
@click.option("--raw-threshold", default=0.5, show_default=True, help="Cut for the utility-blind baseline on 1-D scores.")
@_handled
def cmd_sweep(model_path, data, n_matrices, seed, output, prevalence, raw_threshold):
    """Rescaled yields over random 2x2 utility matrices, augmented vs standard."""
    model = io.load_model(model_path)
    test = io.read_calibration_csv(data, n_classes=model.n_classes)
    if model.n_classes != 2:
        raise DimensionError("utility-space sweeps are defined for two classes")
    if test.y_dim != model.y_dim:
        raise DimensionError(f"data has {test.y_dim} output columns, model expects {model.y_dim}")
    if prevalence is not None:
        probs = model.reweight_with_prevalence(test.outputs, _floats(prevalence, 2, "--prevalence"))
    else:
        probs = model.conditional_class(test.outputs)
    matrices = sample_utility_space(n_matrices, seed)
    aug, std = sweep_rescaled_yields(matrices, test.classes, probs,
                                     baseline=raw_argmax_decisions(test.outputs, raw_threshold))
    rows = [[U[0, 0], U[0, 1], U[1, 0], U[1, 1], a, s] for U, a, s in zip(matrices, aug, std)]
    io.write_table(output, ["u_0_0", "u_0_1", "u_1_0", "u_1_1", "augmented", "standard"], rows)
    click.echo(f"median rescaled yield: augmented {np.median(aug):.4f}, standard {np.median(std):.4f}")


@main.command("canonical")
@click.argument("utility", type=click.Path(exists=True, dir_okay=False))
@_handled
def cmd_canonical(utility):
    """Print the equivalent utility matrix with entries spanning [0, 1]."""
    for row in canonical_form(io.read_matrix_csv(utility)):
        click.echo(",".join(repr(float(v)) for v in row))


@main.command("synth")
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "n_records", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_handled
def cmd_synth(spec_path, n_records, seed, output):
    """Draw a synthetic calibration CSV from a JSON mixture generator.

    The JSON holds {"components": [{"weight", "class_params", "means",
    "stddevs"}, ...]}.
    """
    with open(spec_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        comps = tuple(
            MixtureComponent(float(c["weight"]), tuple(c["class_params"]),
                             tuple(c["means"]), tuple(c["stddevs"]))
            for c in doc["components"]
        )
        spec = GeneratorSpec(comps, seed)
    except (KeyError, TypeError, ValueError) as err:
        raise click.BadParameter(f"bad generator spec: {err}") from None
    io.write_calibration_csv(synth_generate(spec, n_records), output)


if __name__ == "__main__":
    main()
