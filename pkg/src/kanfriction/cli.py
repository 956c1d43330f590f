"""Command line front end: ``kanfriction <command> ...``.

Every command writes its outputs into ``--out-dir`` (default taken from
``$KANFRICTION_OUT``, else ``./kanfriction-out``): a JSON report, a
prediction CSV where applicable, and an SVG figure when ``--svg`` is given.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DivergedError, DomainError, FormatError, InvalidArgument, OverPrunedError
from .friction import (AXIS_PARAMS, CLASSICAL_KINDS, FrictionDataset, NoiseSpec, add_noise, axis_params,
                       classical_model, generate_axis_dataset, read_csv, stribeck, write_csv)
from .library import default_library
from .metrics import pearson_correlation, r_squared
from .network import ArchSpec
from .optim import FitConfig, fit
from .pruning import DEFAULT_EDGE_THRESHOLD, DEFAULT_NODE_THRESHOLD, PruneConfig, prune
from .symbolic import DEFAULT_ACCEPT, parse_expression, symbolify
from . import workflow

OUT_ENV = "KANFRICTION_OUT"
DEFAULT_OUT = "kanfriction-out"


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise click.ClickException(f"cannot create output directory {out}: {exc.strerror}")
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


def _write_predictions(path: Path, v, truth, pred) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["velocity", "truth", "prediction"])
        for row in zip(v, truth, pred):
            w.writerow([repr(float(x)) for x in row])


def _load_data(path) -> FrictionDataset:
    try:
        return read_csv(path)
    except FormatError as exc:
        raise click.ClickException(str(exc))


def _parse_floats(text, n, what):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"{what} must be {n} comma-separated numbers")
    if len(vals) != n:
        raise click.BadParameter(f"{what} must be {n} comma-separated numbers")
    return vals


def _library(names):
    lib = default_library()
    if not names:
        return lib
    wanted = [n.strip() for n in names.split(",") if n.strip()]
    unknown = [n for n in wanted if n not in lib]
    if unknown:
        raise click.BadParameter(f"unknown library functions {unknown}; available: {', '.join(lib.names)}")
    return lib.subset(wanted)


def _arch(text, grid, order):
    try:
        return ArchSpec.parse(text, grid_G=grid, order_r=order)
    except InvalidArgument as exc:
        raise click.BadParameter(str(exc), param_hint="--arch")


def _svg(out: Path, name: str, v, truth, pred, title, extra=None):
    from .plotting import plot_prediction
    plot_prediction(v, truth, pred, out / name, title=title, extra=extra)


class _Main(click.Group):
    """Map library exceptions to a one-line message and exit code 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (InvalidArgument, FormatError, DivergedError, OverPrunedError, DomainError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}")


out_option = click.option("--out-dir", type=click.Path(file_okay=False), envvar=OUT_ENV, default=DEFAULT_OUT,
                          show_default=True, help=f"Output directory (env {OUT_ENV}).")
seed_option = click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
svg_option = click.option("--svg", is_flag=True, help="Also write an SVG figure.")
data_argument = click.argument("data", type=click.Path(exists=True, dir_okay=False))


@click.group(cls=_Main)
@click.version_option(__version__)
def main():
    """Identify static joint friction laws with Kolmogorov-Arnold networks."""


@main.command()
@click.option("--axis", type=click.IntRange(min(AXIS_PARAMS), max(AXIS_PARAMS)), required=True,
              help="Joint whose reference coefficients are used (1..6).")
@click.option("--n", "n_samples", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--v-min", type=float, default=-1.0, show_default=True)
@click.option("--v-max", type=float, default=1.0, show_default=True)
@click.option("--law", type=click.Choice(("stribeck",) + CLASSICAL_KINDS), default="stribeck", show_default=True)
@click.option("--noise", type=click.Choice(["none", "quarter_range", "half_lambda"]), default="none",
              show_default=True)
@click.option("--lam", type=float, default=None, help="Noise level for half_lambda (default: per-axis value).")
@click.option("--channel", "channels", multiple=True,
              help="Extra column NAME=EXPR written alongside, EXPR in terms of v.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: <out-dir>/axis<N>.csv).")
@out_option
@seed_option
def generate(axis, n_samples, v_min, v_max, law, noise, lam, channels, out_file, out_dir, seed):
    """Sample a synthetic velocity/torque CSV."""
    from .friction import AXIS_NOISE_LAMBDA
    data = generate_axis_dataset(axis, n_samples, (v_min, v_max), seed=seed)
    if law != "stribeck":
        data = FrictionDataset(data.velocities, classical_model(law, data.velocities, axis_params(axis)),
                               dict(data.provenance, law=law))
    if noise != "none":
        level = AXIS_NOISE_LAMBDA[axis] if lam is None else lam
        data = add_noise(data, NoiseSpec(noise, level if noise == "half_lambda" else 0.0, seed=seed))
    for spec in channels:
        name, _, expr = spec.partition("=")
        if not name or not expr:
            raise click.BadParameter("channels are given as NAME=EXPR", param_hint="--channel")
        data.channels[name.strip()] = parse_expression(expr).evaluate(data.velocities)
    path = Path(out_file) if out_file else _out_dir(out_dir) / f"axis{axis}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, path)
    click.echo(f"wrote {len(data)} samples to {path}")


@main.command("fit-known")
@data_argument
@click.option("--init", "init_text", default="10,5,0.5,0", show_default=True, help="k1,k2,k3,k4 start.")
@click.option("--iters", type=click.IntRange(min=1), default=30000, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--truth-axis", type=click.IntRange(1, 6), default=None,
              help="Report relative errors against this joint's reference coefficients.")
@click.option("--clean", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Noise-free CSV to score the fitted curve against.")
@out_option
@svg_option
def fit_known(data, init_text, iters, lr, truth_axis, clean, out_dir, svg):
    """Fit the smoothed Stribeck law by gradient descent (Adam)."""
    ds = _load_data(data)
    truth = axis_params(truth_axis) if truth_axis else None
    res = workflow.fit_known(ds, _parse_floats(init_text, 4, "--init"), iters, lr, truth)
    out = _out_dir(out_dir)
    pred = stribeck(ds.velocities, res.params)
    report = {
        "data": str(data),
        "params": {k: getattr(res.params, k) for k in ("k1", "k2", "k3", "k4")},
        "r2": res.r2,
        "relative_errors": res.relative_errors,
        "config": {"algorithm": "adam", "iterations": iters, "learning_rate": lr, "init": init_text},
        "trace": res.trace.to_json(),
    }
    if clean:
        ref = _load_data(clean)
        report["r2_vs_clean"] = r_squared(ref.torques, stribeck(ref.velocities, res.params))
    _write_json(out / "fit_known.json", report)
    _write_predictions(out / "predictions.csv", ds.velocities, ds.torques, pred)
    if svg:
        _svg(out, "fit_known.svg", ds.velocities, ds.torques, pred, f"known-form fit, R2={res.r2:.6f}")
    click.echo(" ".join(f"{k}={v:.6g}" for k, v in report["params"].items()) + f" R2={res.r2:.6f}")


@main.command("fit-kan")
@data_argument
@click.option("--arch", "arch_text", default="[1,5,1]", show_default=True)
@click.option("--grid", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--order", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=300, show_default=True)
@click.option("--optimizer", type=click.Choice(["lbfgs", "adam"]), default="lbfgs", show_default=True)
@click.option("--lr", type=float, default=None, help="Default 1.0 for lbfgs, 0.01 for adam.")
@click.option("--snapshots", type=click.IntRange(min=1), default=1, show_default=True,
              help="Keep fits at k/N of the steps, k=1..N.")
@click.option("--test", "tests", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Extra CSVs scored with the trained network.")
@out_option
@seed_option
@svg_option
def fit_kan(data, arch_text, grid, order, steps, optimizer, lr, snapshots, tests, out_dir, seed, svg):
    """Fit a KAN to a velocity/torque CSV."""
    ds = _load_data(data)
    arch = _arch(arch_text, grid, order)
    res = workflow.fit_kan(ds, arch, steps=steps, seed=seed, algorithm=optimizer, learning_rate=lr,
                           snapshots=snapshots)
    out = _out_dir(out_dir)
    save_checkpoint(res.network, out / "checkpoint.json")
    pred = workflow.evaluate(res.network, ds)["prediction"]
    report = {
        "data": str(data), "arch": arch.to_json(), "seed": seed, "r2": res.r2,
        "config": {"optimizer": optimizer, "steps": steps, "learning_rate": lr},
        "trace": res.trace.to_json(), "snapshots": {}, "tests": {},
    }
    extra = {}
    for it, snap in res.snapshots.items():
        save_checkpoint(snap, out / f"checkpoint_step{it}.json")
        snap_eval = workflow.evaluate(snap, ds)
        report["snapshots"][str(it)] = snap_eval["r2"]
        extra[f"step {it}"] = snap_eval["prediction"]
    _write_predictions(out / "predictions.csv", ds.velocities, ds.torques, pred)
    for path in tests:
        tds = _load_data(path)
        ev = workflow.evaluate(res.network, tds)
        stem = Path(path).stem
        report["tests"][str(path)] = {"r2": ev["r2"], "residuals": ev["residuals"]}
        _write_predictions(out / f"predictions_{stem}.csv", tds.velocities, tds.torques, ev["prediction"])
        if svg:
            _svg(out, f"test_{stem}.svg", tds.velocities, tds.torques, ev["prediction"],
                 f"{stem}, R2={ev['r2']:.4f}")
    _write_json(out / "fit_kan.json", report)
    if svg:
        _svg(out, "fit_kan.svg", ds.velocities, ds.torques, pred, f"KAN fit, R2={res.r2:.6f}", extra)
    click.echo(f"R2={res.r2:.6f}")
    for path, r in report["tests"].items():
        click.echo(f"{path}: R2={r['r2']:.6f}")


@main.command("prune")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@data_argument
@click.option("--node-threshold", type=float, default=DEFAULT_NODE_THRESHOLD, show_default=True)
@click.option("--edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD, show_default=True)
@click.option("--refit-steps", type=click.IntRange(min=0), default=50, show_default=True)
@out_option
def prune_cmd(checkpoint, data, node_threshold, edge_threshold, refit_steps, out_dir):
    """Prune nodes and edges by attribution score, then refit."""
    net = load_checkpoint(checkpoint)
    ds = _load_data(data)
    pruned, report = prune(net, ds, PruneConfig(node_threshold, edge_threshold))
    report["r2_before"] = r_squared(ds.torques, workflow.evaluate(net, ds)["prediction"])
    if refit_steps:
        report["refit_trace"] = fit(pruned, ds, FitConfig.lbfgs(refit_steps)).to_json()
    report["r2_after"] = r_squared(ds.torques, workflow.evaluate(pruned, ds)["prediction"])
    out = _out_dir(out_dir)
    save_checkpoint(pruned, out / "pruned.json")
    _write_json(out / "prune_report.json", report)
    click.echo(f"R2 before={report['r2_before']:.6f} after={report['r2_after']:.6f}")


@main.command("symbolify")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@data_argument
@click.option("--accept-threshold", type=float, default=DEFAULT_ACCEPT, show_default=True)
@click.option("--library", "library_names", default=None, help="Comma-separated subset of the function library.")
@click.option("--steps", type=click.IntRange(min=0), default=50, show_default=True, help="Refit steps.")
@out_option
def symbolify_cmd(checkpoint, data, accept_threshold, library_names, steps, out_dir):
    """Replace spline edges by closed-form functions and refit."""
    net = load_checkpoint(checkpoint)
    ds = _load_data(data)
    model, trace = symbolify(net, library=_library(library_names), data=ds,
                             accept_threshold=accept_threshold, refit_steps=steps)
    out = _out_dir(out_dir)
    save_checkpoint(model.network, out / "symbolic_checkpoint.json")
    (out / "expression.txt").write_text(model.rendered + "\n")
    report = dict(model.report)
    report["expression"] = model.rendered
    report["fully_symbolic"] = model.fully_symbolic
    report["r2"] = r_squared(ds.torques, model.evaluate(ds.velocities))
    report["trace"] = trace.to_json() if trace else None
    _write_json(out / "symbolic.json", report)
    click.echo(model.rendered)
    click.echo(f"R2={report['r2']:.6f}")


@main.command("pipeline")
@data_argument
@click.option("--arch", "arch_text", default="[1,[5,2],1]", show_default=True)
@click.option("--grid", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--order", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=50, show_default=True, help="L-BFGS steps per stage.")
@click.option("--lr", type=float, default=1.0, show_default=True)
@click.option("--node-threshold", type=float, default=DEFAULT_NODE_THRESHOLD, show_default=True)
@click.option("--edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD, show_default=True)
@click.option("--accept-threshold", type=float, default=DEFAULT_ACCEPT, show_default=True)
@click.option("--library", "library_names", default=None, help="Comma-separated subset of the function library.")
@click.option("--clean", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Noise-free CSV with the same velocities, used for scoring only.")
@out_option
@seed_option
@svg_option
def pipeline(data, arch_text, grid, order, steps, lr, node_threshold, edge_threshold, accept_threshold,
             library_names, clean, out_dir, seed, svg):
    """Fit, prune, refit and symbolify in one go."""
    ds = _load_data(data)
    ref = _load_data(clean) if clean else None
    res = workflow.run_pipeline(ds, _arch(arch_text, grid, order), steps=steps, seed=seed,
                                prune_config=PruneConfig(node_threshold, edge_threshold),
                                library=_library(library_names), accept_threshold=accept_threshold,
                                learning_rate=lr, clean=ref)
    out = _out_dir(out_dir)
    save_checkpoint(res.pre_prune, out / "pre_prune.json")
    save_checkpoint(res.post_prune, out / "post_prune.json")
    save_checkpoint(res.model.network, out / "symbolic_checkpoint.json")
    _write_json(out / "prune_report.json", res.prune_report)
    (out / "expression.txt").write_text(res.model.rendered + "\n")
    pred = res.model.evaluate(ds.velocities)
    _write_predictions(out / "predictions.csv", ds.velocities, ds.torques, pred)
    report = {
        "data": str(data), "arch": res.pre_prune.arch.to_json(), "seed": seed,
        "config": {"steps": steps, "learning_rate": lr, "node_threshold": node_threshold,
                   "edge_threshold": edge_threshold, "accept_threshold": accept_threshold},
        "r2": res.r2, "expression": res.model.rendered, "fully_symbolic": res.model.fully_symbolic,
        "symbolic": res.model.report,
        "traces": {k: (t.to_json() if t else None) for k, t in res.traces.items()},
    }
    _write_json(out / "pipeline.json", report)
    if svg:
        _svg(out, "pipeline.svg", ds.velocities, ds.torques, pred, f"symbolic model, R2={res.r2['symbolic']:.5f}")
    click.echo(res.model.rendered)
    click.echo(" ".join(f"R2[{k}]={v:.6f}" for k, v in res.r2.items()))


@main.command("eval")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@data_argument
@click.option("--name", default="eval", show_default=True, help="Stem for the output files.")
@out_option
@svg_option
def eval_cmd(model, data, name, out_dir, svg):
    """Score a checkpoint (.json) or an expression text file on a CSV."""
    ds = _load_data(data)
    if model.endswith(".json"):
        fn = load_checkpoint(model)
    else:
        fn = parse_expression(Path(model).read_text())
    ev = workflow.evaluate(fn, ds)
    out = _out_dir(out_dir)
    _write_predictions(out / f"{name}_predictions.csv", ds.velocities, ds.torques, ev["prediction"])
    _write_json(out / f"{name}.json", {"model": str(model), "data": str(data), "n": ev["n"], "r2": ev["r2"],
                                       "residuals": ev["residuals"]})
    if svg:
        _svg(out, f"{name}.svg", ds.velocities, ds.torques, ev["prediction"], f"R2={ev['r2']:.6f}")
    click.echo(f"R2={ev['r2']:.6f} rmse={ev['residuals']['rmse']:.6g}")


@main.command("correlate")
@data_argument
@click.option("--target", default="torque", show_default=True, help="Column to correlate against.")
@out_option
def correlate(data, target, out_dir):
    """Pearson correlation of every column with the torque."""
    ds = _load_data(data)
    cols = {"velocity": ds.velocities, "torque": ds.torques, **ds.channels}
    if target not in cols:
        raise click.BadParameter(f"no column {target!r}; have {', '.join(cols)}", param_hint="--target")
    table = {}
    for name, col in cols.items():
        if np.all(col == col[0]):
            raise click.ClickException(f"channel {name!r} is constant; correlation undefined")
        if name == target:
            continue
        table[name] = pearson_correlation(col, cols[target])
    out = _out_dir(out_dir)
    with (out / "correlation.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", f"pearson_with_{target}"])
        for name, r in table.items():
            w.writerow([name, repr(r)])
    _write_json(out / "correlation.json", {"data": str(data), "target": target, "pearson": table})
    for name, r in table.items():
        click.echo(f"{name}\t{r:+.6f}")


if __name__ == "__main__":
    main()
