"""End-to-end identification workflows built from the library pieces.

These are the functions the command line drives; they are also usable
directly from Python.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .friction import FrictionDataset, StribeckParams, stribeck
from .library import default_library
from .metrics import r_squared, relative_error, residual_stats
from .network import ArchSpec, KanNetwork, init_network, predict
from .optim import FitConfig, FitTrace, fit
from .pruning import PruneConfig, prune
from .symbolic import DEFAULT_ACCEPT, SymbolicModel, symbolify

DEFAULT_KNOWN_INIT = (10.0, 5.0, 0.5, 0.0)


def snapshot_steps(steps: int, snapshots: int) -> list[int]:
    """Iterations at k/snapshots of the run, k = 1..snapshots."""
    if snapshots < 1:
        raise InvalidArgument("snapshots must be at least 1")
    return sorted({max(1, round(steps * k / snapshots)) for k in range(1, snapshots + 1)})


@dataclass
class KanFitResult:
    network: KanNetwork
    trace: FitTrace
    r2: float
    snapshots: dict = field(default_factory=dict)  # iteration -> network copy


def fit_kan(data: FrictionDataset, arch: ArchSpec, steps: int = 300, seed: int = 0,
            algorithm: str = "lbfgs", learning_rate: float | None = None, snapshots: int = 1) -> KanFitResult:
    """Fit a freshly initialized network; optionally keep intermediate copies."""
    net = init_network(arch, seed=seed)
    if algorithm == "lbfgs":
        config = FitConfig.lbfgs(steps, **({} if learning_rate is None else {"learning_rate": learning_rate}))
    else:
        config = FitConfig(algorithm=algorithm, iterations=steps, seed=seed,
                           learning_rate=0.01 if learning_rate is None else learning_rate)
    marks = set(snapshot_steps(steps, snapshots)) if snapshots > 1 else set()
    kept = {}
    net.calibrate(data.velocities, data.torques)

    def grab(it, x):
        if it in marks:
            snap = net.copy()
            snap.set_vector(x)
            kept[it] = snap

    trace = fit(net, data, config, callback=grab if marks else None)
    # a run that stops early still reports its remaining marks at the final state
    for it in marks - set(kept):
        kept[it] = net.copy()
    return KanFitResult(net, trace, r_squared(data.torques, predict(net, data.velocities)), dict(sorted(kept.items())))


@dataclass
class KnownFitResult:
    params: StribeckParams
    trace: FitTrace
    r2: float
    relative_errors: dict | None = None


def fit_known(data: FrictionDataset, init=DEFAULT_KNOWN_INIT, iterations: int = 30000,
              learning_rate: float = 0.01, truth: StribeckParams | None = None) -> KnownFitResult:
    params = init if isinstance(init, StribeckParams) else StribeckParams(*init)
    params = StribeckParams(params.k1, params.k2, params.k3, params.k4, params.smoothing)
    trace = fit(params, data, FitConfig(iterations=iterations, learning_rate=learning_rate))
    rel = None
    if truth is not None:
        rel = {}
        for name in ("k1", "k2", "k3", "k4"):
            t = getattr(truth, name)
            rel[name] = float(relative_error(getattr(params, name), t)) if t != 0 else None
    return KnownFitResult(params, trace, r_squared(data.torques, stribeck(data.velocities, params)), rel)


@dataclass
class PipelineResult:
    pre_prune: KanNetwork
    post_prune: KanNetwork
    prune_report: dict
    model: SymbolicModel
    traces: dict
    r2: dict


def run_pipeline(data: FrictionDataset, arch: ArchSpec, steps: int = 50, seed: int = 0,
                 prune_config: PruneConfig | None = None, library=None,
                 accept_threshold: float = DEFAULT_ACCEPT, learning_rate: float = 1.0,
                 clean: FrictionDataset | None = None) -> PipelineResult:
    """Fit, prune, refit, then symbolify (which refits once more).

    Every fitting stage runs ``steps`` L-BFGS iterations. ``clean`` is an
    optional noise-free copy of the data used only for scoring.
    """
    library = library or default_library()
    config = FitConfig.lbfgs(steps, learning_rate=learning_rate)
    net = init_network(arch, seed=seed)
    traces = {"fit": fit(net, data, config)}
    pruned, report = prune(net, data, prune_config)
    traces["refit"] = fit(pruned, data, config)
    model, sym_trace = symbolify(pruned, library=library, data=data, accept_threshold=accept_threshold,
                                 refit_steps=steps, learning_rate=learning_rate)
    traces["symbolic_refit"] = sym_trace
    r2 = {
        "fit": r_squared(data.torques, predict(net, data.velocities)),
        "refit": r_squared(data.torques, predict(pruned, data.velocities)),
        "symbolic": r_squared(data.torques, model.evaluate(data.velocities)),
    }
    if clean is not None:
        if not np.array_equal(clean.velocities, data.velocities):
            raise InvalidArgument("clean reference must share the training velocities")
        r2["symbolic_vs_clean"] = r_squared(clean.torques, model.evaluate(clean.velocities))
    return PipelineResult(net, pruned, report, model, traces, r2)


def evaluate(model, data: FrictionDataset) -> dict:
    """R-squared and residual summary of any callable ``v -> F`` on ``data``."""
    if isinstance(model, KanNetwork):
        pred = predict(model, data.velocities)
    else:
        pred = np.asarray(model(data.velocities), dtype=float)
    return {
        "n": len(data),
        "r2": r_squared(data.torques, pred),
        "residuals": residual_stats(data.torques, pred),
        "prediction": pred,
    }


def train_and_test(train: FrictionDataset, tests: dict, arch: ArchSpec, steps: int = 30,
                   seed: int = 0) -> tuple[KanFitResult, dict]:
    """Fit on one trajectory, then score every named test trajectory."""
    result = fit_kan(train, arch, steps=steps, seed=seed)
    scores = {name: evaluate(result.network, d) for name, d in tests.items()}
    return result, scores
