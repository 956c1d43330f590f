"""Adam and L-BFGS minimizers over flat parameter vectors.

Both drivers take ``fun(x) -> (loss, grad)`` and run full-batch. :func:`fit`
adapts KAN networks and Stribeck coefficient sets to that interface.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedError, InvalidArgument

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


@dataclass
class FitConfig:
    algorithm: str = "adam"
    learning_rate: float = 0.01
    iterations: int = 30000
    lbfgs_history: int = 10
    seed: int = 0
    record_every: int = 100

    def __post_init__(self):
        if self.algorithm not in ("adam", "lbfgs"):
            raise InvalidArgument(f"unknown algorithm {self.algorithm!r}")
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.iterations < 1:
            raise InvalidArgument("iterations must be at least 1")
        if self.lbfgs_history < 1:
            raise InvalidArgument("lbfgs_history must be at least 1")
        if self.record_every < 1:
            raise InvalidArgument("record_every must be at least 1")

    @classmethod
    def lbfgs(cls, steps: int, **kw) -> "FitConfig":
        kw.setdefault("learning_rate", 1.0)
        kw.setdefault("record_every", 1)
        return cls(algorithm="lbfgs", iterations=steps, **kw)


@dataclass
class FitTrace:
    loss_history: list = field(default_factory=list)
    final_loss: float = float("nan")
    wall_time: float = 0.0
    iterations_run: int = 0
    evaluations: int = 0
    damped_steps: int = 0
    stopped_early: bool = False

    def record(self, iteration, loss):
        if not self.loss_history or self.loss_history[-1][0] < iteration:
            self.loss_history.append((int(iteration), float(loss)))

    def to_json(self):
        return {
            "loss_history": [[i, l] for i, l in self.loss_history],
            "final_loss": self.final_loss,
            "iterations_run": self.iterations_run,
            "evaluations": self.evaluations,
            "damped_steps": self.damped_steps,
            "stopped_early": self.stopped_early,
            "wall_time": self.wall_time,
        }


def adam(fun, x0, config: FitConfig, callback=None):
    """Plain Adam with bias correction; returns ``(x, trace)``.

    With a constant learning rate the iterates keep fluctuating around the
    minimum, so the lowest-loss iterate visited is returned, not the last.
    """
    x = np.array(x0, dtype=float)
    best_x, best_loss = x.copy(), np.inf
    m = np.zeros_like(x)
    s = np.zeros_like(x)
    trace = FitTrace()
    t0 = time.perf_counter()
    lr = config.learning_rate
    loss = float("nan")
    for it in range(1, config.iterations + 1):
        loss, g = fun(x)
        trace.evaluations += 1
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            trace.wall_time = time.perf_counter() - t0
            raise DivergedError(f"non-finite loss at Adam iteration {it}", trace)
        if loss < best_loss:
            best_x, best_loss = x.copy(), loss
        if it == 1 or it % config.record_every == 0:
            trace.record(it - 1, loss)
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        s = ADAM_BETA2 * s + (1 - ADAM_BETA2) * (g * g)
        m_hat = m / (1 - ADAM_BETA1**it)
        s_hat = s / (1 - ADAM_BETA2**it)
        x = x - lr * m_hat / (np.sqrt(s_hat) + ADAM_EPS)
        trace.iterations_run = it
        if callback is not None:
            callback(it, x)
    loss, _ = fun(x)
    trace.evaluations += 1
    if not np.isfinite(loss):
        raise DivergedError("non-finite loss after final Adam update", trace)
    trace.record(config.iterations, loss)
    if loss > best_loss:
        x = best_x
        loss, _ = fun(x)
        trace.evaluations += 1
    trace.final_loss = float(loss)
    trace.wall_time = time.perf_counter() - t0
    return x, trace


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through two points with slopes, or None."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


@dataclass
class LineSearchResult:
    alpha: float
    f: float
    g: np.ndarray | None
    evaluations: int
    strong_wolfe: bool


def strong_wolfe_search(phi, f0, d0, alpha0, c1=WOLFE_C1, c2=WOLFE_C2, max_evals=25):
    """Bracketing + zoom line search for the strong Wolfe conditions.

    ``phi(alpha) -> (f, g, dphi)``. Non-finite function values count as
    insufficient decrease. If the budget runs out, the best point with
    sufficient decrease is returned with ``strong_wolfe=False``; ``alpha`` is
    0 when no such point was found.
    """
    evals = 0
    best = LineSearchResult(0.0, f0, None, 0, False)

    def consider(a, f, g):
        nonlocal best
        if np.isfinite(f) and f <= f0 + c1 * a * d0 and f < best.f:
            best = LineSearchResult(a, f, g, 0, False)

    def finish(res):
        res.evaluations = evals
        return res

    a_prev, f_prev, dp_prev = 0.0, f0, d0
    a = alpha0
    lo = hi = None
    while evals < max_evals:
        f, g, dp = phi(a)
        evals += 1
        if not np.isfinite(f):
            lo, hi = (a_prev, f_prev, dp_prev), (a, np.inf, np.nan)
            break
        consider(a, f, g)
        if f > f0 + c1 * a * d0 or (evals > 1 and f >= f_prev):
            lo, hi = (a_prev, f_prev, dp_prev), (a, f, dp)
            break
        if abs(dp) <= -c2 * d0:
            return finish(LineSearchResult(a, f, g, 0, True))
        if dp >= 0:
            lo, hi = (a, f, dp), (a_prev, f_prev, dp_prev)
            break
        a_next = _cubic_min(a_prev, f_prev, dp_prev, a, f, dp)
        lim_lo, lim_hi = a + 1.01 * (a - a_prev), a + 10 * (a - a_prev)
        if a_next is None or not np.isfinite(a_next) or not (lim_lo <= a_next <= lim_hi):
            a_next = min(2 * a, lim_hi) if 2 * a > lim_lo else lim_lo
        a_prev, f_prev, dp_prev = a, f, dp
        a = a_next
    else:
        return finish(best)

    while evals < max_evals:
        (a_lo, f_lo, d_lo), (a_hi, f_hi, d_hi) = lo, hi
        width = a_hi - a_lo
        a = None
        if np.isfinite(f_hi) and np.isfinite(d_hi):
            a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        lo_edge, hi_edge = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
        if a is None or not np.isfinite(a) or not (lo_edge <= a <= hi_edge):
            a = 0.5 * (a_lo + a_hi)
        if abs(width) < 1e-16 * max(1.0, abs(a_lo)):
            break
        f, g, dp = phi(a)
        evals += 1
        consider(a, f, g)
        if not np.isfinite(f) or f > f0 + c1 * a * d0 or f >= f_lo:
            hi = (a, f if np.isfinite(f) else np.inf, dp)
        else:
            if abs(dp) <= -c2 * d0:
                return finish(LineSearchResult(a, f, g, 0, True))
            if dp * (a_hi - a_lo) >= 0:
                hi = lo
            lo = (a, f, dp)
    return finish(best)


def lbfgs(fun, x0, config: FitConfig, callback=None, tolerance_grad=1e-12, tolerance_change=1e-15):
    """Limited-memory BFGS with two-loop recursion and strong-Wolfe steps.

    The learning rate is the initial trial step of each line search (scaled
    by ``1/|g|_1`` on the first iteration, before curvature pairs exist).
    Failed line searches fall back to the best sufficient-decrease point;
    if there is none the memory is cleared and steepest descent is tried
    once before stopping.
    """
    x = np.array(x0, dtype=float)
    trace = FitTrace()
    t0 = time.perf_counter()
    f, g = fun(x)
    trace.evaluations += 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise DivergedError("non-finite loss at the starting point", trace)
    trace.record(0, f)
    memory = deque(maxlen=config.lbfgs_history)
    lr = config.learning_rate
    restarted = False

    for it in range(1, config.iterations + 1):
        if np.max(np.abs(g)) <= tolerance_grad:
            trace.stopped_early = True
            break
        direction = _two_loop(g, memory)
        d0 = float(g @ direction)
        if d0 >= 0:
            memory.clear()
            direction = -g
            d0 = float(g @ direction)
        alpha0 = lr * min(1.0, 1.0 / np.sum(np.abs(g))) if not memory else lr

        def phi(a):
            with np.errstate(all="ignore"):
                fa, ga = fun(x + a * direction)
            if not np.all(np.isfinite(ga)):
                return np.inf, None, np.nan
            return fa, ga, float(ga @ direction)

        res = strong_wolfe_search(phi, f, d0, alpha0)
        trace.evaluations += res.evaluations
        if res.alpha == 0.0:
            if memory and not restarted:
                memory.clear()
                restarted = True
                continue
            trace.stopped_early = True
            break
        restarted = False
        if not res.strong_wolfe:
            trace.damped_steps += 1
        s = res.alpha * direction
        x_new = x + s
        g_new = res.g
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(y @ y):
            memory.append((s, y, 1.0 / sy))
        f_old = f
        x, f, g = x_new, res.f, g_new
        trace.iterations_run = it
        if it % config.record_every == 0 or it == config.iterations:
            trace.record(it, f)
        if callback is not None:
            callback(it, x)
        if abs(f_old - f) <= tolerance_change * max(1.0, abs(f)) and np.max(np.abs(s)) <= tolerance_change:
            trace.stopped_early = True
            break
    # leave the objective's bound state at the returned point
    f, _ = fun(x)
    trace.evaluations += 1
    trace.record(max(trace.iterations_run, 0), f)
    trace.final_loss = float(f)
    trace.wall_time = time.perf_counter() - t0
    return x, trace


def _two_loop(g, memory):
    q = -g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(fun, x0, config: FitConfig, callback=None):
    if config.algorithm == "adam":
        return adam(fun, x0, config, callback)
    return lbfgs(fun, x0, config, callback)


def fit(parameters, data, config: FitConfig, callback=None) -> FitTrace:
    """Train ``parameters`` in place on ``data``.

    ``parameters`` is a :class:`~kanfriction.network.KanNetwork` (normalization
    is frozen from ``data`` if not done yet) or a
    :class:`~kanfriction.friction.StribeckParams`.
    """
    from .autodiff import network_objective
    from .friction import StribeckParams
    from .network import KanNetwork

    if len(data) < 1:
        raise InvalidArgument("dataset is empty")
    if isinstance(parameters, StribeckParams):
        fitted, trace = fit_known_form(data, parameters, config, callback)
        parameters.k1, parameters.k2, parameters.k3, parameters.k4 = (
            fitted.k1, fitted.k2, fitted.k3, fitted.k4)
        return trace
    if not isinstance(parameters, KanNetwork):
        raise InvalidArgument(f"cannot fit object of type {type(parameters).__name__}")
    net = parameters
    if not net.calibrated:
        net.calibrate(data.velocities, data.torques)
    x0 = net.get_vector()
    fun = network_objective(net, data)
    try:
        x, trace = minimize(fun, x0, config, callback)
    except DivergedError:
        net.set_vector(x0)
        raise
    net.set_vector(x)
    return trace


def fit_known_form(data, init, config: FitConfig, callback=None):
    """Fit the smoothed Stribeck law; k3 is optimized as ``log k3``."""
    from .autodiff import stribeck_loss_and_gradient
    from .friction import StribeckParams

    if len(data) < 1:
        raise InvalidArgument("dataset is empty")
    if not init.k3 > 0:
        raise InvalidArgument("k3 initialization must be positive")
    v, F = data.velocities, data.torques
    theta0 = np.array([init.k1, init.k2, np.log(init.k3), init.k4])

    def fun(theta):
        return stribeck_loss_and_gradient(theta, v, F, init.smoothing)

    theta, trace = minimize(fun, theta0, config, callback)
    fitted = StribeckParams(float(theta[0]), float(theta[1]), float(np.exp(theta[2])), float(theta[3]), init.smoothing)
    return fitted, trace
