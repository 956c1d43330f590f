"""Exact gradients of the mean-squared error by reverse accumulation.

The backward pass mirrors :func:`kanfriction.network.forward_cached` step by
step: output de-normalization, node masks, multiplicative pairing, the
``tanh`` squash, and per-edge spline / base / symbolic branches.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .library import get_entry
from .network import KanNetwork, forward_cached, silu_derivative


@dataclass
class GradientSet:
    """Per-layer gradient arrays, shape-congruent with the network parameters.

    ``vector`` is used instead for closed-form models (e.g. Stribeck
    coefficients).
    """

    layers: list = field(default_factory=list)
    vector: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        if self.vector is not None and not self.layers:
            return self.vector
        return np.concatenate([g[name].ravel() for g in self.layers
                               for name in ("spline_coeffs", "base_weight", "spline_scaler", "sym_params")])


def _as_arrays(net: KanNetwork, data):
    v = np.asarray(data.velocities if hasattr(data, "velocities") else data[0], dtype=float)
    F = np.asarray(data.torques if hasattr(data, "torques") else data[1], dtype=float)
    if v.shape[0] == 0:
        raise InvalidArgument("dataset is empty")
    V = net.check_input(v)
    F = F.reshape(len(F), -1)
    if F.shape != (V.shape[0], net.n_outputs):
        raise InvalidArgument(f"targets have shape {F.shape}, expected {(V.shape[0], net.n_outputs)}")
    return V, F


def loss_and_gradients(net: KanNetwork, data) -> tuple[float, GradientSet]:
    """MSE over the dataset and its gradient with respect to every trainable array.

    ``data`` is a :class:`~kanfriction.friction.FrictionDataset` or a
    ``(inputs, targets)`` pair.
    """
    V, F = _as_arrays(net, data)
    N = V.shape[0]
    fc = forward_cached(net, V, derivative=True)
    resid = fc.prediction - F
    loss = float(np.mean(np.sum(resid**2, axis=1)))

    # d loss / d (normalized output)
    grad_H = 2.0 * resid / N / net.output_scale[None, :]
    layer_grads = [None] * len(net.layers)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        cache = fc.layer_caches[l]
        grad_H = grad_H * net.node_masks[l + 1][None, :]
        grad_Y = _combine_backward(net, l + 1, cache.Y, grad_H)
        if layer.apply_output_squash:
            grad_pre = grad_Y * (1.0 - cache.Y**2)
        else:
            grad_pre = grad_Y
        g_edge = grad_pre[:, :, None] * cache.mask[None]  # (N, l_o, l_i)
        sym = layer.symbolic_mask
        g_num = g_edge * (~sym)[None]

        d_scaler = np.einsum("noi,noi->oi", g_num, cache.phi)
        d_base = np.einsum("noi,ni->oi", g_num, cache.base)
        d_coeffs = np.einsum("noi,oi,nim->oim", g_num, layer.spline_scaler, cache.B)

        dphi_dx = np.einsum("nim,oim->noi", cache.dB, layer.spline_coeffs)
        local = (layer.spline_scaler[None] * dphi_dx
                 + layer.base_weight[None] * silu_derivative(cache.X)[:, None, :])
        grad_X = np.einsum("noi,noi->ni", g_num, local)

        d_sym = np.zeros_like(layer.sym_params)
        for (i, j), u in cache.sym_u.items():
            a, b, c, d = layer.sym_params[i, j]
            entry = get_entry(layer.sym_fn[i][j])
            g = g_edge[:, i, j]
            with np.errstate(all="ignore"):
                fu = entry.f(u)
                dfu = entry.df(u)
            gc = g * c * dfu
            d_sym[i, j] = (np.sum(gc * cache.X[:, j]), np.sum(gc), np.sum(g * fu), np.sum(g))
            grad_X[:, j] += gc * a

        layer_grads[l] = {
            "spline_coeffs": d_coeffs,
            "base_weight": d_base,
            "spline_scaler": d_scaler,
            "sym_params": d_sym,
        }
        grad_H = grad_X * net.node_masks[l][None, :]
    return loss, GradientSet(layers=layer_grads)


def _combine_backward(net: KanNetwork, k: int, Y, grad_H):
    n_add, n_mul = net.arch.layers[k]
    if n_mul == 0:
        return grad_H
    grad_Y = np.zeros_like(Y)
    grad_Y[:, :n_add] = grad_H[:, :n_add]
    left = Y[:, n_add:n_add + 2 * n_mul:2]
    right = Y[:, n_add + 1:n_add + 2 * n_mul:2]
    g = grad_H[:, n_add:]
    grad_Y[:, n_add:n_add + 2 * n_mul:2] = g * right
    grad_Y[:, n_add + 1:n_add + 2 * n_mul:2] = g * left
    return grad_Y


def network_objective(net: KanNetwork, data):
    """Flat-vector objective ``x -> (loss, grad)`` bound to ``net``.

    Evaluating sets the network parameters to ``x``.
    """
    def fun(x):
        net.set_vector(x)
        loss, grads = loss_and_gradients(net, data)
        return loss, grads.flat()

    return fun


@dataclass
class GradientCheckReport:
    max_relative_deviation: float
    worst_index: int
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_deviation <= self.tolerance


def gradient_check(net: KanNetwork, data, step: float = 1e-5, tolerance: float = 1e-5,
                   abs_floor: float = 1e-8, grad_fn=None) -> GradientCheckReport:
    """Compare analytic gradients with central differences on every active parameter.

    A parameter whose absolute discrepancy is below ``abs_floor`` counts as
    exact. ``grad_fn(net, data) -> flat gradient`` overrides the analytic
    gradient, which lets tests inject a corrupted one.
    """
    if step <= 0:
        raise InvalidArgument("finite-difference step must be positive")
    work = net.copy()
    x0 = work.get_vector()
    if grad_fn is None:
        analytic = loss_and_gradients(work, data)[1].flat()
    else:
        analytic = np.asarray(grad_fn(work, data), dtype=float)
    active = np.flatnonzero(work.active_parameter_mask())
    worst, worst_idx = 0.0, -1
    for idx in active:
        x = x0.copy()
        x[idx] = x0[idx] + step
        work.set_vector(x)
        fp = loss_and_gradients(work, data)[0]
        x[idx] = x0[idx] - step
        work.set_vector(x)
        fm = loss_and_gradients(work, data)[0]
        fd = (fp - fm) / (2 * step)
        diff = abs(analytic[idx] - fd)
        dev = 0.0 if diff <= abs_floor else diff / max(abs(fd), abs(analytic[idx]))
        if dev > worst or worst_idx < 0:
            worst, worst_idx = dev, int(idx)
    work.set_vector(x0)
    return GradientCheckReport(worst, worst_idx, len(active), tolerance)


def stribeck_loss_and_gradient(theta, v, F, smoothing=50.0):
    """MSE of the smoothed Stribeck law and its gradient in ``(k1, k2, log k3, k4)``."""
    k1, k2, log_k3, k4 = theta
    k3 = np.exp(log_k3)
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise InvalidArgument("dataset is empty")
    T = np.tanh(smoothing * v)
    absv = np.abs(v)
    E = np.exp(-absv / k3)
    r = (k1 + k2 * E) * T + k4 * v - F
    loss = float(np.mean(r * r))
    two_r = 2.0 * r / len(v)
    rT = two_r * T
    grad = np.array([
        np.sum(rT),
        np.sum(rT * E),
        np.sum(rT * k2 * E * absv) / k3,
        np.sum(two_r * v),
    ])
    return loss, grad
