"""Kolmogorov-Arnold networks with spline edges, residual base path and
multiplicative nodes.

Layer ``l`` maps the node outputs of node-layer ``l`` to the pre-node slots of
node-layer ``l + 1``. Additive nodes own one slot; a multiplicative node owns
two consecutive slots (after all additive slots) and outputs their product.
Hidden layers squash their slot sums with ``tanh``; the final layer is linear
and its output is mapped back to physical units by the output normalization.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .library import get_entry
from .splines import SplineGrid, basis_and_derivative, basis_matrix, make_uniform_grid


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_derivative(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass
class ArchSpec:
    layers: list
    grid_G: int = 10
    order_r: int = 3

    def __post_init__(self):
        self.layers = [self._normalize_entry(e) for e in self.layers]
        if len(self.layers) < 2:
            raise InvalidArgument("architecture needs at least an input and an output layer")
        for pos in (0, -1):
            n_add, n_mul = self.layers[pos]
            if n_mul:
                raise InvalidArgument("input and output layers cannot hold multiplicative nodes")
        for k, (n_add, n_mul) in enumerate(self.layers):
            if n_add + n_mul < 1:
                raise InvalidArgument(f"layer {k} has no nodes")
        if int(self.grid_G) != self.grid_G or self.grid_G < 1:
            raise InvalidArgument("grid_G must be a positive integer")
        if int(self.order_r) != self.order_r or self.order_r < 1:
            raise InvalidArgument("order_r must be a positive integer")
        self.grid_G, self.order_r = int(self.grid_G), int(self.order_r)

    @staticmethod
    def _normalize_entry(entry):
        if isinstance(entry, (list, tuple)):
            if len(entry) != 2:
                raise InvalidArgument(f"layer entry {entry!r} must be [n_add, n_mul]")
            n_add, n_mul = entry
        else:
            n_add, n_mul = entry, 0
        for v in (n_add, n_mul):
            if isinstance(v, bool) or int(v) != v or v < 0:
                raise InvalidArgument(f"invalid layer entry {entry!r}")
        return (int(n_add), int(n_mul))

    @classmethod
    def parse(cls, text: str, grid_G: int = 10, order_r: int = 3) -> "ArchSpec":
        """Parse the bracket notation, e.g. ``"[1,[5,2],1]"``."""
        try:
            layers = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"cannot parse architecture {text!r}: {exc}") from None
        if not isinstance(layers, list):
            raise InvalidArgument(f"architecture must be a list, got {text!r}")
        return cls(layers, grid_G, order_r)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def n_nodes(self, k: int) -> int:
        n_add, n_mul = self.layers[k]
        return n_add + n_mul

    def n_slots(self, k: int) -> int:
        n_add, n_mul = self.layers[k]
        return n_add + 2 * n_mul

    def to_json(self):
        return {
            "layers": [a if m == 0 and k in (0, self.depth) else [a, m]
                       for k, (a, m) in enumerate(self.layers)],
            "grid_G": self.grid_G,
            "order_r": self.order_r,
        }

    def __str__(self):
        parts = []
        for a, m in self.layers:
            parts.append(str(a) if m == 0 else f"[{a},{m}]")
        return "[" + ",".join(parts) + "]"


@dataclass
class KanLayer:
    in_width: int
    out_width: int
    spline_coeffs: np.ndarray
    base_weight: np.ndarray
    spline_scaler: np.ndarray
    edge_mask: np.ndarray
    grids: list
    apply_output_squash: bool = False
    # symbolic edges: name per edge (None = spline edge) and (a, b, c, d)
    sym_fn: list = field(default=None)
    sym_params: np.ndarray = field(default=None)

    def __post_init__(self):
        lo, li = self.out_width, self.in_width
        if self.sym_fn is None:
            self.sym_fn = [[None] * li for _ in range(lo)]
        if self.sym_params is None:
            self.sym_params = np.zeros((lo, li, 4))
        if len(self.grids) != li:
            raise InvalidArgument("one spline grid per input is required")
        nb = {g.num_basis for g in self.grids}
        if len(nb) != 1:
            raise InvalidArgument("all input grids of a layer must share (G, r)")
        shapes = {
            "spline_coeffs": (lo, li, nb.pop()),
            "base_weight": (lo, li),
            "spline_scaler": (lo, li),
            "edge_mask": (lo, li),
            "sym_params": (lo, li, 4),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise InvalidArgument(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def num_basis(self) -> int:
        return self.grids[0].num_basis

    @property
    def symbolic_mask(self) -> np.ndarray:
        return np.array([[fn is not None for fn in row] for row in self.sym_fn], dtype=bool).reshape(
            self.out_width, self.in_width)

    def shared_grid(self) -> SplineGrid | None:
        g0 = self.grids[0]
        return g0 if all(g == g0 for g in self.grids[1:]) else None

    def basis(self, X, derivative=False):
        """Basis values (and derivatives) for a batch: shape (N, l_i, G + r)."""
        shared = self.shared_grid()
        if shared is not None:
            if derivative:
                return basis_and_derivative(X, shared)
            return basis_matrix(X, shared), None
        Bs, dBs = [], []
        for j, g in enumerate(self.grids):
            if derivative:
                b, db = basis_and_derivative(X[:, j], g)
                dBs.append(db)
            else:
                b = basis_matrix(X[:, j], g)
            Bs.append(b)
        B = np.stack(Bs, axis=1)
        return (B, np.stack(dBs, axis=1)) if derivative else (B, None)


@dataclass
class LayerCache:
    X: np.ndarray
    B: np.ndarray
    dB: np.ndarray | None
    phi: np.ndarray
    base: np.ndarray
    edges: np.ndarray  # masked edge outputs, (N, l_o, l_i)
    mask: np.ndarray
    pre: np.ndarray
    Y: np.ndarray
    sym_u: dict


def _layer_edges(X, layer: KanLayer, mask, derivative=False):
    B, dB = layer.basis(X, derivative=derivative)
    phi = np.einsum("nim,oim->noi", B, layer.spline_coeffs)
    base = silu(X)
    edges = layer.spline_scaler[None] * phi + layer.base_weight[None] * base[:, None, :]
    sym_u = {}
    for i in range(layer.out_width):
        for j in range(layer.in_width):
            name = layer.sym_fn[i][j]
            if name is None:
                continue
            a, b, c, d = layer.sym_params[i, j]
            u = a * X[:, j] + b
            with np.errstate(all="ignore"):
                edges[:, i, j] = c * get_entry(name).f(u) + d
            sym_u[(i, j)] = u
    edges = edges * mask[None]
    return B, dB, phi, base, edges, sym_u


def layer_forward_cached(X, layer: KanLayer, mask=None, derivative=False) -> LayerCache:
    if mask is None:
        mask = layer.edge_mask
    B, dB, phi, base, edges, sym_u = _layer_edges(X, layer, mask, derivative)
    pre = edges.sum(axis=2)
    Y = np.tanh(pre) if layer.apply_output_squash else pre
    return LayerCache(X, B, dB, phi, base, edges, mask, pre, Y, sym_u)


def layer_forward(X, layer: KanLayer) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != layer.in_width:
        raise InvalidArgument(f"layer expects input of width {layer.in_width}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("layer input must be finite")
    return layer_forward_cached(X, layer).Y


@dataclass
class KanNetwork:
    arch: ArchSpec
    layers: list
    node_masks: list
    input_scale: np.ndarray
    input_shift: np.ndarray
    output_scale: np.ndarray
    output_shift: np.ndarray
    rng_seed: int = 0
    calibrated: bool = False

    @property
    def n_inputs(self) -> int:
        return self.arch.n_nodes(0)

    @property
    def n_outputs(self) -> int:
        return self.arch.n_nodes(-1)

    def copy(self) -> "KanNetwork":
        return copy.deepcopy(self)

    def slot_mask(self, k: int) -> np.ndarray:
        """Node mask of node-layer ``k`` expanded onto its pre-node slots."""
        n_add, n_mul = self.arch.layers[k]
        m = self.node_masks[k]
        return np.concatenate([m[:n_add], np.repeat(m[n_add:], 2)])

    def effective_mask(self, l: int) -> np.ndarray:
        return (self.layers[l].edge_mask
                * self.node_masks[l][None, :]
                * self.slot_mask(l + 1)[:, None])

    def combine(self, k: int, Y: np.ndarray) -> np.ndarray:
        """Turn pre-node slot values of node-layer ``k`` into node outputs."""
        n_add, n_mul = self.arch.layers[k]
        if n_mul == 0:
            H = Y
        else:
            prods = Y[:, n_add::2][:, :n_mul] * Y[:, n_add + 1::2][:, :n_mul]
            H = np.concatenate([Y[:, :n_add], prods], axis=1)
        return H * self.node_masks[k][None, :]

    def calibrate(self, v, F) -> None:
        """Freeze affine maps sending the observed input/target ranges onto [-1, 1]."""
        v = np.asarray(v, dtype=float).reshape(len(v), -1)
        F = np.asarray(F, dtype=float).reshape(len(F), -1)
        self.input_scale, self.input_shift = _range_map(v)
        self.output_scale, self.output_shift = _range_map(F)
        self.calibrated = True

    def normalize_input(self, V):
        return V * self.input_scale + self.input_shift

    def denormalize_output(self, Y):
        return (Y - self.output_shift) / self.output_scale

    def check_input(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1) if self.n_inputs == 1 else V.reshape(1, -1)
        if V.ndim != 2 or V.shape[1] != self.n_inputs:
            raise InvalidArgument(f"network expects {self.n_inputs} input(s), got shape {V.shape}")
        if not np.all(np.isfinite(V)):
            raise InvalidArgument("network input must be finite")
        return V

    def trainable_arrays(self):
        """(layer index, name, array) in flat-vector order."""
        for l, layer in enumerate(self.layers):
            for name in ("spline_coeffs", "base_weight", "spline_scaler", "sym_params"):
                yield l, name, getattr(layer, name)

    def get_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, _, a in self.trainable_arrays()])

    def set_vector(self, x: np.ndarray) -> None:
        arrays = list(self.trainable_arrays())
        total = sum(a.size for _, _, a in arrays)
        if total != len(x):
            raise InvalidArgument(f"parameter vector length {len(x)} does not match network ({total})")
        pos = 0
        for l, name, a in arrays:
            n = a.size
            setattr(self.layers[l], name, np.array(x[pos:pos + n], dtype=float).reshape(a.shape))
            pos += n

    def active_parameter_mask(self) -> np.ndarray:
        """Boolean flat mask of parameters that can influence the output."""
        parts = []
        for l, layer in enumerate(self.layers):
            eff = self.effective_mask(l) > 0
            sym = layer.symbolic_mask
            numeric = eff & ~sym
            parts.append(np.repeat(numeric[:, :, None], layer.num_basis, axis=2).ravel())
            parts.append(numeric.ravel())
            parts.append(numeric.ravel())
            parts.append(np.repeat((eff & sym)[:, :, None], 4, axis=2).ravel())
        return np.concatenate(parts)


def _range_map(A):
    lo, hi = A.min(axis=0), A.max(axis=0)
    span = hi - lo
    scale = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 1.0)
    shift = np.where(span > 0, -(hi + lo) / np.where(span > 0, span, 1.0), -lo)
    return scale, shift


def init_network(arch: ArchSpec, seed: int = 0) -> KanNetwork:
    if not isinstance(arch, ArchSpec):
        raise InvalidArgument("init_network expects an ArchSpec")
    rng = np.random.default_rng(seed)
    G, r = arch.grid_G, arch.order_r
    grid = make_uniform_grid((-1.0, 1.0), G, r)
    layers = []
    for l in range(arch.depth):
        li, lo = arch.n_nodes(l), arch.n_slots(l + 1)
        bound = 1.0 / np.sqrt(li)
        layers.append(KanLayer(
            in_width=li,
            out_width=lo,
            spline_coeffs=rng.normal(0.0, 0.1 / np.sqrt(G + r), size=(lo, li, G + r)),
            base_weight=rng.uniform(-bound, bound, size=(lo, li)),
            spline_scaler=np.ones((lo, li)),
            edge_mask=np.ones((lo, li)),
            grids=[grid] * li,
            apply_output_squash=l < arch.depth - 1,
        ))
    n_in, n_out = arch.n_nodes(0), arch.n_nodes(-1)
    return KanNetwork(
        arch=arch,
        layers=layers,
        node_masks=[np.ones(arch.n_nodes(k)) for k in range(arch.depth + 1)],
        input_scale=np.ones(n_in),
        input_shift=np.zeros(n_in),
        output_scale=np.ones(n_out),
        output_shift=np.zeros(n_out),
        rng_seed=int(seed),
    )


@dataclass
class ForwardCache:
    V: np.ndarray
    layer_caches: list
    node_outputs: list  # node outputs per node-layer, after masks
    prediction: np.ndarray


def forward_cached(net: KanNetwork, V, derivative=False) -> ForwardCache:
    X = net.normalize_input(V) * net.node_masks[0][None, :]
    outputs = [X]
    caches = []
    for l, layer in enumerate(net.layers):
        cache = layer_forward_cached(X, layer, net.effective_mask(l), derivative)
        caches.append(cache)
        X = net.combine(l + 1, cache.Y)
        outputs.append(X)
    return ForwardCache(V, caches, outputs, net.denormalize_output(X))


def network_forward(V, net: KanNetwork) -> np.ndarray:
    """Predictions in physical units, shape (N, n_outputs)."""
    V = net.check_input(V)
    return forward_cached(net, V).prediction


def predict(net: KanNetwork, v) -> np.ndarray:
    """Convenience for single-output nets: 1-D predictions."""
    return network_forward(v, net)[:, 0]


def count_parameters(net: KanNetwork) -> list[tuple[int, int, int]]:
    return [layer_parameter_counts(layer.in_width, layer.out_width, layer.grids[0].num_intervals,
                                   layer.grids[0].order) for layer in net.layers]


def layer_parameter_counts(l_i: int, l_o: int, G: int, r: int) -> tuple[int, int, int]:
    return (l_o * l_i * (G + r), l_i * l_o, l_i * l_o)
