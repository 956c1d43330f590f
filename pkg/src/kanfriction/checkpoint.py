"""JSON checkpoints for :class:`~kanfriction.network.KanNetwork`.

Floats are written with ``repr`` precision (shortest round-trip form, at
most 17 significant digits), so save -> load -> save reproduces the file
byte for byte. Arrays are nested lists in row-major order.

Schema (``format_version`` 1)::

    {
      "format_version": 1,
      "arch": {"layers": [1, [5, 2], 1], "grid_G": 10, "order_r": 3},
      "seed": 0,
      "calibrated": true,
      "normalization": {"input":  {"scale": [...], "shift": [...]},
                        "output": {"scale": [...], "shift": [...]}},
      "node_masks": [[...], ...],              # one list per node layer
      "layers": [{
          "in_width": 1, "out_width": 9, "apply_output_squash": true,
          "grids": [{"interior_range": [-1.0, 1.0], "num_intervals": 10, "order": 3}],
          "spline_coeffs": [[[...]]],          # [out][in][G + r]
          "base_weight": [[...]], "spline_scaler": [[...]], "edge_mask": [[...]],
          "symbolic": [[null | {"fn": "tanh", "params": [a, b, c, d]}]]
      }, ...]
    }
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .library import default_library
from .network import ArchSpec, KanLayer, KanNetwork
from .splines import make_uniform_grid

FORMAT_VERSION = 1


def network_to_dict(net: KanNetwork) -> dict:
    layers = []
    for layer in net.layers:
        layers.append({
            "in_width": layer.in_width,
            "out_width": layer.out_width,
            "apply_output_squash": bool(layer.apply_output_squash),
            "grids": [{"interior_range": list(g.interior_range), "num_intervals": g.num_intervals,
                       "order": g.order} for g in layer.grids],
            "spline_coeffs": layer.spline_coeffs.tolist(),
            "base_weight": layer.base_weight.tolist(),
            "spline_scaler": layer.spline_scaler.tolist(),
            "edge_mask": layer.edge_mask.tolist(),
            "symbolic": [[None if fn is None else {"fn": fn, "params": layer.sym_params[i, j].tolist()}
                          for j, fn in enumerate(row)] for i, row in enumerate(layer.sym_fn)],
        })
    return {
        "format_version": FORMAT_VERSION,
        "arch": net.arch.to_json(),
        "seed": net.rng_seed,
        "calibrated": bool(net.calibrated),
        "normalization": {
            "input": {"scale": net.input_scale.tolist(), "shift": net.input_shift.tolist()},
            "output": {"scale": net.output_scale.tolist(), "shift": net.output_shift.tolist()},
        },
        "node_masks": [m.tolist() for m in net.node_masks],
        "layers": layers,
    }


def dumps(net: KanNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def save_checkpoint(net: KanNetwork, path) -> None:
    Path(path).write_text(dumps(net))


def _get(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(path, f"missing field {key!r}")
    return obj[key]


def _array(value, shape, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(path, "not a numeric array") from None
    if arr.shape != tuple(shape):
        raise FormatError(path, f"shape {arr.shape} does not match expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(path, "contains non-finite values")
    return arr


def network_from_dict(doc: dict) -> KanNetwork:
    version = _get(doc, "format_version", "format_version")
    if version != FORMAT_VERSION:
        raise FormatError("format_version", f"unsupported version {version!r}")
    a = _get(doc, "arch", "arch")
    try:
        arch = ArchSpec(_get(a, "layers", "arch.layers"), _get(a, "grid_G", "arch.grid_G"),
                        _get(a, "order_r", "arch.order_r"))
    except InvalidArgument as exc:
        raise FormatError("arch", str(exc)) from None
    norm = _get(doc, "normalization", "normalization")
    n_in, n_out = arch.n_nodes(0), arch.n_nodes(-1)
    fields = {}
    for side, n in (("input", n_in), ("output", n_out)):
        blk = _get(norm, side, f"normalization.{side}")
        for key in ("scale", "shift"):
            fields[f"{side}_{key}"] = _array(_get(blk, key, f"normalization.{side}.{key}"), (n,),
                                             f"normalization.{side}.{key}")
    raw_masks = _get(doc, "node_masks", "node_masks")
    if not isinstance(raw_masks, list) or len(raw_masks) != arch.depth + 1:
        raise FormatError("node_masks", f"expected {arch.depth + 1} node layers")
    node_masks = [_array(m, (arch.n_nodes(k),), f"node_masks[{k}]") for k, m in enumerate(raw_masks)]
    raw_layers = _get(doc, "layers", "layers")
    if not isinstance(raw_layers, list) or len(raw_layers) != arch.depth:
        raise FormatError("layers", f"expected {arch.depth} layers")
    library = default_library()
    layers = []
    for l, lay in enumerate(raw_layers):
        p = f"layers[{l}]"
        li, lo = arch.n_nodes(l), arch.n_slots(l + 1)
        if _get(lay, "in_width", p) != li or _get(lay, "out_width", p) != lo:
            raise FormatError(f"{p}.in_width", f"widths do not match architecture ({li} -> {lo})")
        raw_grids = _get(lay, "grids", p)
        if not isinstance(raw_grids, list) or len(raw_grids) != li:
            raise FormatError(f"{p}.grids", f"expected {li} grids")
        grids = []
        for j, g in enumerate(raw_grids):
            gp = f"{p}.grids[{j}]"
            try:
                grids.append(make_uniform_grid(_get(g, "interior_range", gp), _get(g, "num_intervals", gp),
                                               _get(g, "order", gp)))
            except InvalidArgument as exc:
                raise FormatError(gp, str(exc)) from None
        nb = grids[0].num_basis
        sym_fn = [[None] * li for _ in range(lo)]
        sym_params = np.zeros((lo, li, 4))
        raw_sym = _get(lay, "symbolic", p)
        if not isinstance(raw_sym, list) or len(raw_sym) != lo or any(
                not isinstance(row, list) or len(row) != li for row in raw_sym):
            raise FormatError(f"{p}.symbolic", f"expected a {lo}x{li} table")
        for i, row in enumerate(raw_sym):
            for j, cell in enumerate(row):
                if cell is None:
                    continue
                cp = f"{p}.symbolic[{i}][{j}]"
                name = _get(cell, "fn", cp)
                if name not in library:
                    raise FormatError(f"{cp}.fn", f"unknown library function {name!r}")
                sym_fn[i][j] = name
                sym_params[i, j] = _array(_get(cell, "params", cp), (4,), f"{cp}.params")
        try:
            layers.append(KanLayer(
                in_width=li, out_width=lo,
                spline_coeffs=_array(_get(lay, "spline_coeffs", p), (lo, li, nb), f"{p}.spline_coeffs"),
                base_weight=_array(_get(lay, "base_weight", p), (lo, li), f"{p}.base_weight"),
                spline_scaler=_array(_get(lay, "spline_scaler", p), (lo, li), f"{p}.spline_scaler"),
                edge_mask=_array(_get(lay, "edge_mask", p), (lo, li), f"{p}.edge_mask"),
                grids=grids,
                apply_output_squash=bool(_get(lay, "apply_output_squash", p)),
                sym_fn=sym_fn, sym_params=sym_params,
            ))
        except InvalidArgument as exc:
            raise FormatError(p, str(exc)) from None
    return KanNetwork(arch=arch, layers=layers, node_masks=node_masks, rng_seed=int(_get(doc, "seed", "seed")),
                      calibrated=bool(_get(doc, "calibrated", "calibrated")), **fields)


def load_checkpoint(path) -> KanNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(str(path), f"unreadable: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(str(path), f"invalid JSON: {exc}") from None
    return network_from_dict(doc)
