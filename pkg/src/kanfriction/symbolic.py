"""Replacing spline edges with closed-form functions.

Each edge hypothesis is ``c * f(a * x + b) + d`` for a library function
``f``. Candidates are found by a coarse search over ``(a, shift)`` with the
outer affine pair solved in closed form, then polished with L-BFGS.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedError, DomainError, InvalidArgument
from .library import READER_FUNCTIONS, FunctionLibrary, LibraryEntry, default_library, get_entry
from .metrics import r_squared
from .network import KanNetwork, forward_cached, predict, silu
from .optim import FitConfig, fit, lbfgs
from .splines import basis_matrix

A_GRID = np.logspace(-2, 2, 41)
N_SHIFTS = 41
SEARCH_SAMPLES = 256
REFINE_STEPS = 100
DEFAULT_ACCEPT = 0.9
R2_TIE_DECIMALS = 9

__all__ = [
    "SymbolicEdge", "SymbolicModel", "default_library", "fit_edge", "suggest_symbolic",
    "symbolify", "eval_symbolic", "render", "parse_expression",
]


@dataclass
class SymbolicEdge:
    name: str
    params: tuple  # (a, b, c, d)
    r2: float
    complexity: int = 0

    def __call__(self, x):
        a, b, c, d = self.params
        return c * get_entry(self.name).f(a * np.asarray(x, dtype=float) + b) + d


def _r2_from_moments(cov, var_f, var_y):
    with np.errstate(all="ignore"):
        r2 = cov * cov / (var_f * var_y)
    return np.where((var_f > 1e-300) & np.isfinite(r2), np.minimum(r2, 1.0), -np.inf)


def _affine_lsq(fx, y):
    """Closed-form (c, d) for y ~ c * fx + d."""
    fm, ym = fx.mean(), y.mean()
    var_f = np.mean((fx - fm) ** 2)
    if not var_f > 0:
        return 0.0, float(ym)
    c = np.mean((fx - fm) * (y - ym)) / var_f
    return float(c), float(ym - c * fm)


def _r2(y, pred):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 0.0
    with np.errstate(all="ignore"):
        ss_res = float(np.sum((y - pred) ** 2))
    if not np.isfinite(ss_res):
        return -np.inf
    return 1.0 - ss_res / ss_tot


def fit_edge(x, y, entry: LibraryEntry, refine_steps: int = REFINE_STEPS) -> SymbolicEdge:
    """Best ``c * f(a * x + b) + d`` for samples ``(x, y)``.

    The inner map is searched as ``a * (x - s)`` with ``|a|`` log-spaced in
    [1e-2, 1e2] (both signs) and the shift ``s`` spread across the sampled
    input range.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InvalidArgument("fit_edge needs paired samples")
    if x.size < 8:
        raise InvalidArgument(f"fit_edge needs at least 8 samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgument("fit_edge samples must be finite")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise InvalidArgument("fit_edge samples have constant input")
    if np.all(y == y[0]):
        return SymbolicEdge(entry.name, (1.0, 0.0, 0.0, float(y[0])), 0.0, entry.complexity)

    order = np.argsort(x, kind="stable")
    if x.size > SEARCH_SAMPLES:
        pick = order[np.linspace(0, x.size - 1, SEARCH_SAMPLES).round().astype(int)]
    else:
        pick = order
    xs, ys = x[pick], y[pick]
    a_vals = np.concatenate([-A_GRID[::-1], A_GRID])
    shifts = np.linspace(lo, hi, N_SHIFTS)
    U = a_vals[:, None, None] * (xs[None, None, :] - shifts[None, :, None])
    with np.errstate(all="ignore"):
        FX = entry.f(U)
        finite = np.all(np.isfinite(FX), axis=2)
        FX = np.where(np.isfinite(FX), FX, 0.0)
        fm = FX.mean(axis=2, keepdims=True)
        dF = FX - fm
        dy = ys - ys.mean()
        var_f = np.mean(dF * dF, axis=2)
        cov = np.mean(dF * dy, axis=2)
        r2 = np.where(finite, _r2_from_moments(cov, var_f, np.mean(dy * dy)), -np.inf)
    if not np.any(np.isfinite(r2)):
        return SymbolicEdge(entry.name, (1.0, 0.0, 0.0, float(y.mean())), 0.0, entry.complexity)
    ia, js = np.unravel_index(np.argmax(r2), r2.shape)
    a = float(a_vals[ia])
    b = float(-a * shifts[js])
    with np.errstate(all="ignore"):
        c, d = _affine_lsq(entry.f(a * x + b), y)
    start = np.array([a, b, c, d])
    best = (start, _r2(y, _eval(entry, start, x)))

    if refine_steps > 0:
        def fun(p):
            pa, pb, pc, pd = p
            with np.errstate(all="ignore"):
                u = pa * x + pb
                fu = entry.f(u)
                r = pc * fu + pd - y
                loss = float(np.mean(r * r))
                g = 2.0 * r / x.size
                gu = g * pc * entry.df(u)
                grad = np.array([np.sum(gu * x), np.sum(gu), np.sum(g * fu), np.sum(g)])
            return loss, grad

        try:
            p, _ = lbfgs(fun, start, FitConfig.lbfgs(refine_steps))
        except DivergedError:
            p = start
        r2_ref = _r2(y, _eval(entry, p, x))
        if np.all(np.isfinite(p)) and r2_ref > best[1]:
            best = (p, r2_ref)
    p, r2_best = best
    return SymbolicEdge(entry.name, tuple(float(v) for v in p), float(min(r2_best, 1.0)), entry.complexity)


def _eval(entry, p, x):
    a, b, c, d = p
    with np.errstate(all="ignore"):
        return c * entry.f(a * x + b) + d


def rank_candidates(x, y, library: FunctionLibrary) -> list[SymbolicEdge]:
    cands = [fit_edge(x, y, entry) for entry in library]
    return sorted(cands, key=lambda c: (-round(c.r2, R2_TIE_DECIMALS), c.complexity, c.name))


def edge_samples(net: KanNetwork, layer: int, i: int, j: int, data):
    """Inputs and outputs of edge ``(i, j)`` of ``layer`` over the dataset."""
    v = data.velocities if hasattr(data, "velocities") else data[0]
    fc = forward_cached(net, net.check_input(v))
    cache = fc.layer_caches[layer]
    return cache.X[:, j].copy(), cache.edges[:, i, j].copy()


def suggest_symbolic(net: KanNetwork, layer: int, i: int, j: int, library=None, data=None):
    """Library candidates for one edge, best R² first (ties go to simpler functions)."""
    if data is None:
        raise InvalidArgument("suggest_symbolic needs data to sample the edge")
    library = library or default_library()
    if not (0 <= layer < net.arch.depth):
        raise InvalidArgument(f"no layer {layer}")
    if net.effective_mask(layer)[i, j] == 0:
        raise InvalidArgument(f"edge ({layer}, {i}, {j}) is pruned")
    x, y = edge_samples(net, layer, i, j, data)
    return rank_candidates(x, y, library)


# --------------------------------------------------------------------------
# expression tree


def _lit(x: float) -> str:
    s = repr(float(x))
    return f"({s})" if s.startswith("-") else s


def _plus(left: str, x: float) -> str:
    s = repr(float(x))
    return f"{left} - {s[1:]}" if s.startswith("-") else f"{left} + {s}"


class Expr:
    def evaluate(self, env: dict) -> np.ndarray:
        raise NotImplementedError

    def render(self) -> str:
        raise NotImplementedError


@dataclass
class Var(Expr):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def render(self):
        return self.name


@dataclass
class Const(Expr):
    value: float

    def evaluate(self, env):
        return np.full(len(next(iter(env.values()))), self.value)

    def render(self):
        return _lit(self.value)


@dataclass
class InputMap(Expr):
    child: Expr
    scale: float
    shift: float

    def evaluate(self, env):
        return self.child.evaluate(env) * self.scale + self.shift

    def render(self):
        return "(" + _plus(f"{self.child.render()}*{_lit(self.scale)}", self.shift) + ")"


@dataclass
class OutputMap(Expr):
    child: Expr
    scale: float
    shift: float

    def evaluate(self, env):
        return (self.child.evaluate(env) - self.shift) / self.scale

    def render(self):
        inner = _plus(self.child.render(), -self.shift)
        return f"(({inner})/{_lit(self.scale)})"


@dataclass
class Sum(Expr):
    terms: list

    def evaluate(self, env):
        out = self.terms[0].evaluate(env)
        for t in self.terms[1:]:
            out = out + t.evaluate(env)
        return out

    def render(self):
        return "(" + " + ".join(t.render() for t in self.terms) + ")"


@dataclass
class Product(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)

    def render(self):
        return f"({self.left.render()}*{self.right.render()})"


@dataclass
class Squash(Expr):
    child: Expr

    def evaluate(self, env):
        return np.tanh(self.child.evaluate(env))

    def render(self):
        return f"tanh({self.child.render()})"


@dataclass
class EdgeExpr(Expr):
    name: str
    a: float
    b: float
    c: float
    d: float
    child: Expr

    def inner_text(self):
        return _plus(f"{_lit(self.a)}*{self.child.render()}", self.b)

    def evaluate(self, env):
        entry = get_entry(self.name)
        u = self.a * self.child.evaluate(env) + self.b
        if entry.domain is not None and not np.all(entry.domain(u)):
            raise DomainError(self.render(), entry.domain_text)
        with np.errstate(all="ignore"):
            return self.c * entry.f(u) + self.d

    def render(self):
        fx = get_entry(self.name).render(self.inner_text())
        return "(" + _plus(f"{_lit(self.c)}*{fx}", self.d) + ")"


@dataclass
class SplineExpr(Expr):
    """A learned edge that was not replaced; not expressible in closed form."""

    label: str
    coeffs: np.ndarray
    scaler: float
    base_weight: float
    grid: object
    child: Expr

    def evaluate(self, env):
        x = self.child.evaluate(env)
        phi = basis_matrix(x, self.grid) @ self.coeffs
        return self.scaler * phi + self.base_weight * silu(x)

    def render(self):
        return f"{self.label}({self.child.render()})"


@dataclass
class SymbolicModel:
    tree: Expr
    rendered: str
    variables: list
    network: KanNetwork | None = None
    report: dict = field(default_factory=dict)

    @property
    def fully_symbolic(self) -> bool:
        return not self.report.get("spline_edges")

    def evaluate(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float)
        if V.ndim == 0:
            V = V.reshape(1, 1)
        elif V.ndim == 1:
            V = V.reshape(-1, 1) if len(self.variables) == 1 else V.reshape(1, -1)
        if not np.all(np.isfinite(V)):
            raise InvalidArgument("symbolic model input must be finite")
        env = {name: V[:, k] for k, name in enumerate(self.variables)}
        return np.asarray(self.tree.evaluate(env), dtype=float)

    def __call__(self, v):
        return self.evaluate(v)


def _variables(n_inputs):
    return ["v"] if n_inputs == 1 else [f"x_{k + 1}" for k in range(n_inputs)]


def _fold(expr: Expr) -> Expr:
    """Collapse sub-trees without variables into constants."""
    if isinstance(expr, (Var, Const)):
        return expr
    if _has_var(expr):
        return expr
    return Const(float(expr.evaluate({"_": np.zeros(1)})[0]))


def _has_var(expr: Expr) -> bool:
    if isinstance(expr, Var):
        return True
    if isinstance(expr, Const):
        return False
    children = []
    for name in ("child", "left", "right"):
        if hasattr(expr, name):
            children.append(getattr(expr, name))
    children.extend(getattr(expr, "terms", []))
    return any(_has_var(c) for c in children)


def build_tree(net: KanNetwork) -> tuple[Expr, dict]:
    """Expression tree mirroring the surviving topology of ``net``."""
    names = _variables(net.n_inputs)
    nodes = []
    for k in range(net.n_inputs):
        if net.node_masks[0][k] > 0:
            nodes.append(InputMap(Var(names[k]), float(net.input_scale[k]), float(net.input_shift[k])))
        else:
            nodes.append(None)
    spline_edges, symbolic_edges = [], []
    for l, layer in enumerate(net.layers):
        eff = net.effective_mask(l)
        slots = []
        for i in range(layer.out_width):
            terms = []
            for j in range(layer.in_width):
                if eff[i, j] == 0:
                    continue
                child = nodes[j] if nodes[j] is not None else Const(0.0)
                name = layer.sym_fn[i][j]
                if name is not None:
                    a, b, c, d = (float(t) for t in layer.sym_params[i, j])
                    terms.append(_fold(EdgeExpr(name, a, b, c, d, child)))
                    symbolic_edges.append([l, i, j, name])
                else:
                    terms.append(_fold(SplineExpr(f"spline_{l}_{i}_{j}", layer.spline_coeffs[i, j].copy(),
                                                  float(layer.spline_scaler[i, j]),
                                                  float(layer.base_weight[i, j]), layer.grids[j], child)))
                    spline_edges.append([l, i, j])
            slot = Sum(terms) if len(terms) > 1 else (terms[0] if terms else Const(0.0))
            if layer.apply_output_squash:
                slot = Squash(slot)
            slots.append(_fold(slot))
        n_add, n_mul = net.arch.layers[l + 1]
        mask = net.node_masks[l + 1]
        new_nodes = [slots[i] if mask[i] > 0 else None for i in range(n_add)]
        for m in range(n_mul):
            if mask[n_add + m] > 0:
                new_nodes.append(_fold(Product(slots[n_add + 2 * m], slots[n_add + 2 * m + 1])))
            else:
                new_nodes.append(None)
        nodes = new_nodes
    if net.n_outputs != 1:
        raise InvalidArgument("symbolic extraction supports single-output networks")
    out = nodes[0] if nodes[0] is not None else Const(0.0)
    tree = OutputMap(out, float(net.output_scale[0]), float(net.output_shift[0]))
    return tree, {"symbolic_edges": symbolic_edges, "spline_edges": spline_edges}


def model_from_network(net: KanNetwork, report=None) -> SymbolicModel:
    tree, edges = build_tree(net)
    rep = dict(report or {})
    rep.update(edges)
    return SymbolicModel(tree, tree.render(), _variables(net.n_inputs), net, rep)


def symbolify(net: KanNetwork, library=None, data=None, accept_threshold: float = DEFAULT_ACCEPT,
              refit_steps: int = 50, learning_rate: float = 1.0):
    """Swap every active spline edge for its best library candidate, then refit.

    Edges whose best candidate scores below ``accept_threshold`` stay splines
    and are listed in the report. Returns ``(model, trace)``; ``trace`` is
    None when nothing new was replaced (the network is left as is).
    """
    if data is None:
        raise InvalidArgument("symbolify needs the training data")
    library = library or default_library()
    new = net.copy()
    v = data.velocities if hasattr(data, "velocities") else data[0]
    fc = forward_cached(new, new.check_input(v))
    choices, kept = [], []
    for l, layer in enumerate(new.layers):
        eff = new.effective_mask(l)
        cache = fc.layer_caches[l]
        for i in range(layer.out_width):
            for j in range(layer.in_width):
                if eff[i, j] == 0 or layer.sym_fn[i][j] is not None:
                    continue
                x, y = cache.X[:, j], cache.edges[:, i, j]
                cands = rank_candidates(x, y, library)
                top = cands[0]
                entry = {"layer": l, "edge": [i, j], "function": top.name, "r2": top.r2,
                         "params": list(top.params)}
                if top.r2 >= accept_threshold:
                    layer.sym_fn[i][j] = top.name
                    layer.sym_params[i, j] = top.params
                    choices.append(entry)
                else:
                    kept.append(entry)
    trace = None
    if choices and refit_steps > 0:
        trace = fit(new, data, FitConfig.lbfgs(refit_steps, learning_rate=learning_rate))
    report = {"accept_threshold": accept_threshold, "replaced": choices, "rejected": kept}
    if not choices and not any(fn for layer in new.layers for row in layer.sym_fn for fn in row):
        report["warning"] = "no edge met the acceptance threshold"
    model = model_from_network(new, report)
    # agreement with the network it replaced, on the training inputs
    model.report["r2_vs_network"] = r_squared(predict(net, v), model.evaluate(v))
    return model, trace


def eval_symbolic(model: SymbolicModel, v: float) -> float:
    if not np.isfinite(v):
        raise InvalidArgument("symbolic model input must be finite")
    return float(model.evaluate(np.array([float(v)]))[0])


def render(model: SymbolicModel) -> str:
    return model.rendered


# --------------------------------------------------------------------------
# reader for rendered expressions

_DOMAIN_CHECKS = {
    "sqrt": (lambda u: u >= 0, "sqrt of negative"),
    "log": (lambda u: u > 0, "log of non-positive"),
}


@dataclass
class ParsedExpression:
    text: str
    variables: list
    _tree: ast.Expression

    def evaluate(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float)
        if V.ndim <= 1:
            V = V.reshape(-1, 1) if len(self.variables) == 1 else V.reshape(1, -1)
        env = {name: V[:, k] for k, name in enumerate(self.variables)}
        return np.asarray(_eval_node(self._tree.body, env), dtype=float) * np.ones(V.shape[0])

    def __call__(self, v):
        return self.evaluate(v)


def parse_expression(text: str) -> ParsedExpression:
    """Read a rendered expression back into an evaluable object."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise InvalidArgument(f"cannot parse expression: {exc.msg}") from None
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            names.add(node.id)
        elif not isinstance(node, _ALLOWED):
            raise InvalidArgument(f"unsupported syntax {type(node).__name__} in expression")
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            if isinstance(node.func, ast.Name) and node.func.id.startswith("spline_"):
                raise InvalidArgument(f"expression still contains spline edge {node.func.id}; "
                                      "evaluate the checkpoint instead, or symbolify every edge")
            if not isinstance(node.func, ast.Name) or node.func.id not in READER_FUNCTIONS:
                raise InvalidArgument(f"unknown function in {ast.unparse(node)}")
            if len(node.args) != 1 or node.keywords:
                raise InvalidArgument(f"functions take exactly one argument: {ast.unparse(node)}")
            names.discard(node.func.id)
    if names == {"v"} or not names:
        variables = ["v"]
    elif all(n.startswith("x_") and n[2:].isdigit() for n in names):
        variables = [f"x_{k + 1}" for k in range(max(int(n[2:]) for n in names))]
    else:
        raise InvalidArgument(f"unknown variables {sorted(names)}")
    return ParsedExpression(text.strip(), variables, tree)


_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _eval_node(node, env):
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise InvalidArgument(f"unsupported literal {node.value!r}")
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.UnaryOp):
        val = _eval_node(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else +val
    if isinstance(node, ast.BinOp):
        left, right = _eval_node(node.left, env), _eval_node(node.right, env)
        if isinstance(node.op, ast.Div) and np.any(np.asarray(right) == 0):
            raise DomainError(ast.unparse(node), "division by zero")
        with np.errstate(all="ignore"):
            return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.Call):
        name = node.func.id
        arg = _eval_node(node.args[0], env)
        if name in _DOMAIN_CHECKS:
            ok, why = _DOMAIN_CHECKS[name]
            if not np.all(ok(np.asarray(arg))):
                raise DomainError(ast.unparse(node), why)
        return READER_FUNCTIONS[name](arg)
    raise InvalidArgument(f"unsupported syntax {type(node).__name__}")
