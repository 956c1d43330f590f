"""Unary primitives available to symbolic edges.

Each entry carries the function, its derivative, a complexity rank used to
break ties between equally good fits, a domain predicate and a renderer that
writes ``f(u)`` given the text of ``u``. Renderers emit the same operation
sequence the function performs so that a parsed expression evaluates to
bit-identical values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class LibraryEntry:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    complexity: int
    render: Callable[[str], str]
    domain: Callable[[np.ndarray], np.ndarray] | None = None
    domain_text: str = ""


def _everywhere(u):
    return np.ones(np.shape(u), dtype=bool)


_ENTRIES = [
    LibraryEntry("x", lambda u: u * 1.0, lambda u: np.ones_like(u), 1, lambda s: f"({s})"),
    LibraryEntry("x^2", lambda u: u**2, lambda u: 2 * u, 2, lambda s: f"({s})**2"),
    LibraryEntry("x^3", lambda u: u**3, lambda u: 3 * u**2, 3, lambda s: f"({s})**3"),
    LibraryEntry("x^4", lambda u: u**4, lambda u: 4 * u**3, 3, lambda s: f"({s})**4"),
    LibraryEntry("x^5", lambda u: u**5, lambda u: 5 * u**4, 3, lambda s: f"({s})**5"),
    LibraryEntry("1/x", lambda u: 1 / u, lambda u: -1 / u**2, 2, lambda s: f"(1/({s}))",
                 lambda u: u != 0, "division by zero"),
    LibraryEntry("1/x^2", lambda u: 1 / u**2, lambda u: -2 / u**3, 3, lambda s: f"(1/({s})**2)",
                 lambda u: u != 0, "division by zero"),
    LibraryEntry("1/x^5", lambda u: 1 / u**5, lambda u: -5 / u**6, 4, lambda s: f"(1/({s})**5)",
                 lambda u: u != 0, "division by zero"),
    LibraryEntry("sqrt", np.sqrt, lambda u: 0.5 / np.sqrt(u), 2, lambda s: f"sqrt({s})",
                 lambda u: u >= 0, "sqrt of negative"),
    LibraryEntry("log", np.log, lambda u: 1 / u, 2, lambda s: f"log({s})",
                 lambda u: u > 0, "log of non-positive"),
    LibraryEntry("exp", np.exp, np.exp, 2, lambda s: f"exp({s})"),
    LibraryEntry("sin", np.sin, np.cos, 2, lambda s: f"sin({s})"),
    LibraryEntry("cos", np.cos, lambda u: -np.sin(u), 2, lambda s: f"cos({s})"),
    LibraryEntry("tan", np.tan, lambda u: 1 / np.cos(u) ** 2, 3, lambda s: f"tan({s})",
                 lambda u: np.cos(u) != 0, "tan pole"),
    LibraryEntry("tanh", np.tanh, lambda u: 1 - np.tanh(u) ** 2, 3, lambda s: f"tanh({s})"),
    LibraryEntry("arctan", np.arctan, lambda u: 1 / (1 + u**2), 3, lambda s: f"arctan({s})"),
    LibraryEntry("gaussian", lambda u: np.exp(-(u**2)), lambda u: -2 * u * np.exp(-(u**2)), 3,
                 lambda s: f"exp(-({s})**2)"),
    LibraryEntry("abs", np.abs, np.sign, 2, lambda s: f"abs({s})"),
]

# functions the expression reader resolves by name
READER_FUNCTIONS = {
    "sqrt": np.sqrt, "log": np.log, "exp": np.exp, "sin": np.sin, "cos": np.cos,
    "tan": np.tan, "tanh": np.tanh, "arctan": np.arctan, "abs": np.abs,
}


class FunctionLibrary:
    """Ordered, name-unique collection of :class:`LibraryEntry`."""

    def __init__(self, entries):
        self.entries = list(entries)
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise InvalidArgument("library names must be unique")
        self._by_name = {e.name: e for e in self.entries}

    def __getitem__(self, name) -> LibraryEntry:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidArgument(f"unknown library function {name!r}") from None

    def __contains__(self, name):
        return name in self._by_name

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self):
        return [e.name for e in self.entries]

    def subset(self, names):
        return FunctionLibrary([self[n] for n in names])


def default_library() -> FunctionLibrary:
    return FunctionLibrary(_ENTRIES)


def get_entry(name: str) -> LibraryEntry:
    return default_library()[name]
