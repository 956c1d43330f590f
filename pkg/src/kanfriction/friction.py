"""Static friction laws, synthetic joint datasets and noise injection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument

SMOOTHING = 50.0


@dataclass
class StribeckParams:
    """Coefficients of the tanh-smoothed Stribeck law.

    k1 is the Coulomb level, k2 the static excess, k3 the Stribeck velocity
    and k4 the viscous coefficient.
    """

    k1: float
    k2: float
    k3: float
    k4: float
    smoothing: float = SMOOTHING

    def __post_init__(self):
        if not self.k3 > 0:
            raise InvalidArgument(f"Stribeck velocity k3 must be positive, got {self.k3}")
        if not self.smoothing > 0:
            raise InvalidArgument(f"smoothing must be positive, got {self.smoothing}")

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4])

    @classmethod
    def from_array(cls, k, smoothing=SMOOTHING):
        return cls(*(float(x) for x in k), smoothing=smoothing)


# one row per joint: (k1, k2, k3, k4)
AXIS_PARAMS = {
    1: (22.0, 8.0, 0.10, 0.03),
    2: (23.0, 10.0, 0.13, 0.16),
    3: (24.0, 12.0, 0.16, 0.29),
    4: (25.0, 14.0, 0.19, 0.42),
    5: (26.0, 16.0, 0.22, 0.55),
    6: (27.0, 18.0, 0.25, 0.68),
}

# noise level per joint for the unknown-form experiments
AXIS_NOISE_LAMBDA = {1: 0.03, 2: 0.05, 3: 0.08, 4: 0.12, 5: 0.15, 6: 0.20}


def axis_params(axis: int) -> StribeckParams:
    if axis not in AXIS_PARAMS:
        raise InvalidArgument(f"axis must be in 1..6, got {axis}")
    return StribeckParams(*AXIS_PARAMS[axis])


def stribeck(v, p: StribeckParams):
    v = np.asarray(v, dtype=float)
    return (p.k1 + p.k2 * np.exp(-np.abs(v / p.k3))) * np.tanh(p.smoothing * v) + p.k4 * v


CLASSICAL_KINDS = ("coulomb", "coulomb_static", "coulomb_viscous", "stribeck_no_viscous")
STATIC_BAND = 1e-9


def classical_model(kind: str, v, params: StribeckParams):
    """Classical static laws built from the same coefficient set.

    ``coulomb_static`` returns the static level ``k1 + k2`` inside a tiny
    zero-velocity band (signed, zero exactly at rest) and Coulomb outside.
    """
    v = np.asarray(v, dtype=float)
    Fc = params.k1
    if kind == "coulomb":
        return Fc * np.sign(v)
    if kind == "coulomb_viscous":
        return Fc * np.sign(v) + params.k4 * v
    if kind == "coulomb_static":
        Fs = params.k1 + params.k2
        return np.where(np.abs(v) < STATIC_BAND, Fs * np.sign(v), Fc * np.sign(v))
    if kind == "stribeck_no_viscous":
        return stribeck(v, replace(params, k4=0.0))
    raise InvalidArgument(f"unknown model kind {kind!r}; expected one of {CLASSICAL_KINDS}")


@dataclass
class NoiseSpec:
    mode: str = "quarter_range"
    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("quarter_range", "half_lambda"):
            raise InvalidArgument(f"unknown noise mode {self.mode!r}")
        if self.lam < 0:
            raise InvalidArgument("noise level lambda must be non-negative")

    def std(self, F) -> float:
        span = float(np.max(F) - np.min(F))
        if self.mode == "quarter_range":
            return 0.25 * span
        return 0.5 * self.lam * span


@dataclass
class FrictionDataset:
    velocities: np.ndarray
    torques: np.ndarray
    provenance: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.torques = np.asarray(self.torques, dtype=float)
        if self.velocities.ndim != 1 or self.velocities.shape != self.torques.shape:
            raise InvalidArgument("velocities and torques must be 1-D arrays of equal length")
        if len(self.velocities) < 1:
            raise InvalidArgument("dataset needs at least one sample")
        if not (np.all(np.isfinite(self.velocities)) and np.all(np.isfinite(self.torques))):
            raise InvalidArgument("dataset values must be finite")
        self.channels = {k: np.asarray(c, dtype=float) for k, c in self.channels.items()}
        for name, c in self.channels.items():
            if c.shape != self.velocities.shape:
                raise InvalidArgument(f"channel {name!r} length does not match velocities")

    def __len__(self):
        return len(self.velocities)

    def take(self, idx) -> "FrictionDataset":
        return FrictionDataset(self.velocities[idx], self.torques[idx], dict(self.provenance),
                               {k: c[idx] for k, c in self.channels.items()})


def generate_axis_dataset(axis: int, N: int = 1000, v_range=(-1.0, 1.0), seed: int = 0) -> FrictionDataset:
    p = axis_params(axis)
    if N < 1:
        raise InvalidArgument("N must be at least 1")
    lo, hi = v_range
    if not hi > lo:
        raise InvalidArgument(f"empty velocity range {v_range}")
    rng = np.random.default_rng(seed)
    v = rng.uniform(lo, hi, size=int(N))
    return FrictionDataset(v, stribeck(v, p), {
        "kind": "synthetic", "axis": axis, "params": list(p.as_array()), "seed": seed,
        "v_range": [float(lo), float(hi)],
    })


def add_noise(data: FrictionDataset, spec: NoiseSpec) -> FrictionDataset:
    std = spec.std(data.torques)
    # child stream so the same seed never reuses the velocity sampler's draws
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1,)))
    noise = rng.normal(0.0, 1.0, size=len(data)) * std
    return FrictionDataset(data.velocities.copy(), data.torques + noise, {
        "kind": "noisy", "base": data.provenance, "mode": spec.mode, "lambda": spec.lam,
        "seed": spec.seed, "std": std,
    }, {k: c.copy() for k, c in data.channels.items()})


def subsample(data: FrictionDataset, fraction: float, seed: int = 0) -> FrictionDataset:
    if not 0 < fraction <= 1:
        raise InvalidArgument(f"fraction must lie in (0, 1], got {fraction}")
    n = int(round(fraction * len(data)))
    if n < 1:
        raise InvalidArgument("subsample would be empty")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(data), size=n, replace=False)
    out = data.take(idx)
    out.provenance = {"kind": "subsample", "base": data.provenance, "fraction": fraction, "seed": seed}
    return out


def read_csv(path) -> FrictionDataset:
    """Read ``velocity,torque[,extra...]`` with a mandatory header line."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(str(path), "empty file") from None
        for required in ("velocity", "torque"):
            if required not in header:
                raise FormatError(f"{path}:header", f"missing column {required!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}", f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}", str(exc)) from None
    if not rows:
        raise FormatError(str(path), "no data rows")
    table = np.array(rows)
    cols = {name: table[:, k] for k, name in enumerate(header)}
    v, F = cols.pop("velocity"), cols.pop("torque")
    return FrictionDataset(v, F, {"kind": "file", "path": str(path)}, cols)


def write_csv(data: FrictionDataset, path) -> None:
    names = ["velocity", "torque", *data.channels]
    cols = [data.velocities, data.torques, *data.channels.values()]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
