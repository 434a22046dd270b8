"""Long-term simulation of compiled models over sampled input signals, and the
relative root-mean-squared output error used for fitting and ranking.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import engine
from .modelspace import CompiledModel


class DataError(Exception):
    """A dataset violates its shape or sanity contract."""


@dataclass
class Dataset:
    """Uniformly sampled signals with train/validation/test boundaries.

    `columns` maps signal names to arrays over the common time grid; the
    split is [0, train_end), [train_end, val_end), [val_end, n).
    """

    t: np.ndarray
    columns: dict[str, np.ndarray]
    train_end: int
    val_end: int

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.shape[0]
        if n < 2:
            raise DataError("time grid needs at least two samples")
        steps = np.diff(self.t)
        dt = self.t[1] - self.t[0]
        if dt <= 0 or np.any(np.abs(steps - dt) >= 1e-9 * dt):
            raise DataError("time grid must be strictly increasing and uniform")
        for name in self.columns:
            col = np.asarray(self.columns[name], dtype=float)
            if col.shape != (n,):
                raise DataError(f"column {name!r} has {col.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(col)):
                bad = int(np.flatnonzero(~np.isfinite(col))[0])
                raise DataError(f"column {name!r} has a non-finite value at row {bad}")
            self.columns[name] = col
        if not (0 < self.train_end < self.val_end <= n):
            raise DataError(f"split 0 < {self.train_end} < {self.val_end} <= {n} violated")

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def train_range(self) -> tuple[int, int]:
        return (0, self.train_end)

    @property
    def validation_range(self) -> tuple[int, int]:
        return (self.train_end, self.val_end)

    @property
    def test_range(self) -> tuple[int, int]:
        return (self.val_end, self.n)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"dataset has no column {name!r} (have {sorted(self.columns)})")
        return self.columns[name]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        writer.writerow(["t"] + names)
        for i in range(self.n):
            writer.writerow([repr(float(self.t[i]))] + [repr(float(self.columns[c][i])) for c in names])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, train_end: int, val_end: int) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty CSV") from None
        if not header or header[0] != "t":
            raise DataError("first CSV column must be 't'")
        names = header[1:]
        rows = [row for row in reader if row]
        try:
            data = np.array([[float(x) for x in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise DataError(f"non-numeric cell: {exc}") from None
        if data.ndim != 2 or data.shape[1] != len(header):
            raise DataError("ragged CSV rows")
        return cls(t=data[:, 0], columns={c: data[:, i + 1] for i, c in enumerate(names)},
                   train_end=train_end, val_end=val_end)

    @classmethod
    def load(cls, path, train_end: int, val_end: int) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read(), train_end, val_end)


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-4
    max_steps: int = 100_000  # internal steps per output interval
    hold: str = "zoh"  # "zoh" | "linear"

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.hold not in ("zoh", "linear"):
            raise ValueError("hold must be 'zoh' or 'linear'")

    def tighter(self, factor: float = 10.0) -> "SolverConfig":
        return replace(self, abs_tol=self.abs_tol / factor, rel_tol=self.rel_tol / factor)


@dataclass
class Trajectory:
    """Simulated state columns over (a prefix of) the dataset grid."""

    t: np.ndarray
    names: list[str]  # state variable names
    data_names: list[str]  # dataset column each state corresponds to
    values: np.ndarray  # shape (n, n_states); NaN beyond fail_index
    ok: bool
    fail_index: int  # last valid grid index; n-1 when ok

    def state(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def signal(self, column: str) -> np.ndarray:
        """State column matching a dataset column name."""
        if column not in self.data_names:
            raise KeyError(f"no simulated state is bound to data column {column!r}")
        return self.values[:, self.data_names.index(column)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + self.names)
        for i in range(self.t.shape[0]):
            writer.writerow([repr(float(self.t[i]))] + [repr(float(v)) for v in self.values[i]])
        return buf.getvalue()


def input_matrix(model: CompiledModel, data: Dataset) -> np.ndarray:
    """Exogenous input samples in model order; values outside a declared
    operating range are projected onto it before being fed to the model."""
    U = np.empty((data.n, len(model.input_names)))
    for j, column in enumerate(model.input_data):
        col = data.column(column)
        rng = model.input_ranges[j]
        if rng is not None:
            col = np.clip(col, rng[0], rng[1])
        U[:, j] = col
    return U


def simulate(model: CompiledModel, params, data: Dataset, cfg: SolverConfig | None = None,
             end_index: int | None = None) -> Trajectory:
    """Integrate from the scenario initial conditions across the grid in one
    pass. Failures are in-band: `ok` is False and `fail_index` marks the last
    valid point."""
    trajs, reached = simulate_batch(model, np.asarray(params, dtype=float)[None, :],
                                    data, cfg, end_index)
    n_out = trajs.shape[1]
    return Trajectory(
        t=data.t[:n_out], names=list(model.state_names), data_names=list(model.state_data),
        values=trajs[0], ok=bool(reached[0] == n_out - 1), fail_index=int(reached[0]),
    )


def simulate_batch(model: CompiledModel, params: np.ndarray, data: Dataset,
                   cfg: SolverConfig | None = None, end_index: int | None = None):
    """Vectorized form of `simulate` over rows of `params`; returns
    (trajectories, last_valid_index)."""
    cfg = cfg or SolverConfig()
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape[1] != model.n_params:
        raise ValueError(f"params must be (batch, {model.n_params})")
    n_out = data.n if end_index is None else int(end_index)
    if not 2 <= n_out <= data.n:
        raise ValueError("end_index out of range")
    U = input_matrix(model, data)
    hold = engine.HOLD_ZERO_ORDER if cfg.hold == "zoh" else engine.HOLD_LINEAR
    return engine.integrate_batch(model.bytecode(), model.initial, U, data.dt, params,
                                  n_out, cfg.abs_tol, cfg.rel_tol, cfg.max_steps, hold)


# ------------------------------------------------------------------- scoring

#: Eq-as-printed uses the simulated signal in the denominator spread; the
#: conventional variant uses the measured one.
DENOMINATOR_MODES = ("simulated", "measured")


def rrmse(measured, simulated, rng: tuple[int, int] | None = None,
          denominator: str = "simulated") -> float:
    """Relative root-mean-squared error over an index range.

    sqrt( sum (y - yhat)^2 / sum (ybar - d)^2 ) with ybar the mean of the
    measured signal over the range and d the simulated (default) or measured
    signal. Returns +inf when the denominator vanishes or the simulation does
    not cover the range.
    """
    if denominator not in DENOMINATOR_MODES:
        raise ValueError(f"denominator must be one of {DENOMINATOR_MODES}")
    measured = np.asarray(measured, dtype=float)
    simulated = np.asarray(simulated, dtype=float)
    if rng is not None:
        lo, hi = rng
        measured = measured[lo:hi]
        simulated = simulated[lo:hi]
    if measured.shape[0] == 0:
        raise ValueError("empty index range")
    if not np.all(np.isfinite(simulated)):
        return math.inf
    ybar = float(np.mean(measured))
    num = float(np.sum((measured - simulated) ** 2))
    spread = simulated if denominator == "simulated" else measured
    den = float(np.sum((ybar - spread) ** 2))
    if den == 0.0:
        return math.inf
    return math.sqrt(num / den)


def multi_output_error(traj: Trajectory, data: Dataset, outputs, rng: tuple[int, int],
                       denominator: str = "simulated") -> float:
    """Sum of rrmse over the named observed columns on the given range."""
    total = 0.0
    for column in outputs:
        total += rrmse(data.column(column), traj.signal(column), rng, denominator)
    return total
