"""Grids, sampled functions and the dynamical/spectral potential dictionary.

The dynamical system carries a real symmetric potential

    V_dyn(x) = [[p, q], [q, -p]],

and the equivalent spectral system carries the complex scalar ``v = i q - p``
inside ``V = [[0, v], [conj(v), 0]]``.  Potentials are kept either as
closed-form callables (vectorised over numpy arrays) or as samples on a
uniform grid; samples are interpolated linearly when evaluated off-node.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import GridMismatchError, ParameterError, ParseError

GRID_RTOL = 1e-9

ArrayFunc = Callable[[np.ndarray], np.ndarray]


def thread_count() -> int:
    """Worker cap from ``DIRAC_ECHO_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("DIRAC_ECHO_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError("DIRAC_ECHO_THREADS must be an integer", value=raw)
    if n < 0:
        raise ParameterError("DIRAC_ECHO_THREADS must be >= 0", value=n)
    return n or (os.cpu_count() or 1)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x0 + k*h`` for ``k = 0 .. n_points-1``."""

    x0: float
    h: float
    n_points: int

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError("grid step must be positive", h=self.h)
        if self.n_points < 2:
            raise ParameterError("grid needs at least two points", n_points=self.n_points)

    @classmethod
    def from_interval(cls, a: float, b: float, n_intervals: int) -> "Grid":
        if n_intervals < 1 or not b > a:
            raise ParameterError("bad interval", a=a, b=b, n_intervals=n_intervals)
        return cls(float(a), (b - a) / n_intervals, n_intervals + 1)

    @classmethod
    def with_step(cls, a: float, b: float, h: float) -> "Grid":
        """Grid on [a, b] with step ``h``; ``(b - a)/h`` must be an integer."""
        ratio = (b - a) / h
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-8 * max(1.0, ratio):
            raise ParameterError("interval length is not a multiple of the step", a=a, b=b, h=h)
        return cls(float(a), float(h), n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n_points)

    @property
    def end(self) -> float:
        return self.x0 + self.h * (self.n_points - 1)

    def same_as(self, other: "Grid", rtol: float = GRID_RTOL) -> bool:
        return (
            self.n_points == other.n_points
            and abs(self.h - other.h) <= rtol * self.h
            and abs(self.x0 - other.x0) <= rtol * max(self.h, abs(self.x0))
        )


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Complex samples on a uniform grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.shape[0] != self.grid.n_points:
            raise GridMismatchError(
                "sample count does not match grid",
                n_values=int(vals.size),
                n_points=self.grid.n_points,
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("samples must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or not np.any(self.values.imag)

    def __call__(self, x):
        """Linear interpolation; constant extrapolation outside the grid."""
        x = np.asarray(x, dtype=float)
        pos = (x - self.grid.x0) / self.grid.h
        near = np.rint(pos)
        pos = np.where(np.abs(pos - near) < 1e-10, near, pos)  # exact at nodes
        k =np.clip(np.floor(pos).astype(np.int64), 0, self.grid.n_points - 2)
        w = np.clip(pos - k, 0.0, 1.0)
        v = self.values
        return (1.0 - w) * v[k] + w * v[k + 1]

    def to_csv(self, path_or_buf=None) -> Optional[str]:
        vals = np.asarray(self.values, dtype=complex)
        rows = [("x", "re", "im")]
        rows += [(_fmt(x), _fmt(c.real), _fmt(c.imag)) for x, c in zip(self.nodes, vals)]
        return _write_rows(rows, path_or_buf)


Func = Union[ArrayFunc, SampledFunction]


def evaluate(fn: Func, x) -> np.ndarray:
    return np.asarray(fn(np.asarray(x, dtype=float)))


@dataclass(frozen=True, eq=False)
class DynamicalPotential:
    """Real pair (p, q) of the dynamical system on [0, length].

    ``bound`` is the constant M1 with sup ||V_dyn|| < M1.  When omitted it is
    estimated from a dense sample of ``sqrt(p^2 + q^2)`` (the spectral norm of
    V_dyn) with a relative safety margin.
    """

    p: Func
    q: Func
    bound: Optional[float] = None
    length: Optional[float] = None

    def __post_init__(self):
        sampled = [isinstance(f, SampledFunction) for f in (self.p, self.q)]
        if all(sampled) and not self.p.grid.same_as(self.q.grid):
            raise GridMismatchError("p and q are sampled on different grids")
        for name, f in (("p", self.p), ("q", self.q)):
            if isinstance(f, SampledFunction) and not f.is_real:
                raise ParameterError(f"{name} must be real-valued")
        if self.length is None:
            grids = [f.grid for f in (self.p, self.q) if isinstance(f, SampledFunction)]
            if grids:
                object.__setattr__(self, "length", grids[0].end)
        if self.bound is not None and not self.bound > 0:
            raise ParameterError("bound M1 must be positive", bound=self.bound)

    @property
    def grid(self) -> Optional[Grid]:
        for f in (self.p, self.q):
            if isinstance(f, SampledFunction):
                return f.grid
        return None

    def p_at(self, x) -> np.ndarray:
        return np.real(evaluate(self.p, x)) * np.ones(np.shape(x))

    def q_at(self, x) -> np.ndarray:
        return np.real(evaluate(self.q, x)) * np.ones(np.shape(x))

    def matrix(self, x) -> np.ndarray:
        p, q = self.p_at(x), self.q_at(x)
        return np.stack([np.stack([p, q], -1), np.stack([q, -p], -1)], -2)

    def sup_norm(self, length: Optional[float] = None, n: int = 20001) -> float:
        X = length if length is not None else (self.length or 1.0)
        x = np.linspace(0.0, X, n)
        return float(np.max(np.hypot(self.p_at(x), self.q_at(x))))

    def M1(self, length: Optional[float] = None) -> float:
        if self.bound is not None:
            return float(self.bound)
        return self.sup_norm(length) * (1.0 + 1e-6) + 1e-12

    def M(self, length: Optional[float] = None) -> float:
        """Exponential growth rate ``2*sqrt(2)*M1`` of the a-priori estimates."""
        return 2.0 * math.sqrt(2.0) * self.M1(length)

    def sample(self, grid: Grid) -> "DynamicalPotential":
        x = grid.nodes
        return DynamicalPotential(
            SampledFunction(grid, self.p_at(x)),
            SampledFunction(grid, self.q_at(x)),
            bound=self.bound,
        )


@dataclass(frozen=True, eq=False)
class SpectralPotential:
    """Complex v of the spectral system; V = [[0, v], [conj(v), 0]] is Hermitian."""

    v: Func
    length: Optional[float] = None

    def __post_init__(self):
        if self.length is None and isinstance(self.v, SampledFunction):
            object.__setattr__(self, "length", self.v.grid.end)

    @property
    def grid(self) -> Optional[Grid]:
        return self.v.grid if isinstance(self.v, SampledFunction) else None

    def v_at(self, x) -> np.ndarray:
        return np.asarray(evaluate(self.v, x), dtype=complex) * np.ones(np.shape(x))

    def matrix(self, x) -> np.ndarray:
        v = self.v_at(x)
        zero = np.zeros_like(v)
        return np.stack([np.stack([zero, v], -1), np.stack([np.conj(v), zero], -1)], -2)


def _complex(re, im) -> np.ndarray:
    out = np.empty(np.shape(re), dtype=complex)
    out.real = re
    out.imag = im
    return out


def dyn_to_spec(pot: DynamicalPotential) -> SpectralPotential:
    """v = i q - p, node by node for samples, by composition for callables."""
    p, q = pot.p, pot.q
    if isinstance(p, SampledFunction) and isinstance(q, SampledFunction):
        return SpectralPotential(
            SampledFunction(p.grid, _complex(-np.real(p.values), np.real(q.values))),
            length=pot.length,
        )
    if isinstance(p, SampledFunction) or isinstance(q, SampledFunction):
        grid = pot.grid
        return SpectralPotential(
            SampledFunction(grid, _complex(-pot.p_at(grid.nodes), pot.q_at(grid.nodes))),
            length=pot.length,
        )

    def v(x):
        return _complex(-pot.p_at(x), pot.q_at(x))

    return SpectralPotential(v, length=pot.length)


def spec_to_dyn(pot: SpectralPotential, bound: Optional[float] = None) -> DynamicalPotential:
    """p = -Re(v), q = Im(v)."""
    v = pot.v
    if isinstance(v, SampledFunction):
        vals = np.asarray(v.values, dtype=complex)
        return DynamicalPotential(
            SampledFunction(v.grid, -vals.real),
            SampledFunction(v.grid, vals.imag.copy()),
            bound=bound,
        )
    return DynamicalPotential(
        lambda x: -np.real(pot.v_at(x)),
        lambda x: np.imag(pot.v_at(x)),
        bound=bound,
        length=pot.length,
    )


# -- CSV ---------------------------------------------------------------------


def _fmt(v: float) -> str:
    v = float(v)
    if v == 0.0:
        return "0"
    return repr(v)


def _write_rows(rows, path_or_buf):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    text = buf.getvalue()
    if path_or_buf is None:
        return text
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
        return None
    with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return None


def write_csv(path_or_buf, header, columns) -> Optional[str]:
    cols = [np.asarray(c, dtype=float) for c in columns]
    rows = [tuple(header)]
    rows += [tuple(_fmt(c[k]) for c in cols) for k in range(cols[0].shape[0])]
    return _write_rows(rows, path_or_buf)


def read_csv(path_or_text, required=None) -> dict:
    """Read a numeric CSV into ``{column: float array}``.

    Raises ParseError on malformed input or missing columns.
    """
    try:
        if hasattr(path_or_text, "read"):
            text = path_or_text.read()
        elif isinstance(path_or_text, str) and "\n" in path_or_text:
            text = path_or_text
        else:
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read CSV: {exc}", path=str(path_or_text))
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2:
        raise ParseError("CSV needs a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in (required or []) if c not in header]
    if missing:
        raise ParseError("CSV is missing columns", missing=missing, header=header)
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ParseError(f"non-numeric CSV entry: {exc}")
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ParseError("ragged CSV rows", header=header)
    if not np.all(np.isfinite(data)):
        raise ParseError("CSV contains NaN or Inf")
    return {name: data[:, k] for k, name in enumerate(header)}


def grid_from_nodes(x: np.ndarray, rtol: float = GRID_RTOL) -> Grid:
    """Recover a uniform grid from node coordinates, rejecting non-uniform input."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ParseError("need at least two grid nodes")
    steps = np.diff(x)
    h = (x[-1] - x[0]) / (x.size - 1)
    if not h > 0:
        raise ParseError("grid nodes must be strictly increasing")
    dev = float(np.max(np.abs(steps - h)) / h)
    if dev > rtol:
        raise ParseError("non-uniform grid", relative_step_deviation=dev, tolerance=rtol)
    return Grid(float(x[0]), float(h), int(x.size))


def read_sampled(path_or_text) -> SampledFunction:
    cols = read_csv(path_or_text, required=["x", "re", "im"])
    grid = grid_from_nodes(cols["x"])
    re, im = cols["re"], cols["im"]
    values = re.copy() if not np.any(im) else _complex(re, im)
    return SampledFunction(grid, values)


def write_potential_csv(path_or_buf, pot: DynamicalPotential, grid: Optional[Grid] = None):
    grid = grid or pot.grid
    if grid is None:
        raise ParameterError("a grid is required to write a closed-form potential")
    x = grid.nodes
    p, q = pot.p_at(x), pot.q_at(x)
    v = _complex(-p, q)
    return write_csv(path_or_buf, ("x", "p", "q", "re_v", "im_v"), (x, p, q, v.real, v.imag))


def read_potential_csv(path_or_text, bound: Optional[float] = None) -> DynamicalPotential:
    """Read ``x,p,q[,re_v,im_v]`` or a core ``x,re,im`` file holding v."""
    cols = read_csv(path_or_text, required=["x"])
    grid = grid_from_nodes(cols["x"])
    if "p" in cols and "q" in cols:
        return DynamicalPotential(
            SampledFunction(grid, cols["p"]), SampledFunction(grid, cols["q"]), bound=bound
        )
    if "re" in cols and "im" in cols:
        v = SampledFunction(grid, _complex(cols["re"], cols["im"]))
        return spec_to_dyn(SpectralPotential(v), bound=bound)
    raise ParseError("potential CSV needs columns p,q or re,im", header=list(cols))
