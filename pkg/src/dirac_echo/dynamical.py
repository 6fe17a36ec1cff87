"""Time-domain solvers for the boundary-controlled dynamical Dirac system.

    i u_t + J u_x + V_dyn(x) u = 0,   J = [[0, 1], [-1, 0]],
    u(x, 0) = 0,   u_1(0, t) = f(t).

Both solvers work in the characteristic variables

    a = (u1 - i u2) / 2   (moves right, u = a [1, i] + b [1, -i])
    b = (u1 + i u2) / 2   (moves left)

which satisfy ``a_t + a_x = i (p - i q) b`` and ``b_t - b_x = i (p + i q) a``
with the reflection ``a = f - b`` at x = 0.  The output of the system is
``u2(0, t) = i f(t) + (r * f)(t)`` where r is the response function.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gammainc

from .core import DynamicalPotential, Grid, SampledFunction, write_csv
from .errors import (
    DomainError,
    IllPosedDeconvolutionError,
    ParameterError,
    ResidualError,
    TruncationWarning,
)

E_PLUS = np.array([1.0, 1.0j])
SQRT2 = math.sqrt(2.0)


# -- controls -------------------------------------------------------------------


def _causal(fn):
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        pos = np.maximum(t, 0.0)
        return np.where(t > 0, fn(pos), 0.0)

    return wrapped


@dataclass(frozen=True, eq=False)
class BoundaryControl:
    """Boundary input f with its first two derivatives and the bounds c0, c0~.

    The callables are zero for t <= 0.  ``c0`` bounds ||f(t)[1; i]|| and
    ``c0_tilde`` bounds ||f'(t)[1; i]||.
    """

    f: Callable
    df: Callable
    d2f: Callable
    c0: float
    c0_tilde: float
    name: str = "custom"

    def __call__(self, t):
        return self.f(t)


def _sup_bound(fn, t_max=60.0, n=200001):
    t = np.linspace(0.0, t_max, n)
    return float(np.max(np.abs(fn(t)))) * SQRT2 * (1 + 1e-6) + 1e-300


def t2exp() -> BoundaryControl:
    """f(t) = t^2 e^{-t}: f(0) = f'(0) = 0, f''(0) = 2."""
    f = _causal(lambda t: t**2 * np.exp(-t))
    df = _causal(lambda t: (2 * t - t**2) * np.exp(-t))
    d2f = _causal(lambda t: (2 - 4 * t + t**2) * np.exp(-t))
    ts = 2 - SQRT2
    c0 = SQRT2 * 4 * math.exp(-2) * (1 + 1e-9)
    c0t = SQRT2 * (2 * ts - ts**2) * math.exp(-ts) * (1 + 1e-9)
    return BoundaryControl(f, df, d2f, c0, c0t, "t2exp")


def t2gauss() -> BoundaryControl:
    """f(t) = t^2 e^{-t^2}."""
    f = _causal(lambda t: t**2 * np.exp(-t * t))
    df = _causal(lambda t: (2 * t - 2 * t**3) * np.exp(-t * t))
    d2f = _causal(lambda t: (2 - 10 * t**2 + 4 * t**4) * np.exp(-t * t))
    c0 = SQRT2 * math.exp(-1) * (1 + 1e-9)
    return BoundaryControl(f, df, d2f, c0, _sup_bound(df, 10.0), "t2gauss")


BUILTIN_CONTROLS = {"t2exp": t2exp, "t2gauss": t2gauss}


def control_from_samples(sf: SampledFunction, atol: float = 1e-8) -> BoundaryControl:
    """Control from sampled values on a grid starting at t = 0.

    Derivatives come from second-order finite differences; the start-up
    conditions f(0) = f'(0) = 0 are checked numerically.
    """
    if abs(sf.grid.x0) > 1e-12:
        raise ParameterError("control samples must start at t = 0", t0=sf.grid.x0)
    h = sf.grid.h
    vals = np.asarray(sf.values, dtype=complex)
    d1 = np.gradient(vals, h, edge_order=2)
    d2 = np.gradient(d1, h, edge_order=2)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if abs(vals[0]) > atol * scale or abs(d1[0]) > max(atol * scale, 10 * h * h * scale):
        raise ParameterError("control must satisfy f(0) = f'(0) = 0", f0=abs(vals[0]), df0=abs(d1[0]))
    f = _causal(SampledFunction(sf.grid, vals))
    df = _causal(SampledFunction(sf.grid, d1))
    d2f = _causal(SampledFunction(sf.grid, d2))
    c0 = SQRT2 * float(np.max(np.abs(vals))) * (1 + 1e-6) + 1e-300
    c0t = SQRT2 * float(np.max(np.abs(d1))) * (1 + 1e-6) + 1e-300
    return BoundaryControl(f, df, d2f, c0, c0t, "sampled")


# -- result containers -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WaveField:
    """Solution samples u1, u2 with shape (len(x), len(t)) on a common step."""

    x: Grid
    t: Grid
    u1: np.ndarray
    u2: np.ndarray
    solver: str = ""
    info: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.x.h

    def boundary_u2(self) -> SampledFunction:
        return SampledFunction(self.t, self.u2[0].copy())

    def norm(self) -> np.ndarray:
        return np.sqrt(np.abs(self.u1) ** 2 + np.abs(self.u2) ** 2)

    def to_csv(self, path_or_buf=None):
        X, T = np.meshgrid(self.x.nodes, self.t.nodes, indexing="ij")
        cols = (X.ravel(), T.ravel(), self.u1.real.ravel(), self.u1.imag.ravel(),
                self.u2.real.ravel(), self.u2.imag.ravel())
        return write_csv(path_or_buf, ("x", "t", "re_u1", "im_u1", "re_u2", "im_u2"), cols)


@dataclass(frozen=True, eq=False)
class ResponseFunction:
    """Sampled response r on [0, T]; r = 0 for t < 0 by convention."""

    function: SampledFunction
    origin: str = "extracted"
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.function.grid

    @property
    def values(self) -> np.ndarray:
        return self.function.values

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, self.function(t))

    def bound_ratio(self, M: float) -> float:
        """max |r(t)| / (M e^{Mt}); at most 1 for a genuine response."""
        t = self.grid.nodes
        return float(np.max(np.abs(self.values) * np.exp(-M * t)) / M)

    def to_csv(self, path_or_buf=None):
        return self.function.to_csv(path_or_buf)


# -- the S operator ------------------------------------------------------------


def _gauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1), 0.5 * weights


def _segment_integral(h_field, start, direction, length, quad_order, cells, combos):
    """Integrals over a slope +-1 segment against the arclength measure."""
    if length <= 0:
        return [0j for _ in combos]
    tau, w = _gauss(quad_order)
    edges = np.linspace(0.0, length, cells + 1)
    s = (edges[:-1, None] + np.diff(edges)[:, None] * tau[None, :]).ravel()
    ws = (np.diff(edges)[:, None] * w[None, :]).ravel()
    xs = start[0] + direction[0] * s
    ts = start[1] + direction[1] * s
    h1, h2 = h_field(xs, ts)
    h1 = np.broadcast_to(np.asarray(h1, dtype=complex), s.shape)
    h2 = np.broadcast_to(np.asarray(h2, dtype=complex), s.shape)
    return [SQRT2 * np.sum(ws * (c1 * h1 + c2 * h2)) for c1, c2 in combos]


def s_operator(h_field, x: float, t: float, quad_order: int = 4, cells: int = 16, form: str = "duhamel"):
    """Evaluate the integral operator (S h)(x, t) for t >= x >= 0.

    ``h_field(x, t)`` returns the pair (h1, h2) and must vanish for t < x.
    The three segments run from (x, t) to (0, t-x), from (0, t-x) to
    (t-x, 0) and from (x, t) to (x+t, 0).  ``form="duhamel"`` (default)
    carries the boundary-reflected combination on the middle segment, which
    is what makes ``-S(V u)`` reproduce the solution of the boundary value
    problem; ``form="literal"`` uses the same combination as on the first
    segment.
    """
    if quad_order < 2:
        raise ParameterError("quad_order must be >= 2", quad_order=quad_order)
    if t < x or x < 0:
        raise DomainError("S is evaluated only for t >= x >= 0", x=x, t=t)
    if form not in ("duhamel", "literal"):
        raise ParameterError("form must be 'duhamel' or 'literal'", form=form)
    i = 1j
    I12a, I12b = _segment_integral(h_field, (x, t), (-1, -1), x, quad_order, cells, [(i, 1), (1, -i)])
    mid = [(i, -1), (1, i)] if form == "duhamel" else [(i, 1), (1, -i)]
    I23a, I23b = _segment_integral(h_field, (0.0, t - x), (1, -1), t - x, quad_order, cells, mid)
    I14a, I14b = _segment_integral(h_field, (x, t), (1, -1), t, quad_order, cells, [(i, -1), (1, i)])
    k = 1.0 / (2 * SQRT2)
    s1 = -k * (I12a - I23a + I14a)
    s2 = k * (I12b - I23b - I14b)
    return complex(s1), complex(s2)


# -- Neumann series -------------------------------------------------------------


def _steps(domain, h) -> Tuple[int, int]:
    X, T = map(float, domain)
    if not (X > 0 and T > 0):
        raise ParameterError("domain lengths must be positive", X=X, T=T)
    nx, nt = X / h, T / h
    ix, it = int(round(nx)), int(round(nt))
    if abs(nx - ix) > 1e-8 * max(1, nx) or abs(nt - it) > 1e-8 * max(1, nt):
        raise ParameterError("domain is not a whole number of square cells", X=X, T=T, h=h)
    return ix, it


def _product_weights(coef, n_cells, h, quad_order):
    """Per-cell weights of int c(x) g(x) dx with g linear between the cell's end nodes."""
    tau, w = _gauss(quad_order)
    xq = (np.arange(n_cells)[:, None] + tau[None, :]) * h
    c = coef(xq)
    W0 = h * np.sum(w * (1 - tau) * c, axis=1)
    W1 = h * np.sum(w * tau * c, axis=1)
    return W0, W1


class _SkewIndex:
    """Flat gather indices between the (x, t) grid and diagonal/anti-diagonal layouts."""

    def __init__(self, n):
        m = n + 1
        dummy = m * m
        i = np.arange(m)[:, None]
        d = np.arange(m)[None, :]
        j = i + d
        self.diag = np.where(j <= n, i * m + np.minimum(j, n), dummy)
        s = np.arange(2 * n + 1)[None, :]
        j = s - i
        self.anti = np.where((j >= 0) & (j <= n), i * m + np.clip(j, 0, n), dummy)
        I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        upper = J >= I
        self.upper = upper
        # back from the diagonal layout (i, d = j - i)
        self.from_diag = np.where(upper, I * m + np.clip(J - I, 0, n), m * m)
        self.s = I + J
        self.I = I
        self.s_end = np.minimum(self.s, n)
        self.n = n


def _gather(G, idx):
    flat = np.concatenate([G.ravel(), [0.0]])
    return flat[idx]


def _apply_A(a, b, Wa, Wb, ix):
    """One application of the Duhamel operator in characteristic variables."""
    n = ix.n
    m = n + 1
    Bd = _gather(b, ix.diag)
    cell = Wa[0][:, None] * Bd[:-1] + Wa[1][:, None] * Bd[1:]
    A12 = np.zeros((m, m), dtype=complex)
    np.cumsum(cell, axis=0, out=A12[1:])

    As = _gather(a, ix.anti)
    cellb = Wb[0][:, None] * As[:-1] + Wb[1][:, None] * As[1:]
    Cum = np.zeros((m, 2 * n + 1), dtype=complex)
    np.cumsum(cellb, axis=0, out=Cum[1:])
    d = np.arange(m)
    C23 = Cum[d, d]

    a_new = _gather(A12, ix.from_diag) - np.where(ix.upper, C23[np.clip(ix.s - 2 * ix.I, 0, n)], 0.0)
    b_new = Cum[ix.s_end, ix.s] - Cum[ix.I, ix.s]
    a_new[~ix.upper] = 0.0
    b_new[~ix.upper] = 0.0
    return a_new, b_new


def truncation_bound(c0: float, M: float, T: float, k_max: int) -> float:
    """c0 * sum_{k > k_max} (M T)^k / k!."""
    x = M * T
    return float(c0 * math.exp(x) * gammainc(k_max + 1, x)) if x > 0 else 0.0


def neumann_solve(
    pot: DynamicalPotential,
    ctrl: BoundaryControl,
    domain,
    h: float,
    k_max: int = 40,
    quad_order: int = 4,
    tol: Optional[float] = None,
    stop_rtol: float = 1e-15,
) -> WaveField:
    """Sum the Neumann series u = u_* + sum_k A^{k+1} u_* on a square grid.

    Each application of A integrates along the characteristic segments with
    composite Gauss-Legendre product weights (the potential at the Gauss
    points, the iterate linear along each cell).  Values with t < x are held
    at zero.  Summation stops early once an increment falls below
    ``stop_rtol`` times the running maximum.  If ``tol`` is given and the
    analytic tail bound for ``k_max`` terms exceeds it, a TruncationWarning
    carrying the bound is issued.
    """
    if k_max < 1:
        raise ParameterError("k_max must be >= 1", k_max=k_max)
    if quad_order < 2:
        raise ParameterError("quad_order must be >= 2", quad_order=quad_order)
    if np.ndim(h) != 0:
        hx, ht = map(float, h)
        if abs(hx - ht) > 1e-12 * max(hx, ht):
            raise ParameterError("the series solver needs a square grid", hx=hx, ht=ht)
        h = hx
    h = float(h)
    nX, nT = _steps(domain, h)
    n = max(nX, nT)
    X, T = nX * h, nT * h
    ix = _SkewIndex(n)

    coef_a = lambda x: 1j * (pot.p_at(x) - 1j * pot.q_at(x))
    coef_b = lambda x: 1j * (pot.p_at(x) + 1j * pot.q_at(x))
    Wa = _product_weights(coef_a, n, h, quad_order)
    Wb = _product_weights(coef_b, n, h, quad_order)

    nodes = np.arange(n + 1) * h
    a = ctrl.f(nodes[None, :] - nodes[:, None]).astype(complex)
    a[~ix.upper] = 0.0
    b = np.zeros_like(a)
    ga, gb = a.copy(), b.copy()
    increments = []
    for k in range(k_max):
        ga, gb = _apply_A(ga, gb, Wa, Wb, ix)
        a += ga
        b += gb
        inc = float(max(np.max(np.abs(ga)), np.max(np.abs(gb))))
        increments.append(inc)
        if inc <= stop_rtol * max(float(np.max(np.abs(a))), 1e-300):
            break

    M = pot.M(X if X >= T else T)
    bound = truncation_bound(ctrl.c0, M, T, k_max)
    if tol is not None and bound > tol:
        warnings.warn(TruncationWarning(f"series tail bound {bound:.3e} exceeds tolerance {tol:.3e}", bound), stacklevel=2)

    u1 = (a + b)[: nX + 1, : nT + 1]
    u2 = (1j * (a - b))[: nX + 1, : nT + 1]
    return WaveField(
        Grid(0.0, h, nX + 1),
        Grid(0.0, h, nT + 1),
        u1,
        u2,
        solver="series",
        info={"truncation_bound": bound, "iterations": len(increments), "increments": increments, "M": M},
    )


# -- characteristics ------------------------------------------------------------


def characteristics_solve(
    pot: DynamicalPotential,
    ctrl: BoundaryControl,
    domain,
    h,
    order: int = 1,
) -> WaveField:
    """March along the characteristics t - x and t + x with equal steps.

    ``order=1`` is the explicit upwind update; ``order=2`` adds a trapezoid
    corrector (Heun).  The computation runs on x up to (X + T)/2 so that the
    stored window [0, X] never sees the artificial right boundary, and only
    the window is kept in memory.
    """
    if np.ndim(h) != 0:
        hx, ht = map(float, h)
        if abs(hx - ht) > 1e-12 * max(hx, ht):
            raise ParameterError("characteristic stepping needs equal x and t steps", hx=hx, ht=ht)
        h = hx
    h = float(h)
    if order not in (1, 2):
        raise ParameterError("order must be 1 or 2", order=order)
    nX, nT = _steps(domain, h)
    nR = max(nX, (nX + nT + 1) // 2 + 1)
    x = np.arange(nR + 1) * h
    ca = 1j * (pot.p_at(x) - 1j * pot.q_at(x))
    cb = 1j * (pot.p_at(x) + 1j * pot.q_at(x))
    fvals = ctrl.f(np.arange(nT + 1) * h).astype(complex)

    a = np.zeros(nR + 1, dtype=complex)
    b = np.zeros(nR + 1, dtype=complex)
    u1 = np.zeros((nX + 1, nT + 1), dtype=complex)
    u2 = np.zeros((nX + 1, nT + 1), dtype=complex)
    an = np.empty_like(a)
    bn = np.empty_like(b)
    for j in range(nT):
        an[1:] = a[:-1] + h * ca[:-1] * b[:-1]
        bn[:-1] = b[1:] + h * cb[1:] * a[1:]
        bn[-1] = 0.0
        an[0] = fvals[j + 1] - bn[0]
        if order == 2:
            a2 = np.empty_like(a)
            b2 = np.empty_like(b)
            a2[1:] = a[:-1] + 0.5 * h * (ca[:-1] * b[:-1] + ca[1:] * bn[1:])
            b2[:-1] = b[1:] + 0.5 * h * (cb[1:] * a[1:] + cb[:-1] * an[:-1])
            b2[-1] = 0.0
            a2[0] = fvals[j + 1] - b2[0]
            an, bn = a2, b2
        a, an = an, a
        b, bn = bn, b
        if order == 2:
            an = np.empty_like(a)
            bn = np.empty_like(b)
        u1[:, j + 1] = a[: nX + 1] + b[: nX + 1]
        u2[:, j + 1] = 1j * (a[: nX + 1] - b[: nX + 1])
    return WaveField(
        Grid(0.0, h, nX + 1),
        Grid(0.0, h, nT + 1),
        u1,
        u2,
        solver=f"characteristics{order}",
        info={"M": pot.M(max(nX, nT) * h)},
    )


# -- response extraction ----------------------------------------------------------


def _second_difference(d, h):
    """d'' for data vanishing identically for t <= 0 (zero extension on the left).

    Central differences everywhere except the last node, which uses a
    third-order one-sided stencil.  A one-sided polynomial fit at the first
    node is exact for clean data but amplifies solver noise, so it is not used.
    """
    if d.size < 5:
        raise ParameterError("need at least five samples", n=int(d.size))
    e = np.concatenate([[0.0], d])
    dd = np.empty_like(d)
    dd[:-1] = (e[2:] - 2 * e[1:-1] + e[:-2]) / h**2
    dd[-1] = (35 * d[-1] - 104 * d[-2] + 114 * d[-3] - 56 * d[-4] + 11 * d[-5]) / (12 * h**2)
    dd[0] = 0.0
    return dd


def convolve(r_values, f_values, h):
    """Trapezoid approximation of int_0^t r(t-s) f(s) ds on a uniform grid."""
    n = len(r_values)
    full = np.convolve(r_values, f_values)[:n]
    corr = 0.5 * (r_values[0] * f_values + r_values * f_values[0])
    return h * (full - corr)


def extract_response(
    u2_boundary: SampledFunction,
    ctrl: BoundaryControl,
    residual_tol: float = 1e-2,
    d2f_atol: float = 1e-8,
) -> ResponseFunction:
    """Solve int_0^t r(t-s) f(s) ds = u2(0,t) - i f(t) for r.

    The data is differentiated twice (central differences, zero extension
    to t < 0), leaving a first-kind equation with kernel f'' and f''(0) != 0,
    which is solved by forward substitution with the product midpoint rule.
    Node values are midpoint averages with linear extrapolation at the ends.
    """
    grid = u2_boundary.grid
    if abs(grid.x0) > 1e-12:
        raise ParameterError("boundary trace must start at t = 0", t0=grid.x0)
    f2_0 = complex(np.asarray(ctrl.d2f(np.array([grid.h * 1e-9]))).reshape(-1)[0])
    if abs(f2_0) <= d2f_atol:
        raise IllPosedDeconvolutionError("f''(0) vanishes; deconvolution is ill-posed", d2f0=abs(f2_0))

    h = grid.h
    n = grid.n_points - 1
    t = grid.nodes
    fvals = np.asarray(ctrl.f(t), dtype=complex)
    d = np.asarray(u2_boundary.values, dtype=complex) - 1j * fvals
    dd = _second_difference(d, h)

    kernel = np.asarray(ctrl.d2f((np.arange(n) + 0.5) * h), dtype=complex)
    rm = np.zeros(n, dtype=complex)
    for m in range(1, n + 1):
        acc = np.dot(rm[: m - 1], kernel[m - 1 : 0 : -1]) if m > 1 else 0.0
        rm[m - 1] = (dd[m] / h - acc) / kernel[0]
    r = np.empty(n + 1, dtype=complex)
    if n >= 2:
        r[1:-1] = 0.5 * (rm[:-1] + rm[1:])
        r[0] = 1.5 * rm[0] - 0.5 * rm[1]
        r[-1] = 1.5 * rm[-1] - 0.5 * rm[-2]
    else:
        r[:] = rm[0]

    resid = convolve(r, fvals, h) - d
    scale = max(float(np.max(np.abs(d))), float(np.max(np.abs(fvals))) * h)
    rel = float(np.max(np.abs(resid))) / scale if scale > 0 else 0.0
    if rel > residual_tol:
        raise ResidualError("Volterra residual above tolerance", residual=rel, tolerance=residual_tol)
    return ResponseFunction(SampledFunction(grid, r), "extracted", {"residual": rel})


# -- estimates ---------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateReport:
    growth_ratio: float
    causality_residual: float
    M: float
    c0: float

    def ok(self, tol: float = 1e-6, causal_tol: Optional[float] = None) -> bool:
        good = self.growth_ratio <= 1 + tol
        if causal_tol is not None:
            good = good and self.causality_residual <= causal_tol
        return good


def verify_estimates(field: WaveField, ctrl: BoundaryControl, pot: DynamicalPotential) -> EstimateReport:
    """max ||u|| e^{-Mt} / c0 over the grid and max ||u|| over t < x."""
    X = field.x.end
    T = field.t.end
    M = pot.M(max(X, T))
    norm = field.norm()
    t = field.t.nodes
    ratio = float(np.max(norm * np.exp(-M * t)[None, :]) / ctrl.c0)
    xg, tg = np.meshgrid(field.x.nodes, t, indexing="ij")
    below = tg < xg - 1e-12 * field.h
    causal = float(np.max(norm[below])) if np.any(below) else 0.0
    return EstimateReport(ratio, causal, M, ctrl.c0)
