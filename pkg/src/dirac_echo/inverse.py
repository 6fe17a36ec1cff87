"""Recovery of the potential from the accelerant via the structured operators

    (S_l u)(x) = u(x) + int_0^l omega(x - t) u(t) dt   on L^2(0, l).

For each x the pair theta2(x) follows from two solves with S_{2x}; the
scalar frame relation gives theta1 and the potential is
v = i theta1' J theta2^*.  The data on [0, 2L] determines v on [0, L] only.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .amplitude import Accelerant, accelerant_from_response
from .core import DynamicalPotential, Grid, SampledFunction, SpectralPotential, spec_to_dyn, thread_count
from .dynamical import ResponseFunction
from .errors import DifferentiationError, NotAValidAccelerantError, ParameterError, RegionWarning

SQ2 = math.sqrt(2.0)
J = np.array([[0.0, 1.0], [1.0, 0.0]])
THETA2_0 = np.array([-1.0, 1.0]) / SQ2


@dataclass(frozen=True, eq=False)
class StructuredOperatorMatrix:
    """Hermitian Nystrom matrix for S_l.

    ``matrix = I + D^{1/2} Omega D^{1/2}`` with trapezoid weights D and
    Toeplitz Omega_ij = omega(x_i - x_j).  It is similar to the plain
    Nystrom matrix I + Omega D, so the spectrum is the same.
    """

    l: float
    N: int
    matrix: np.ndarray
    weights: np.ndarray
    min_eig: float


@dataclass(frozen=True, eq=False)
class ThetaPair:
    grid: Grid
    theta1: np.ndarray
    theta2: np.ndarray

    def frame_defect(self) -> float:
        """max |theta1 J theta2^*| over the grid."""
        return float(np.max(np.abs(np.einsum("ni,ij,nj->n", self.theta1, J, self.theta2.conj()))))


@dataclass(frozen=True, eq=False)
class Inversion:
    potential: DynamicalPotential
    spectral: SpectralPotential
    thetas: ThetaPair
    min_eig: float
    info: dict = field(default_factory=dict)


def _trapezoid(n_nodes, d):
    w = np.full(n_nodes, d)
    w[[0, -1]] *= 0.5
    return w


def _omega_column(acc: Accelerant, d: float, n_nodes: int) -> np.ndarray:
    """omega(k d) for k = 0 .. n_nodes-1, node 0 replaced by the mean of the one-sided limits."""
    col = np.asarray(acc.omega_at(np.arange(n_nodes) * d), dtype=complex)
    col[0] = col[0].real
    return col


def _hermitian(col, w):
    Om = sla.toeplitz(col, np.conj(col))
    sw = np.sqrt(w)
    B = np.eye(len(col)) + sw[:, None] * Om * sw[None, :]
    return 0.5 * (B + B.conj().T)


def build_structured_operator(acc: Accelerant, l: float, N: int) -> StructuredOperatorMatrix:
    """Nystrom matrix of S_l on N equispaced nodes of [0, l] with trapezoid weights.

    Raises NotAValidAccelerantError when the smallest eigenvalue is not
    positive.
    """
    if N < 8:
        raise ParameterError("N must be at least 8", N=N)
    if not (0 < l <= acc.length * (1 + 1e-12)):
        raise ParameterError("l must lie in (0, 2L]", l=l, two_L=acc.length)
    d = l / (N - 1)
    w = _trapezoid(N, d)
    B = _hermitian(_omega_column(acc, d, N), w)
    lam = float(np.linalg.eigvalsh(B)[0])
    if not lam > 0:
        raise NotAValidAccelerantError("structured operator is not positive definite", l=l, min_eig=lam)
    return StructuredOperatorMatrix(float(l), int(N), B, w, lam)


def _theta2_block(col, s_vals, d, m, x=None):
    """theta2 at x = m d / 2 from the Nystrom system on nodes 0 .. m."""
    w = _trapezoid(m + 1, d)
    sw = np.sqrt(w)
    B = _hermitian(col[: m + 1], w)
    try:
        c = sla.cho_factor(B, lower=True)
    except np.linalg.LinAlgError:
        raise NotAValidAccelerantError("structured operator lost positivity", x=x if x is not None else m * d / 2)
    rhs = np.stack([2 * s_vals[: m + 1], np.ones(m + 1)], axis=1) * sw[:, None]
    u = sla.cho_solve(c, rhs) / sw[:, None]
    integral = (w * np.conj(col[: m + 1])) @ u
    return (np.array([-1.0, 1.0]) - integral) / SQ2


def recover_theta2(acc: Accelerant, x: float, N: int) -> np.ndarray:
    """theta2(x) = ([-1, 1] - int_0^{2x} conj(omega) S_{2x}^{-1}[2s, 1]) / sqrt(2).

    Uses N + 1 trapezoid nodes on [0, 2x]; the accelerant is interpolated
    linearly if the nodes fall between its samples.
    """
    if x == 0:
        return THETA2_0.astype(complex)
    if not (0 < 2 * x <= acc.length * (1 + 1e-12)):
        raise ParameterError("x must lie in (0, L]", x=x, L=acc.length / 2)
    if N < 2:
        raise ParameterError("N must be at least 2", N=N)
    d = 2 * x / N
    col = _omega_column(acc, d, N + 1)
    s_vals = acc.s(np.arange(N + 1) * d)
    return _theta2_block(col, s_vals, d, N, x)


def recover_theta1(theta2):
    """theta1 = -conj(theta2) j, i.e. [-conj(theta2_1), conj(theta2_2)]."""
    t2 = np.asarray(theta2, dtype=complex)
    return np.stack([-np.conj(t2[..., 0]), np.conj(t2[..., 1])], axis=-1)


def recover_potential(thetas: ThetaPair) -> SpectralPotential:
    """v = i theta1' J theta2^* with second-order differences (one-sided at the ends)."""
    n = thetas.grid.n_points
    if n < 3:
        raise DifferentiationError("need at least three grid points", n_points=n)
    d1 = np.gradient(thetas.theta1, thetas.grid.h, axis=0, edge_order=2)
    v = 1j * np.einsum("ni,ij,nj->n", d1, J, thetas.theta2.conj())
    return SpectralPotential(SampledFunction(thetas.grid, v))


def _resample(r: ResponseFunction, N: int) -> np.ndarray:
    g = r.grid
    if g.n_points - 1 == N:
        return np.asarray(r.values, dtype=complex)
    t = np.linspace(g.x0, g.end, N + 1)
    return np.asarray(r.function(t), dtype=complex)


def invert_response_full(r: ResponseFunction, N: Optional[int] = None, half_warn: bool = False) -> Inversion:
    """Full pipeline with diagnostics.  See ``invert_response``."""
    g = r.grid
    if abs(g.x0) > 1e-12:
        raise ParameterError("response must start at t = 0", t0=g.x0)
    N = g.n_points - 1 if N is None else int(N)
    if N < 8 or N % 2:
        raise ParameterError("N must be even and at least 8", N=N)
    two_L = g.end
    d = two_L / N
    rv = _resample(r, N)
    tgrid = Grid(0.0, d, N + 1)
    acc = accelerant_from_response(SampledFunction(tgrid, rv))
    col = acc.omega_pos.copy()
    col[0] = col[0].real
    s_vals = np.asarray(acc.s.values)

    # nodes x_m = m d / 2, m = 0 .. N; each needs the system on [0, 2 x_m]
    xgrid = Grid(0.0, d / 2, N + 1)
    th2 = np.empty((N + 1, 2), dtype=complex)
    th2[0] = THETA2_0
    ms = list(range(1, N + 1))
    job = lambda m: _theta2_block(col, s_vals, d, m, m * d / 2)
    workers = min(thread_count(), len(ms))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, ms))
    else:
        rows = [job(m) for m in ms]
    th2[1:] = rows
    thetas = ThetaPair(xgrid, recover_theta1(th2), th2)
    spec = recover_potential(thetas)
    dyn = spec_to_dyn(spec)
    B = _hermitian(col, _trapezoid(N + 1, d))
    lam = float(np.linalg.eigvalsh(B)[0])
    if half_warn:
        warnings.warn(
            RegionWarning(f"response on [0, {two_L:g}] determines the potential on [0, {two_L / 2:g}] only", two_L / 2),
            stacklevel=2,
        )
    return Inversion(dyn, spec, thetas, lam, {"N": N, "frame_defect": thetas.frame_defect()})


def invert_response(r: ResponseFunction, N: Optional[int] = None, half_warn: bool = False) -> DynamicalPotential:
    """Recover (p, q) on [0, L] from r on [0, 2L].

    r is (re)sampled on N + 1 equispaced nodes of [0, 2L] (N defaults to
    the number of intervals of r's grid); the output grid has step L/N.
    Node systems are independent and run on up to DIRAC_ECHO_THREADS
    threads; the result does not depend on scheduling.
    """
    return invert_response_full(r, N, half_warn).potential
