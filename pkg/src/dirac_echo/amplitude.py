"""A-amplitude and accelerant: conversions among r, s, omega and phi_H.

The amplitude s and the accelerant omega = s' are tied to the response by

    r(t) = 2i conj(omega(t)),     s(x) = (1 + i int_0^x conj(r)) / 2,

and omega is extended to negative arguments by omega(-x) = conj(omega(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_simpson, quad

from .core import Grid, SampledFunction
from .dynamical import ResponseFunction
from .errors import ParameterError, TruncationError

EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Accelerant:
    """s on [0, 2L] (node 0 holds s(+0)) and omega on [-2L, 2L].

    omega jumps at 0; the node at x = 0 stores the right limit omega(+0).
    """

    s: SampledFunction
    omega: SampledFunction

    @property
    def length(self) -> float:
        return self.s.grid.end

    @property
    def omega_pos(self) -> np.ndarray:
        """omega at the nonnegative nodes 0, d, ..., 2L."""
        n = self.s.grid.n_points
        return self.omega.values[n - 1 :]

    def omega_at(self, x):
        x = np.asarray(x, dtype=float)
        pos = SampledFunction(self.s.grid, self.omega_pos)
        out = np.where(x >= 0, pos(np.abs(x)), np.conj(pos(np.abs(x))))
        return out


def accelerant_from_samples(grid: Grid, omega_pos: np.ndarray, s: np.ndarray) -> Accelerant:
    if abs(grid.x0) > 1e-12:
        raise ParameterError("accelerant samples must start at x = 0", x0=grid.x0)
    om = np.asarray(omega_pos, dtype=complex)
    full = np.concatenate([np.conj(om[:0:-1]), om])
    sym = Grid(-grid.end, grid.h, 2 * grid.n_points - 1)
    return Accelerant(SampledFunction(grid, np.asarray(s, dtype=complex)), SampledFunction(sym, full))


def accelerant_from_response(r: Union[ResponseFunction, SampledFunction]) -> Accelerant:
    """s by cumulative Simpson of conj(r), omega = (i/2) conj(r) with Hermitian extension."""
    rf = r.function if isinstance(r, ResponseFunction) else r
    grid = rf.grid
    rv = np.asarray(rf.values, dtype=complex)
    # cumulative_simpson is real-only
    integral = cumulative_simpson(rv.real, dx=grid.h, initial=0.0) - 1j * cumulative_simpson(
        rv.imag, dx=grid.h, initial=0.0
    )
    s = 0.5 * (1 + 1j * integral)
    omega = 0.5j * np.conj(rv)
    return accelerant_from_samples(grid, omega, s)


def response_from_accelerant(acc: Accelerant) -> ResponseFunction:
    """r = 2i conj(omega) on the nonnegative nodes."""
    return ResponseFunction(SampledFunction(acc.s.grid, 2j * np.conj(acc.omega_pos)), "accelerant")


# -- Weyl -> response -----------------------------------------------------------


def _model_inverse(c1, c2, t, eta0):
    """Inverse transform of c1/(z + i eta0) + c2/(z + i eta0)^2 on t >= 0."""
    e = np.exp(-eta0 * t)
    return -1j * c1 * e - c2 * t * e


def response_from_weyl(
    phi_H: Callable,
    eta: float,
    a_max: float,
    grid: Grid,
    tail_tol: float = 0.05,
    eta0: float = 1.0,
) -> ResponseFunction:
    """r(t) = e^{eta t}/(2 pi) int_{-a}^{a} e^{-i xi t} (phi_H(xi + i eta) - i) d xi.

    The slowly decaying part c1/w + c2/w^2, w = z + i eta0, is fitted at
    xi = +-2a, subtracted and inverted in closed form; the remainder is
    integrated by the trapezoid rule with step at most pi/(4 T_max).  The
    reported tail estimate assumes the remainder decays at least like
    1/xi^2 beyond a.
    """
    if not eta > 0:
        raise ParameterError("eta must be positive", eta=eta)
    if not a_max > 0:
        raise ParameterError("a_max must be positive", a_max=a_max)
    a = float(a_max)
    rem = lambda xi: np.asarray(phi_H(np.asarray(xi) + 1j * eta), dtype=complex) - 1j
    ends = rem(np.array([-a, a]))
    decay = float(np.max(np.abs(ends)))
    if decay > tail_tol:
        raise TruncationError(
            "integrand has not decayed at +-a_max",
            value=decay,
            tail_tol=tail_tol,
            suggested_a_max=a * 2 * decay / tail_tol,
        )
    far = np.array([-2 * a, 2 * a])
    w = far + 1j * (eta + eta0)
    mat = np.stack([1 / w, 1 / w**2], axis=1)
    c1, c2 = np.linalg.solve(mat, rem(far))

    t = grid.nodes
    T = max(float(np.max(np.abs(t))), grid.h)
    dxi = math.pi / (4 * T)
    n = 2 * math.ceil(a / dxi)
    xi = np.linspace(-a, a, n + 1)
    wts = np.full(n + 1, xi[1] - xi[0])
    wts[[0, -1]] *= 0.5
    wz = xi + 1j * (eta + eta0)
    g = rem(xi) - c1 / wz - c2 / wz**2
    vals = np.exp(-1j * np.outer(t, xi)) @ (wts * g)
    r = np.exp(eta * t) / (2 * math.pi) * vals + _model_inverse(c1, c2, t, eta0)
    r = np.where(t < 0, 0.0, r)
    g_end = float(np.max(np.abs(g[[0, -1]])))
    tail = float(np.exp(eta * T) / math.pi * g_end * a)
    return ResponseFunction(
        SampledFunction(grid, r),
        "inverse-Fourier",
        {"tail_estimate": tail, "c1": complex(c1), "c2": complex(c2), "n_xi": n + 1},
    )


def laplace_check(r: ResponseFunction, phi_H: Callable, z: complex) -> float:
    """|int_0^T e^{izt} r(t) dt + i - phi_H(z)| with Simpson quadrature on the samples."""
    from scipy.integrate import simpson

    t = r.grid.nodes
    val = simpson(np.exp(1j * z * t) * r.values, x=t)
    return float(abs(val + 1j - phi_H(z)))


# -- high-energy asymptotics -------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticsReport:
    tau: np.ndarray
    delta: np.ndarray
    normalized: np.ndarray
    noise_floor: np.ndarray
    decreasing: bool
    resolved: np.ndarray = field(default=None)


def _exp_product_integral(g, h, tau):
    """int_0^{nh} e^{-tau x} g(x) dx with g piecewise linear between samples."""
    n = len(g) - 1
    b = tau * h
    if b < 1e-6:
        right = h * (0.5 - b / 3)
        left = h * (0.5 - b / 6)
    else:
        em = math.exp(-b)
        right = h * (1 - em - b * em) / b**2
        left = h * (-math.expm1(-b)) / b - right
    scale = np.exp(-tau * h * np.arange(n))
    return complex(np.sum(scale * (left * g[:-1] + right * g[1:])))


def check_asymptotics(
    phi_H: Callable,
    s: Union[Accelerant, Callable],
    l: float,
    tau_grid: Sequence[float],
) -> AsymptoticsReport:
    """Defect Delta(i tau) = phi_H(i tau) - i - 2i int_0^l e^{-tau x} conj(s'(x)) dx.

    ``s`` is either an Accelerant (piecewise-linear omega, exponential
    weight integrated exactly) or a callable giving s' = omega, integrated
    adaptively.  The normalized defect is |Delta| / (tau e^{-tau l}).  The
    noise floor is the rounding level of the subtraction; entries below it
    are flagged as unresolved but are reported as computed.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < 1 or np.any(tau <= 0) or np.any(np.diff(tau) <= 0):
        raise ParameterError("tau_grid must be positive and increasing")
    if not l > 0:
        raise ParameterError("l must be positive", l=l)
    delta = np.empty(tau.size, dtype=complex)
    floor = np.empty(tau.size)
    for k, tk in enumerate(tau):
        head = complex(phi_H(1j * tk)) - 1j
        if isinstance(s, Accelerant):
            grid = s.s.grid
            n = int(round(l / grid.h))
            if n < 1 or n > grid.n_points - 1 or abs(n * grid.h - l) > 1e-9 * l:
                raise ParameterError("l must be a grid multiple within the accelerant range", l=l)
            g = np.conj(s.omega_pos[: n + 1])
            integral = _exp_product_integral(g, grid.h, tk)
        else:
            f_re = lambda x: math.exp(-tk * x) * np.conj(complex(s(x))).real
            f_im = lambda x: math.exp(-tk * x) * np.conj(complex(s(x))).imag
            opts = dict(epsabs=0.0, epsrel=2e-14, limit=200)
            integral = quad(f_re, 0.0, l, **opts)[0] + 1j * quad(f_im, 0.0, l, **opts)[0]
        tail_term = 2j * integral
        delta[k] = head - tail_term
        floor[k] = 4 * EPS * (abs(head) + abs(tail_term))
    norm = tau * np.exp(-tau * l)
    normalized = np.abs(delta) / norm
    noise = floor / norm
    decreasing = bool(np.all(np.diff(normalized) < 0))
    return AsymptoticsReport(tau, delta, normalized, noise, decreasing, np.abs(delta) > floor)
