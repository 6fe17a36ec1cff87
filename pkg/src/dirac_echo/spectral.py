"""Frequency-domain side: fundamental solutions, Weyl functions and the
Fourier bridge from the dynamical system.

The spectral system is ``y' = i (z j + j V(x)) y`` with ``j = diag(1, -1)``
and ``V = [[0, v], [conj(v), 0]]``.  Its fundamental solution Y(x, z) with
Y(0, z) = I is integrated by the exponential midpoint rule, which keeps
det Y = 1 step by step because the generator is trace free.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .core import DynamicalPotential, Grid, SpectralPotential, dyn_to_spec
from .errors import (
    MobiusPoleError,
    NonContractiveEstimateError,
    ParameterError,
    PreconditionError,
    StepSizeWarning,
)

SQ2 = math.sqrt(2.0)

# frame constants
K = np.array([[1.0, -1.0], [1.0, 1.0]]) / SQ2
K_DYN = np.array([[1j, 1.0], [-1j, 1.0]]) / SQ2
J = np.array([[0.0, 1.0], [1.0, 0.0]])
j = np.diag([1.0, -1.0])
J_DYN = np.array([[0.0, 1.0], [-1.0, 0.0]])

for _m in (K, K_DYN, J, j, J_DYN):
    _m.setflags(write=False)


def validate_frames(atol: float = 1e-14) -> None:
    """Check the frame identities by direct multiplication.

    K K* = I, K_DYN K_DYN* = I, K j K* = J (equivalently K* J K = j),
    K_DYN J_DYN K_DYN* = i j and, for the potential dictionary v = i q - p,
    K_DYN J_DYN V_dyn K_DYN* = i j V.
    """
    I = np.eye(2)
    p, q = 0.37, -1.21
    v = 1j * q - p
    V_dyn = np.array([[p, q], [q, -p]])
    V = np.array([[0, v], [np.conj(v), 0]])
    checks = {
        "K unitary": K @ K.conj().T - I,
        "K_DYN unitary": K_DYN @ K_DYN.conj().T - I,
        "K j K* = J": K @ j @ K.conj().T - J,
        "K* J K = j": K.conj().T @ J @ K - j,
        "K_DYN J_DYN K_DYN* = i j": K_DYN @ J_DYN @ K_DYN.conj().T - 1j * j,
        "K_DYN J_DYN V K_DYN* = i j V": K_DYN @ J_DYN @ V_dyn @ K_DYN.conj().T - 1j * j @ V,
    }
    for name, defect in checks.items():
        if np.max(np.abs(defect)) > atol:
            raise RuntimeError(f"frame identity failed: {name}")


validate_frames()


# -- Moebius conversions -------------------------------------------------------------

MOBIUS_ATOL = 1e-12


def phi_from_herglotz(phi_H):
    return (phi_H - 1j) / (phi_H + 1j)


def herglotz_from_phi(phi):
    if np.any(np.abs(1 - np.asarray(phi)) < MOBIUS_ATOL):
        raise MobiusPoleError("phi is too close to 1 for the inverse Moebius map", phi=[complex(phi).real, complex(phi).imag] if np.ndim(phi) == 0 else None)
    return 1j * (1 + phi) / (1 - phi)


# -- fundamental solution ----------------------------------------------------------------


def _expm_traceless(B):
    """exp(B) for a batch of traceless 2x2 matrices: cosh(mu) I + sinh(mu)/mu B, mu^2 = -det B."""
    mu = np.sqrt(-np.linalg.det(B) + 0j)
    small = np.abs(mu) < 1e-6
    safe = np.where(small, 1.0, mu)
    shc = np.where(small, 1 + mu * mu / 6 + mu**4 / 120, np.sinh(mu) / safe)
    return np.cosh(mu)[..., None, None] * np.eye(2) + shc[..., None, None] * B


def _steps(L, h):
    n = L / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-8 * max(1, n):
        raise ParameterError("L must be a positive multiple of h", L=L, h=h)
    return k


def step_matrices(v: SpectralPotential, z: complex, L: float, h: float) -> np.ndarray:
    """One-step propagators exp(i h (z j + j V(x_k + h/2)))."""
    if not (h > 0 and L > 0):
        raise ParameterError("h and L must be positive", h=h, L=L)
    n = _steps(L, h)
    xm = (np.arange(n) + 0.5) * h
    vm = v.v_at(xm)
    G = np.zeros((n, 2, 2), dtype=complex)
    G[:, 0, 0] = z
    G[:, 1, 1] = -z
    G[:, 0, 1] = vm
    G[:, 1, 0] = -np.conj(vm)
    return _expm_traceless(1j * h * G)


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    grid: Grid
    z: complex
    Y: np.ndarray

    def at_end(self) -> np.ndarray:
        return self.Y[-1]


def fundamental_solution(
    v: SpectralPotential, z: complex, L: float, h: float, tol: Optional[float] = None
) -> FundamentalSolution:
    """Integrate Y' = i (z j + j V) Y, Y(0) = I, by the exponential midpoint rule.

    With ``tol`` set, the step is checked against a run with step 2h (order-2
    Richardson estimate); a StepSizeWarning carries the estimated relative
    error if it exceeds ``tol``.
    """
    z = complex(z)
    E = step_matrices(v, z, L, h)
    n = E.shape[0]
    Y = np.empty((n + 1, 2, 2), dtype=complex)
    Y[0] = np.eye(2)
    for k in range(n):
        Y[k + 1] = E[k] @ Y[k]
    if tol is not None and n % 2 == 0:
        E2 = step_matrices(v, z, L, 2 * h)
        Yc = np.eye(2, dtype=complex)
        for M in E2:
            Yc = M @ Yc
        est = float(np.linalg.norm(Y[-1] - Yc) / 3 / max(np.linalg.norm(Y[-1]), 1e-300))
        if est > tol:
            warnings.warn(StepSizeWarning(f"estimated relative error {est:.2e} exceeds {tol:.2e}", est), stacklevel=2)
    return FundamentalSolution(Grid(0.0, h, n + 1), z, Y)


# -- Weyl function -----------------------------------------------------------------


@dataclass(frozen=True)
class WeylValue:
    """Weyl function value at z in both conventions.

    ``phi`` is contractive; ``phi_H = i (1 + phi) / (1 - phi)`` is Herglotz.
    """

    z: complex
    phi: complex
    phi_H: complex
    info: dict = field(default_factory=dict, compare=False)


def _min_growth(Y) -> complex:
    c1, c2 = Y[:, 0], Y[:, 1]
    return complex(-np.vdot(c2, c1) / np.vdot(c2, c2))


def weyl_estimate(
    v: SpectralPotential,
    z: complex,
    L: float,
    h: float,
    eta_min: float = 0.5,
    tol: float = 1e-8,
) -> WeylValue:
    """phi(z) as the least-growth coefficient w minimising ||Y(L, z) [1; w]||.

    The product of step propagators is rescaled as it is accumulated (the
    ratio defining phi is scale invariant), so large Im(z) L cannot
    overflow.  The value at L/2 is kept as a convergence diagnostic.
    """
    z = complex(z)
    if z.imag < eta_min:
        raise PreconditionError("Im z is below eta_min", z=[z.real, z.imag], eta_min=eta_min)
    E = step_matrices(v, z, L, h)
    n = E.shape[0]
    half = n // 2
    Y = np.eye(2, dtype=complex)
    phi_half = None
    for k in range(n):
        Y = E[k] @ Y
        nrm = np.abs(Y).max()
        if nrm > 1e100:
            Y /= nrm
        if k + 1 == half:
            phi_half = _min_growth(Y)
    phi = _min_growth(Y)
    if abs(phi) > 1 + tol:
        raise NonContractiveEstimateError(
            "estimate is not contractive; increase L or Im z", phi_abs=abs(phi), L=L, z=[z.real, z.imag]
        )
    phi_H = complex(herglotz_from_phi(phi))
    diff = abs(phi - phi_half) if phi_half is not None else float("nan")
    return WeylValue(z, phi, phi_H, {"L": L, "h": h, "phi_half": phi_half, "richardson": diff})


def weyl_solution(v: SpectralPotential, z: complex, L: float, h: float) -> tuple:
    """The square-summable solution Y(x, z) [1; phi] on [0, L].

    Forward evaluation of Y [1; phi] cancels catastrophically, so the
    solution is propagated backward from L, starting at the direction of
    least growth of Y(L); backward integration amplifies exactly that
    solution.  Returns ``(grid, w, phi)`` with w normalised to w_1(0) = 1.
    """
    z = complex(z)
    E = step_matrices(v, z, L, h)
    n = E.shape[0]
    Y = np.eye(2, dtype=complex)
    for k in range(n):
        Y = E[k] @ Y
        nrm = np.abs(Y).max()
        if nrm > 1e100:
            Y /= nrm
    U, _, _ = np.linalg.svd(Y)
    w = np.empty((n + 1, 2), dtype=complex)
    logs = np.zeros(n + 1)
    w[n] = U[:, 1]
    # inverse of a unimodular 2x2 is its adjugate
    Einv = np.empty_like(E)
    Einv[:, 0, 0] = E[:, 1, 1]
    Einv[:, 1, 1] = E[:, 0, 0]
    Einv[:, 0, 1] = -E[:, 0, 1]
    Einv[:, 1, 0] = -E[:, 1, 0]
    for k in range(n - 1, -1, -1):
        w[k] = Einv[k] @ w[k + 1]
        nrm = np.abs(w[k]).max()
        logs[k] = logs[k + 1]
        if nrm > 1e100:
            w[k] /= nrm
            logs[k] += math.log(nrm)
    scale = np.exp(logs - logs[0])
    w = w / scale[:, None]
    w0 = w[0, 0]
    if w0 == 0:
        raise MobiusPoleError("Weyl solution has vanishing first component at x = 0")
    w = w / w0
    return Grid(0.0, h, n + 1), w, complex(w[0, 1])


# -- Fourier bridge -------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeReport:
    z: complex
    residual: float
    relative_residual: float
    collinearity_defect: float
    tail_factor: float


def fourier_transform(field, z: complex) -> np.ndarray:
    """u_hat(x, z) = int_0^T e^{izt} u(x, t) dt by composite Simpson; shape (nx, 2)."""
    t = field.t.nodes
    ker = np.exp(1j * z * t)[None, :]
    u1 = simpson(field.u1 * ker, x=t, axis=1)
    u2 = simpson(field.u2 * ker, x=t, axis=1)
    return np.stack([u1, u2], axis=1)


def verify_frequency_bridge(
    field,
    ctrl,
    pot: DynamicalPotential,
    z: complex,
    L_weyl: Optional[float] = None,
) -> BridgeReport:
    """Check the Fourier image of a forward solve against the spectral side.

    (a) residual ``max_x ||z u_hat + J_DYN u_hat' + V_dyn u_hat||`` with the
    x-derivative by second-order differences; (b) the largest sine of the
    angle between K_DYN u_hat(x, z) and the Weyl solution Y(x, z) [1; phi].
    ``ctrl`` is accepted for symmetry with the other diagnostics; the data
    needed here is already in the field.
    """
    z = complex(z)
    X, T = field.x.end, field.t.end
    M = pot.M(max(X, T))
    if z.imag <= M:
        raise PreconditionError("Im z must exceed M", z=[z.real, z.imag], M=M)
    h = field.x.h
    uh = fourier_transform(field, z)
    x = field.x.nodes
    d = np.gradient(uh, h, axis=0, edge_order=2)
    Vd = pot.matrix(x)
    res = z * uh + d @ J_DYN.T + np.einsum("kab,kb->ka", Vd, uh)
    rnorm = np.linalg.norm(res, axis=1)
    scale = float(np.max(np.abs(z) * np.linalg.norm(uh, axis=1)))
    residual = float(np.max(rnorm))
    rel = residual / scale if scale > 0 else 0.0

    if scale == 0:
        defect = 0.0
    else:
        extra = L_weyl if L_weyl is not None else max(4.0, 24.0 / z.imag)
        Lw = h * math.ceil((X + extra) / h)
        _, w, _ = weyl_solution(dyn_to_spec(pot), z, Lw, h)
        y = uh @ K_DYN.T
        wk = w[: len(x)]
        cross = np.abs(y[:, 0] * wk[:, 1] - y[:, 1] * wk[:, 0])
        denom = np.linalg.norm(y, axis=1) * np.linalg.norm(wk, axis=1)
        defect = float(np.max(cross / denom))
    tail = math.exp(-(z.imag - M) * T)
    return BridgeReport(z, residual, rel, defect, tail)
