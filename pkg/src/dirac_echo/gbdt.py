"""Explicit pseudo-exponential potentials generated by a matrix triple.

A triple (A, theta1, theta2) with A an n x n matrix and theta1, theta2 in
C^n, subject to

    A - A^* = i (theta1 theta1^* - theta2 theta2^*),

generates in closed form a potential v(x), its Herglotz Weyl function
phi_H(z) and the response function r(t) of the matching dynamical system.
These are exact and serve as reference values for every numerical route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

from .core import DynamicalPotential, SpectralPotential, spec_to_dyn
from .errors import (
    InvalidParametersError,
    ParseError,
    PoleError,
    RegionWarning,
    SingularMatrixError,
)

PARAM_ATOL = 1e-12
POLE_ATOL = 1e-12
EIG_COND_MAX = 1e8


@dataclass(frozen=True, eq=False)
class GBDTParams:
    n: int
    A: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    alpha: np.ndarray

    @property
    def Lambda0(self) -> np.ndarray:
        return np.stack([self.theta1, self.theta2], axis=1)


@dataclass(frozen=True, eq=False)
class GBDTState:
    x: float
    Lambda1: np.ndarray
    Lambda2: np.ndarray
    S: np.ndarray


def validate_params(A, theta1, theta2, n: Optional[int] = None, atol: float = PARAM_ATOL) -> GBDTParams:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    t1 = np.asarray(theta1, dtype=complex).reshape(-1)
    t2 = np.asarray(theta2, dtype=complex).reshape(-1)
    n = A.shape[0] if n is None else int(n)
    if A.shape != (n, n) or t1.shape != (n,) or t2.shape != (n,):
        raise InvalidParametersError(
            "inconsistent dimensions", n=n, A=list(A.shape), theta1=t1.size, theta2=t2.size
        )
    lhs = A - A.conj().T
    rhs = 1j * (np.outer(t1, t1.conj()) - np.outer(t2, t2.conj()))
    defect = float(np.linalg.norm(lhs - rhs, 2))
    if defect > atol * max(1.0, np.linalg.norm(A, 2)):
        raise InvalidParametersError("A - A* != i(theta1 theta1* - theta2 theta2*)", defect=defect)
    alpha = A - 1j * np.outer(t1, (t1 + t2).conj())
    s = t1 + t2
    alt = float(np.linalg.norm(alpha - alpha.conj().T + 1j * np.outer(s, s.conj()), 2))
    if alt > 10 * atol * max(1.0, np.linalg.norm(A, 2)):
        raise InvalidParametersError("alpha identity check failed", defect=alt)
    for arr in (A, t1, t2, alpha):
        arr.setflags(write=False)
    return GBDTParams(n, A, t1, t2, alpha)


def example(name: str) -> GBDTParams:
    """Reference triples: ``E1`` gives v = -2i/(1+2x), ``E2`` gives v = -12i/(4e^{3x} - e^{-3x})."""
    if name == "E1":
        return validate_params([[0.0]], [1.0], [1.0])
    if name == "E2":
        return validate_params([[-1.5j]], [1.0], [2.0])
    raise KeyError(name)


# -- serialisation ------------------------------------------------------------


def _pairs(arr) -> list:
    return [[float(c.real), float(c.imag)] for c in np.asarray(arr, dtype=complex).reshape(-1)]


def params_to_json(params: GBDTParams) -> str:
    doc = {
        "n": params.n,
        "A": _pairs(params.A),
        "theta1": _pairs(params.theta1),
        "theta2": _pairs(params.theta2),
    }
    return json.dumps(doc, indent=2)


def _unpairs(obj, count, name) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be an array of [re, im] pairs")
    if arr.shape != (count, 2):
        raise ParseError(f"{name} has wrong shape", expected=[count, 2], got=list(arr.shape))
    return arr[:, 0] + 1j * arr[:, 1]


def params_from_dict(doc: dict) -> GBDTParams:
    try:
        n = int(doc["n"])
        A = _unpairs(doc["A"], n * n, "A").reshape(n, n)
        t1 = _unpairs(doc["theta1"], n, "theta1")
        t2 = _unpairs(doc["theta2"], n, "theta2")
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed params document: {exc}")
    return validate_params(A, t1, t2, n=n)


def load_params(path) -> GBDTParams:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read params file: {exc}", path=str(path))
    return params_from_dict(doc)


# -- closed forms ---------------------------------------------------------------


def _eig(M):
    """Eigendecomposition when well conditioned, else None."""
    w, P = np.linalg.eig(M)
    if np.linalg.cond(P) > EIG_COND_MAX:
        return None
    return w, P, np.linalg.inv(P)


def _int_exp(beta, x):
    """Entrywise integral of exp(beta t) over [0, x]."""
    bx = beta * x
    small = np.abs(bx) < 1e-8
    safe = np.where(small, 1.0, beta)
    return np.where(small, x * (1 + bx / 2 + bx * bx / 6), np.expm1(bx) / safe)


def _gram_closed(w, P, Pinv, theta, sign, x):
    """int_0^x e^{sign*i t A} theta theta^* e^{-sign*i t A^*} dt via A = P diag(w) P^-1."""
    c = Pinv @ theta
    beta = sign * 1j * (w[:, None] - w.conj()[None, :])
    core = np.outer(c, c.conj()) * _int_exp(beta, x)
    return P @ core @ P.conj().T


def S_matrix(params: GBDTParams, x: float) -> np.ndarray:
    """S(x) = I + int_0^x Lambda(t) Lambda(t)^* dt."""
    n = params.n
    if x == 0:
        return np.eye(n, dtype=complex)
    dec = _eig(params.A)
    if dec is not None:
        w, P, Pinv = dec
        G = _gram_closed(w, P, Pinv, params.theta1, -1, x) + _gram_closed(w, P, Pinv, params.theta2, 1, x)
    else:
        def integrand(t):
            l1 = sla.expm(-1j * t * params.A) @ params.theta1
            l2 = sla.expm(1j * t * params.A) @ params.theta2
            return np.outer(l1, l1.conj()) + np.outer(l2, l2.conj())

        G, _ = quad_vec(integrand, 0.0, x, epsabs=1e-14, epsrel=1e-13)
    S = np.eye(n) + G
    return 0.5 * (S + S.conj().T)


def state(params: GBDTParams, x: float) -> GBDTState:
    l1 = sla.expm(-1j * x * params.A) @ params.theta1
    l2 = sla.expm(1j * x * params.A) @ params.theta2
    return GBDTState(float(x), l1, l2, S_matrix(params, x))


def _potential_scalar(params: GBDTParams, x: float) -> complex:
    S = S_matrix(params, x)
    left = params.theta1.conj() @ sla.expm(1j * x * params.A.conj().T)
    right = sla.expm(1j * x * params.A) @ params.theta2
    try:
        c = sla.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("S(x) is not positive definite; quadrature failure", x=float(x))
    return complex(-2j * left @ sla.cho_solve(c, right))


def _potential_batch(params: GBDTParams, xs: np.ndarray, dec) -> np.ndarray:
    """Closed-form S(x), Lambda(x) over a batch of x through A = P diag(w) P^-1."""
    w, P, Pinv = dec
    c1 = Pinv @ params.theta1
    c2 = Pinv @ params.theta2
    l1 = (np.exp(-1j * np.outer(xs, w)) * c1) @ P.T
    l2 = (np.exp(1j * np.outer(xs, w)) * c2) @ P.T
    b1 = -1j * (w[:, None] - w.conj()[None, :])
    b2 = -b1
    X = xs[:, None, None]
    core = np.outer(c1, c1.conj()) * _int_exp(b1, X) + np.outer(c2, c2.conj()) * _int_exp(b2, X)
    S = np.eye(params.n) + P @ core @ P.conj().T
    S = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("S(x) is not positive definite; quadrature failure")
    sol = np.linalg.solve(S, l2[..., None])[..., 0]
    return -2j * np.einsum("ki,ki->k", l1.conj(), sol)


def potential(params: GBDTParams, x):
    """v(x) = -2i theta1^* e^{ixA^*} S(x)^{-1} e^{ixA} theta2 (vectorised over x)."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise InvalidParametersError("potential is defined for x >= 0")
    flat = xs.reshape(-1)
    dec = _eig(params.A)
    if dec is not None:
        out = _potential_batch(params, flat, dec)
    else:
        out = np.array([_potential_scalar(params, float(xi)) for xi in flat], dtype=complex)
    return out.reshape(xs.shape) if xs.ndim else complex(out[0])


def spectral_potential(params: GBDTParams, length: Optional[float] = None) -> SpectralPotential:
    return SpectralPotential(lambda x: potential(params, x), length=length)


def dynamical_potential(params: GBDTParams, length: Optional[float] = None, bound: Optional[float] = None) -> DynamicalPotential:
    dyn = spec_to_dyn(spectral_potential(params, length), bound=bound)
    return DynamicalPotential(dyn.p, dyn.q, bound=bound, length=length)


def _check_pole(params: GBDTParams, z: complex):
    ev = np.linalg.eigvals(params.alpha)
    gap = float(np.min(np.abs(ev - z)))
    if gap < POLE_ATOL:
        raise PoleError("z is an eigenvalue of alpha", z=[z.real, z.imag], gap=gap)


def weyl(params: GBDTParams, z):
    """phi_H(z) = i + 2 theta2^* (z I - alpha)^{-1} theta1, solved directly."""
    zs = np.asarray(z, dtype=complex)
    out = np.empty(zs.size, dtype=complex)
    I = np.eye(params.n)
    for k, zk in enumerate(zs.reshape(-1)):
        _check_pole(params, complex(zk))
        out[k] = 1j + 2 * params.theta2.conj() @ np.linalg.solve(zk * I - params.alpha, params.theta1)
    return out.reshape(zs.shape) if zs.ndim else complex(out[0])


def response(params: GBDTParams, t):
    """r(t) = -2i theta2^* e^{-it alpha} theta1 for t >= 0 (zero for t < 0)."""
    ts = np.asarray(t, dtype=float)
    flat = ts.reshape(-1)
    dec = _eig(params.alpha)
    if dec is not None:
        w, P, Pinv = dec
        left = params.theta2.conj() @ P
        right = Pinv @ params.theta1
        vals = -2j * (np.exp(-1j * np.outer(flat, w)) @ (left * right))
    else:
        vals = np.array(
            [-2j * params.theta2.conj() @ sla.expm(-1j * tk * params.alpha) @ params.theta1 for tk in flat]
        )
    vals = np.where(flat < 0, 0.0, vals)
    return vals.reshape(ts.shape) if ts.ndim else complex(vals[0])


def response_hat(params: GBDTParams, z):
    """Laplace-Fourier transform of ``response``: 2 theta2^* (z I - alpha)^{-1} theta1.

    Evaluated through the eigen-expansion of alpha (the transform of the
    exponential sum), so it is an independent route from ``weyl``.  Outside
    Im z > ||alpha|| the formula is still evaluated but a RegionWarning is
    issued.
    """
    import warnings

    zs = np.asarray(z, dtype=complex)
    flat = zs.reshape(-1)
    norm = float(np.linalg.norm(params.alpha, 2))
    if np.any(flat.imag <= norm):
        warnings.warn(
            RegionWarning("Im z <= ||alpha||: outside the guaranteed region", value=norm), stacklevel=2
        )
    for zk in flat:
        _check_pole(params, complex(zk))
    dec = _eig(params.alpha)
    if dec is not None:
        w, P, Pinv = dec
        c = (params.theta2.conj() @ P) * (Pinv @ params.theta1)
        vals = 2 * (1.0 / (flat[:, None] - w[None, :])) @ c
    else:
        I = np.eye(params.n)
        vals = np.array([2 * params.theta2.conj() @ np.linalg.solve(zk * I - params.alpha, params.theta1) for zk in flat])
    return vals.reshape(zs.shape) if zs.ndim else complex(vals[0])


def contractive_weyl(params: GBDTParams, z):
    """phi(z) = r_hat / (r_hat + 2i)."""
    rh = response_hat(params, z)
    return rh / (rh + 2j)
