"""Acceptance checks, one test per criterion, at the stated tolerances.

Run under pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import math
import time
import warnings

import numpy as np
from scipy.integrate import quad

from dirac_echo import amplitude as am
from dirac_echo import dynamical as dy
from dirac_echo import gbdt
from dirac_echo import inverse as inv
from dirac_echo import spectral as sp
from dirac_echo.core import Grid, SampledFunction
from dirac_echo.errors import NotAValidAccelerantError, RegionWarning

E1 = gbdt.example("E1")
E2 = gbdt.example("E2")
V_EXACT = {
    "E1": lambda x: -2j / (1 + 2 * x),
    "E2": lambda x: -12j / (4 * np.exp(3 * x) - np.exp(-3 * x)),
}

# criterion number -> (passed, one-line detail); filled as the checks run
RESULTS: dict = {}


class Check:
    """Collects named sub-checks; a criterion passes when all of them do."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.items = []
        self.start = time.perf_counter()

    def le(self, label, value, bound):
        self.items.append((f"{label}={value:.3g}<={bound:g}", bool(value <= bound)))

    def ge(self, label, value, bound):
        self.items.append((f"{label}={value:.5g}>={bound:g}", bool(value >= bound)))

    def true(self, label, cond):
        self.items.append((label, bool(cond)))

    def runtime(self, limit):
        self.le("runtime_s", time.perf_counter() - self.start, limit)

    def finish(self):
        ok = all(flag for _, flag in self.items)
        failed = [lab for lab, flag in self.items if not flag]
        detail = "; ".join(lab for lab, _ in self.items)
        RESULTS[self.number] = (ok, f"{self.title}: {detail}" + (f"  [failed: {', '.join(failed)}]" if failed else ""))
        assert ok, RESULTS[self.number][1]


def line(number: int) -> str:
    ok, detail = RESULTS[number]
    return f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"


# -- shared forward runs (criteria 3 and 4) ------------------------------------------------

CTRL = dy.t2exp()


def exact_trace(t):
    """i f + r * f for E1 and f = t^2 e^{-t}, integrated by hand:
    int_0^t -2i e^{-2(t-s)} s^2 e^{-s} ds = -2i (e^{-t}(t^2 - 2t + 2) - 2 e^{-2t})."""
    return 1j * CTRL.f(t) - 2j * (np.exp(-t) * (t * t - 2 * t + 2) - 2 * np.exp(-2 * t))


@functools.lru_cache(maxsize=None)
def forward(solver: str, n: int):
    pot = gbdt.dynamical_potential(E1, length=2.0)
    h = 1.0 / n
    t0 = time.perf_counter()
    if solver == "series":
        F = dy.neumann_solve(pot, CTRL, (2.0, 2.0), h)
    else:
        F = dy.characteristics_solve(pot, CTRL, (2.0, 2.0), h)
    return F, time.perf_counter() - t0


def field_distance(a, b):
    return float(max(np.max(np.abs(a.u1 - b.u1)), np.max(np.abs(a.u2 - b.u2))))


# -- criteria --------------------------------------------------------------------------


def test_criterion_1_explicit_family_bridge():
    c = Check(1, "explicit-family bridge")
    rng = np.random.default_rng(20240601)
    zs = rng.uniform(-20, 20, 20) + 1j * rng.uniform(6, 50, 20)
    for name, P in (("E1", E1), ("E2", E2)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", RegionWarning)
            gap = np.max(np.abs(gbdt.weyl(P, zs) - gbdt.response_hat(P, zs) - 1j))
        c.le(f"{name}_bridge", gap, 1e-12)
        z = 10j
        g = lambda t: np.exp(1j * z * t) * gbdt.response(P, t)
        opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
        val = quad(lambda t: g(t).real, 0, 20, **opts)[0] + 1j * quad(lambda t: g(t).imag, 0, 20, **opts)[0]
        c.le(f"{name}_laplace", abs(val + 1j - gbdt.weyl(P, z)), 1e-8)
    c.runtime(1.0)
    c.finish()


def test_criterion_2_round_trip_inversion():
    c = Check(2, "round-trip inversion")
    for name, P in (("E1", E1), ("E2", E2)):
        t0 = time.perf_counter()
        errs = {}
        for N in (300, 600):
            g = Grid.from_interval(0.0, 2.0, N)
            r = dy.ResponseFunction(SampledFunction(g, gbdt.response(P, g.nodes)), "explicit")
            res = inv.invert_response_full(r, N)
            x = res.spectral.grid.nodes
            v = V_EXACT[name](x)
            errs[N] = float(np.max(np.abs(res.spectral.v.values - v)) / np.max(np.abs(v)))
        c.true(f"{name}_domain=[0,1]", abs(x[-1] - 1.0) < 1e-12)
        c.le(f"{name}_relerr_N600", errs[600], 1e-3)
        c.ge(f"{name}_order", math.log2(errs[300] / errs[600]), 1.8)
        c.le(f"{name}_runtime_s", time.perf_counter() - t0, 30.0)
    c.finish()


def test_criterion_3_forward_response_consistency():
    c = Check(3, "forward/response consistency")
    ser, t_ser = forward("series", 512)
    chr_, t_chr = forward("characteristics", 512)
    t = ser.t.nodes
    ref = exact_trace(t)
    c.le("series_trace_err", float(np.max(np.abs(ser.u2[0] - ref))), 5e-3)
    c.le("characteristics_trace_err", float(np.max(np.abs(chr_.u2[0] - ref))), 5e-3)
    d512 = field_distance(ser, chr_)
    c.le("cross_solver_dist", d512, 5e-3)
    (ser2, t_ser2), (chr2, t_chr2) = forward("series", 256), forward("characteristics", 256)
    d256 = field_distance(ser2, chr2)
    c.ge("observed_order", math.log2(d256 / d512), 1.0)
    c.le("runtime_s", t_ser + t_chr + t_ser2 + t_chr2, 60.0)
    c.finish()


def test_criterion_4_estimates_and_causality():
    c = Check(4, "estimates and causality")
    pot = gbdt.dynamical_potential(E1, length=2.0)
    worst_growth = 0.0
    worst_causal = 0.0
    for solver in ("series", "characteristics"):
        for n in (256, 512):
            F, _ = forward(solver, n)
            rep = dy.verify_estimates(F, CTRL, pot)
            worst_growth = max(worst_growth, rep.growth_ratio)
            if solver == "characteristics":
                worst_causal = max(worst_causal, rep.causality_residual)
    c.le("growth_ratio", worst_growth, 1 + 1e-6)
    c.le("causality_max", worst_causal, 1e-12)
    M = pot.M(2.0)
    g = Grid.from_interval(0.0, 2.0, 512)
    r_exact = dy.ResponseFunction(SampledFunction(g, gbdt.response(E1, g.nodes)), "explicit")
    c.le("r_bound_ratio_explicit", r_exact.bound_ratio(M), 1.0)
    r_extr = dy.extract_response(forward("series", 512)[0].boundary_u2(), CTRL)
    c.le("r_bound_ratio_extracted", r_extr.bound_ratio(M), 1.0)
    c.finish()


def test_criterion_5_positivity_gate():
    c = Check(5, "positivity gate")
    g = Grid.from_interval(0.0, 2.0, 400)
    acc = am.accelerant_from_response(SampledFunction(g, gbdt.response(E1, g.nodes)))
    for l in (0.5, 1.0, 2.0):
        lam = inv.build_structured_operator(acc, l, 200).min_eig
        c.true(f"min_eig(l={l:g})={lam:.4g}>0", lam > 0)
    om = -3 * np.exp(-2 * g.nodes)
    bad = am.accelerant_from_samples(g, om, 0.5 + np.concatenate([[0], np.cumsum(0.5 * g.h * (om[1:] + om[:-1]))]))
    try:
        inv.build_structured_operator(bad, 2.0, 200)
        raised = False
    except NotAValidAccelerantError:
        raised = True
    c.true("perturbed_rejected", raised)
    c.finish()


def test_criterion_6_weyl_estimation():
    c = Check(6, "Weyl estimation")
    W = sp.weyl_estimate(gbdt.spectral_potential(E1), 5j, 12.0, 1 / 512)
    c.le("phi_err", abs(W.phi + 1 / 6), 1e-4)
    c.le("phiH_err", abs(W.phi_H - 5j / 7), 1e-4)
    c.finish()


def test_criterion_7_asymptotics():
    c = Check(7, "asymptotics")
    tau = [5.0, 10.0, 20.0, 40.0]
    rep = am.check_asymptotics(lambda z: gbdt.weyl(E1, z), lambda x: -np.exp(-2 * x), 1.0, tau)
    vals = ", ".join(f"{v:.3g}" for v in rep.normalized)
    c.true(f"strictly_decreasing[{vals}]", rep.decreasing)
    c.finish()


def test_criterion_8_frequency_bridge():
    c = Check(8, "frequency bridge")
    h = 1 / 512
    z = 6j
    X = 0.5
    pot = gbdt.dynamical_potential(E1, length=X)
    M = pot.M(X)
    T = h * math.ceil(math.log(1e6) / (z.imag - M) / h)
    F = dy.characteristics_solve(pot, CTRL, (X, T), h, order=2)
    rep = sp.verify_frequency_bridge(F, CTRL, pot, z)
    c.true(f"tail={rep.tail_factor:.3g}<1e-6", rep.tail_factor < 1e-6)
    c.le("residual", rep.residual, 1e-3)
    c.le("collinearity", rep.collinearity_defect, 1e-3)
    c.finish()


ALL = [
    test_criterion_1_explicit_family_bridge,
    test_criterion_2_round_trip_inversion,
    test_criterion_3_forward_response_consistency,
    test_criterion_4_estimates_and_causality,
    test_criterion_5_positivity_gate,
    test_criterion_6_weyl_estimation,
    test_criterion_7_asymptotics,
    test_criterion_8_frequency_bridge,
]


if __name__ == "__main__":
    import sys

    failures = 0
    for number, fn in enumerate(ALL, start=1):
        try:
            fn()
        except AssertionError:
            pass
        except Exception as exc:  # report and keep going
            RESULTS[number] = (False, f"error: {type(exc).__name__}: {exc}")
        if number not in RESULTS:
            RESULTS[number] = (False, "did not complete")
        failures += not RESULTS[number][0]
        print(line(number), flush=True)
    sys.exit(1 if failures else 0)
