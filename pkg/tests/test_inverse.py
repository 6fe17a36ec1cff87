import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirac_echo import amplitude as am
from dirac_echo import gbdt
from dirac_echo import inverse as inv
from dirac_echo.core import Grid, SampledFunction
from dirac_echo.dynamical import ResponseFunction
from dirac_echo.errors import (
    DifferentiationError,
    NotAValidAccelerantError,
    ParameterError,
    RegionWarning,
)

E1 = gbdt.example("E1")
E2 = gbdt.example("E2")
HALF = np.array([-1.0, 1.0]) / np.sqrt(2)


def response_of(params, N, T=2.0):
    g = Grid.from_interval(0.0, T, N)
    return ResponseFunction(SampledFunction(g, gbdt.response(params, g.nodes)), "explicit")


def accelerant(omega, N=400, T=2.0):
    g = Grid.from_interval(0.0, T, N)
    om = omega(g.nodes).astype(complex)
    s = 0.5 + np.concatenate([[0], np.cumsum(0.5 * g.h * (om[1:] + om[:-1]))])
    return am.accelerant_from_samples(g, om, s)


ACC_E1 = accelerant(lambda x: -np.exp(-2 * x))
ACC_ZERO = accelerant(lambda x: 0 * x)


def test_zero_accelerant_gives_identity():
    S = inv.build_structured_operator(ACC_ZERO, 1.0, 50)
    np.testing.assert_array_equal(S.matrix, np.eye(50))
    assert S.min_eig == 1.0


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
def test_e1_operator_positive_and_hermitian(l):
    S = inv.build_structured_operator(ACC_E1, l, 200)
    assert S.min_eig > 0
    assert np.max(np.abs(S.matrix - S.matrix.conj().T)) <= 1e-12


def test_non_accelerant_rejected():
    bad = accelerant(lambda x: -3 * np.exp(-2 * x))
    with pytest.raises(NotAValidAccelerantError) as info:
        inv.build_structured_operator(bad, 2.0, 200)
    assert info.value.context["min_eig"] < 0


def test_operator_preconditions():
    with pytest.raises(ParameterError):
        inv.build_structured_operator(ACC_E1, 1.0, 4)
    with pytest.raises(ParameterError):
        inv.build_structured_operator(ACC_E1, 2.5, 50)


def test_nested_positivity():
    eigs = [inv.build_structured_operator(ACC_E1, l, 101).min_eig for l in (0.25, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(eigs) < 0) and eigs[-1] > 0


def test_theta2_zero_accelerant():
    for x in (0.1, 0.5, 1.0):
        np.testing.assert_allclose(inv.recover_theta2(ACC_ZERO, x, 40), HALF, atol=1e-15)
    np.testing.assert_array_equal(inv.recover_theta2(ACC_E1, 0.0, 40), HALF)


def test_theta2_small_x_limit():
    np.testing.assert_allclose(inv.recover_theta2(ACC_E1, 1e-6, 16), HALF, atol=1e-5)


def test_theta1_examples():
    np.testing.assert_allclose(inv.recover_theta1(HALF), np.array([1, 1]) / np.sqrt(2))
    np.testing.assert_array_equal(inv.recover_theta1(np.array([0, 1j])), [0, -1j])


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=1e3), st.complex_numbers(max_magnitude=1e3))
def test_frame_relation_is_exact(a, b):
    t2 = np.array([a, b])
    t1 = inv.recover_theta1(t2)
    assert abs(t1 @ inv.J @ t2.conj()) <= 4 * np.finfo(float).eps * abs(a) * abs(b)


def test_recover_potential_constant_thetas():
    g = Grid.from_interval(0, 1, 10)
    t2 = np.tile(HALF, (11, 1)).astype(complex)
    v = inv.recover_potential(inv.ThetaPair(g, inv.recover_theta1(t2), t2))
    np.testing.assert_array_equal(v.v.values, 0)


def test_recover_potential_needs_three_points():
    g = Grid.from_interval(0, 1, 1)
    t2 = np.tile(HALF, (2, 1)).astype(complex)
    with pytest.raises(DifferentiationError):
        inv.recover_potential(inv.ThetaPair(g, inv.recover_theta1(t2), t2))


def test_invert_zero_response():
    res = inv.invert_response_full(ResponseFunction(SampledFunction(Grid.from_interval(0, 2, 40), np.zeros(41))))
    np.testing.assert_array_equal(res.spectral.v.values, 0)
    x = res.potential.grid.nodes
    np.testing.assert_array_equal(res.potential.p_at(x), 0)
    np.testing.assert_array_equal(res.potential.q_at(x), 0)


@pytest.mark.parametrize(
    "params, exact",
    [(E1, lambda x: -2j / (1 + 2 * x)), (E2, lambda x: -12j / (4 * np.exp(3 * x) - np.exp(-3 * x)))],
)
def test_invert_explicit_family(params, exact):
    errs = []
    for N in (100, 200):
        res = inv.invert_response_full(response_of(params, N))
        x = res.spectral.grid.nodes
        v = exact(x)
        errs.append(np.max(np.abs(res.spectral.v.values - v)) / np.max(np.abs(v)))
        assert res.info["frame_defect"] < 1e-12
        assert res.min_eig > 0
        np.testing.assert_allclose(res.potential.p_at(x), -v.real, atol=2 * errs[-1] * np.max(np.abs(v)))
        np.testing.assert_allclose(res.potential.q_at(x), v.imag, atol=2 * errs[-1] * np.max(np.abs(v)))
    assert errs[1] < 1e-2
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_theta2_pipeline_consistency():
    res = inv.invert_response_full(response_of(E1, 100))
    acc = am.accelerant_from_response(response_of(E1, 100))
    m = 30
    np.testing.assert_allclose(inv.recover_theta2(acc, res.thetas.grid.nodes[m], m), res.thetas.theta2[m], atol=1e-13)


def test_half_interval_rule():
    with pytest.warns(RegionWarning):
        res = inv.invert_response_full(response_of(E1, 60, T=3.0), half_warn=True)
    assert res.potential.grid.end == pytest.approx(1.5)
    assert res.spectral.grid.nodes.max() <= 1.5 + 1e-12


def test_invert_resamples_and_validates():
    r = response_of(E1, 300)
    a = inv.invert_response_full(r, 100)
    assert a.spectral.grid.n_points == 101
    with pytest.raises(ParameterError):
        inv.invert_response(r, 101)
    with pytest.raises(ParameterError):
        inv.invert_response(r, 6)


def test_positivity_failure_names_x():
    g = Grid.from_interval(0.0, 2.0, 100)
    bad = ResponseFunction(SampledFunction(g, -6j * np.exp(-2 * g.nodes)))
    with pytest.raises(NotAValidAccelerantError) as info:
        inv.invert_response(bad)
    assert 0 < info.value.context["x"] <= 1.0


def test_thread_count_does_not_change_result(monkeypatch):
    r = response_of(E2, 120)
    out = []
    for n in ("1", "4"):
        monkeypatch.setenv("DIRAC_ECHO_THREADS", n)
        out.append(inv.invert_response_full(r).spectral.v.values)
    np.testing.assert_array_equal(out[0], out[1])
