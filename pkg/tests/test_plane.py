import math

import numpy as np
import pytest

from sov_verify.core.exceptions import BudgetExceeded, NotConverged, OriginSingularity, PreconditionViolated
from sov_verify.services.cfield import FieldExponent
from sov_verify.services.plane import (
    IntegralEstimate,
    QuadratureSpec,
    cancelled,
    eval_propagator,
    fourier_closed,
    fourier_plane,
    fourier_propagator,
    integrate_c2,
    propagator_array,
    smooth_step,
)


def test_propagator_values():
    assert eval_propagator(FieldExponent.scalar(1), 2.0) == pytest.approx(0.25)
    # D_α(i) = e^{-i m π/2} for m = 1
    assert eval_propagator(FieldExponent(w=0.5, m2=2), 1j) == pytest.approx(-1j)


def test_propagator_star_is_conjugate(rng):
    alpha = FieldExponent(w=0.4 + 0.3j, m2=-4)
    z = complex(*rng.normal(size=2))
    assert eval_propagator(alpha.star(), z) == pytest.approx(eval_propagator(alpha, z).conjugate())


def test_propagator_array_matches_scalar(rng):
    alpha = FieldExponent(w=0.7 - 0.2j, m2=2)
    z = rng.normal(size=10) + 1j * rng.normal(size=10)
    expected = [eval_propagator(alpha, zi) for zi in z]
    np.testing.assert_allclose(propagator_array(alpha, z), expected, rtol=1e-13)


def test_propagator_origin():
    with pytest.raises(OriginSingularity):
        eval_propagator(FieldExponent.scalar(0.5), 0)


def test_smooth_step():
    values = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    np.testing.assert_allclose(values, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)


def test_spec_validation():
    with pytest.raises(PreconditionViolated):
        QuadratureSpec(abs_tol=0.0, rel_tol=1e-6, max_evals=10, outer_cutoff=10.0)
    multi = QuadratureSpec.default(2)
    assert multi.rel_tol == pytest.approx(1e-4)


def test_estimate_require():
    good = IntegralEstimate(1.0, 1e-9, 10, True)
    assert good.require() is good
    bad = IntegralEstimate(1.0, 0.5, 10, False)
    with pytest.raises(NotConverged) as info:
        bad.require()
    assert info.value.estimate is bad
    total = good + bad
    assert total.value == 2.0 and not total.converged and total.evals == 20


def test_gaussian_integral(loose_quad):
    estimate = integrate_c2(lambda z: np.exp(-np.abs(z) ** 2), 1, loose_quad)
    assert estimate.converged
    assert estimate.value == pytest.approx(math.pi, rel=1e-4)


def test_singular_center(loose_quad):
    spec = loose_quad.with_centers([0j])
    estimate = integrate_c2(lambda z: np.exp(-np.abs(z) ** 2) / np.abs(z), 1, spec)
    assert estimate.value == pytest.approx(math.pi**1.5, rel=1e-3)


def test_unsupported_dimension(loose_quad):
    with pytest.raises(PreconditionViolated):
        integrate_c2(lambda *z: z[0], 4, loose_quad)


def test_fourier_domain():
    with pytest.raises(OriginSingularity):
        fourier_propagator(FieldExponent.scalar(0.6), 0)
    with pytest.raises(PreconditionViolated):
        fourier_propagator(FieldExponent.scalar(0.1), 1.0)


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [FieldExponent(w=0.6 + 0.1j, m2=2), FieldExponent(w=0.8, m2=0)])
def test_fourier_matches_closed_form(alpha):
    p = 0.7 + 0.3j
    estimate = fourier_propagator(alpha, p)
    assert estimate.value == pytest.approx(fourier_closed(alpha, p), rel=1e-4)


def test_cancellation_stops_quadrature(loose_quad):
    cancelled.set()
    try:
        with pytest.raises(BudgetExceeded):
            integrate_c2(lambda z: np.exp(-np.abs(z) ** 2), 1, loose_quad)
    finally:
        cancelled.clear()


def test_default_spec_reads_max_level(monkeypatch):
    monkeypatch.setenv("SOV_VERIFY_QUAD_MAX_LEVEL", "5")
    assert QuadratureSpec.default(1).max_level == 5


@pytest.mark.slow
def test_fourier_plane_matches_closed_form():
    alpha = FieldExponent(w=0.6 + 0.1j, m2=2)
    p = 0.7 + 0.3j
    spec = QuadratureSpec.default(1, outer_cutoff=100.0, rel_tol=1e-4, max_evals=20_000_000)
    estimate = fourier_plane(alpha, p, spec).require()
    assert estimate.value == pytest.approx(fourier_closed(alpha, p), rel=1e-3)
