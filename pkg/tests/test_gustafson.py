import math

import pytest

from sov_verify.core.exceptions import (
    BranchCutHit,
    ConvergenceDomainViolated,
    PoleOnContour,
    PreconditionViolated,
)
from sov_verify.services import gustafson as mb
from sov_verify.services.cfield import FieldExponent, gamma_ratio
from sov_verify.services.sov import SeparatedPoint

SMALL = mb.MBSpec(n_max=2, nu_cutoff=6.0, tol=5e-2, nodes=8)
WIDE = mb.MBSpec(n_max=12)


def shifted_params(count):
    z = [FieldExponent(-0.45, 4), FieldExponent(-0.4 + 0.05j, 4), FieldExponent(-0.42, 4)]
    w = [FieldExponent.scalar(-0.45), FieldExponent.scalar(-0.4), FieldExponent(-0.42 - 0.03j, 0)]
    return mb.MBParams(tuple(z[:count]), tuple(w[:count]))


def test_spec_validation():
    with pytest.raises(PreconditionViolated):
        mb.MBSpec(sigma=2)
    with pytest.raises(PreconditionViolated):
        mb.MBSpec(n_max=0)
    with pytest.raises(PreconditionViolated):
        mb.MBSpec(tol=0.0)


def test_spec_defaults_from_settings(monkeypatch):
    monkeypatch.setenv("SOV_VERIFY_MB_N_MAX", "3")
    spec = mb.MBSpec.default(tol=1e-3)
    assert spec.n_max == 3
    assert spec.tol == 1e-3


def test_params_validation():
    with pytest.raises(PreconditionViolated):
        mb.MBParams((FieldExponent.scalar(0.1),), ())
    params = mb.MBParams.from_pairs([(0.6, 0.6), (0.2, 0.2)], [(0.2, 0.2), (0.1, 0.1)])
    assert params.continuous_sum() == pytest.approx(1.1)
    with pytest.raises(ConvergenceDomainViolated):
        params.check_convergence()


def test_parity_compatibility():
    params = shifted_params(2)
    assert params.parity_compatible(0)
    assert not params.parity_compatible(1)
    half = mb.MBParams.from_pairs([(0.25, -0.25)], [(0.1 + 0.25, 0.1 - 0.25)])
    assert half.parity_compatible(1)


def test_first_outside_domain():
    params = mb.MBParams.from_pairs([(0.3, 0.3)] * 2, [(0.3, 0.3)] * 2)
    with pytest.raises(ConvergenceDomainViolated):
        mb.gustafson_first(1, params, SMALL)


def test_first_needs_supported_size():
    with pytest.raises(PreconditionViolated):
        mb.gustafson_first(3, shifted_params(3), SMALL)
    with pytest.raises(PreconditionViolated):
        mb.gustafson_first(1, shifted_params(3), SMALL)


def test_pole_series_overlap():
    params = mb.MBParams((FieldExponent.scalar(-0.3),) * 2, (FieldExponent.scalar(-0.3),) * 2)
    with pytest.raises(PoleOnContour):
        mb.gustafson_first(1, params, SMALL)


def test_fixed_contour_on_pole():
    spec = mb.MBSpec(n_max=2, nu_cutoff=6.0, contour_shifts=(0.15,))
    with pytest.raises(PoleOnContour):
        mb.gustafson_first(1, shifted_params(2), spec)


def test_parity_mismatch_vanishes():
    spec = mb.MBSpec(sigma=1, n_max=2, nu_cutoff=6.0)
    lhs, rhs = mb.gustafson_first(1, shifted_params(2), spec)
    assert lhs.value == 0
    assert lhs.converged
    assert rhs != 0


def test_second_rejects_cut():
    params = shifted_params(1)
    with pytest.raises(BranchCutHit):
        mb.gustafson_second(1, params, -2.0, SMALL)
    with pytest.raises(BranchCutHit):
        mb.gustafson_second_rhs(1, params, 0.0)


def test_first_rhs_single_variable():
    params = shifted_params(2)
    z, w = params.z_list, params.w_list
    expected = gamma_ratio([z[0] + w[0], z[0] + w[1], z[1] + w[0], z[1] + w[1]], [z[0] + z[1] + w[0] + w[1]])
    assert mb.gustafson_first_rhs(1, params) == pytest.approx(expected)
    assert mb.gustafson_first_rhs(2, shifted_params(3)) != 0


def test_convergence_table_layout():
    table = mb.convergence_table("first", 1, shifted_params(2), SMALL)
    assert list(table.columns) == ["window", "n_max", "nu_cutoff", "lhs", "abs_err", "rhs"]
    assert table["window"].tolist() == ["1x", "2x", "4x", "aitken"]
    assert table["n_max"].iloc[2] == 8
    with pytest.raises(PreconditionViolated):
        mb.convergence_table("third", 1, shifted_params(2), SMALL)


@pytest.mark.slow
def test_first_single_variable():
    lhs, rhs = mb.gustafson_first(1, shifted_params(2), WIDE)
    assert lhs.value == pytest.approx(rhs, rel=1e-6)


@pytest.mark.slow
def test_first_two_variables():
    lhs, rhs = mb.gustafson_first(2, shifted_params(3), mb.MBSpec(n_max=12, tol=1e-5))
    assert lhs.value == pytest.approx(rhs, rel=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("zeta", [1.0, 0.7 * complex(math.cos(0.9), math.sin(0.9))])
def test_second_single_variable(zeta):
    params = mb.MBParams((FieldExponent(-1.3, 12),), (FieldExponent.scalar(-1.3),))
    lhs, rhs = mb.gustafson_second(1, params, zeta, WIDE)
    assert lhs.value == pytest.approx(rhs, rel=1e-6)


@pytest.mark.slow
def test_j_omega_two_variables():
    x = [SeparatedPoint(12, 0.1 + 0.35j)]
    x_prime = [SeparatedPoint(-12, -0.2 - 0.35j)]
    zeta = 1.3 * complex(math.cos(0.4), math.sin(0.4))
    lhs, rhs = mb.j_omega_check(x, x_prime, FieldExponent(-0.45 + 0.2j, 6), 0.25, zeta, mb.MBSpec(n_max=12, tol=1e-5))
    assert lhs.value == pytest.approx(rhs, rel=1e-4)


def test_two_variable_offsets_are_per_variable():
    params = shifted_params(3)
    result, _ = mb.gustafson_evaluate("first", 2, params, SMALL)
    assert {k for k, _ in result.offsets} == {0, 1}
    assert result.offsets[(0, 0.0)] == pytest.approx(0.5)
    assert len(result.levels) == 3


def test_unsupported_coupling():
    arg = mb._Arg(FieldExponent.scalar(-0.3), (1, 1))
    with pytest.raises(PreconditionViolated):
        mb.mb_evaluate(mb._Integrand((arg,)), 2, SMALL)
    single = mb._Arg(FieldExponent.scalar(-0.3), (1, 0))
    shifted = mb._Arg(FieldExponent.scalar(0.5), (1, -1))
    with pytest.raises(PreconditionViolated):
        mb.mb_evaluate(mb._Integrand((single,), (shifted,)), 2, SMALL)


@pytest.mark.parametrize(
    "ns, ms",
    [([0, 1], [2, -1, 0]), ([-2, 2], [1, 1, -2]), ([1], [0, 1]), ([], [3])],
)
def test_sign_identity(ns, ms):
    assert mb.sign_identity_holds(ns, ms)


def test_sign_exponents():
    assert mb.reflection_sign_exponent([0, 1, 3]) == 1 + 3 + 2
    assert mb.swap_sign_exponent([1, 2], [0]) == 3
    assert mb.x_sign_exponent([2, 0]) == -2


def test_reflection_identity():
    ys = (SeparatedPoint(0, 0.3), SeparatedPoint(2, -0.4), SeparatedPoint(4, 1.1))
    lhs, rhs = mb.reflection_identity(ys)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_swap_identity():
    xs = (SeparatedPoint(2, 0.2 + 0.05j), SeparatedPoint(0, -0.7))
    ys = (SeparatedPoint(4, 0.45), SeparatedPoint(-2, -0.1 - 0.05j))
    lhs, rhs = mb.swap_identity(xs, ys)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_j_omega_mapping():
    x = [SeparatedPoint(2, 0.15 - 0.05j)]
    x_prime = [SeparatedPoint(0, -0.3 + 0.05j)]
    zeta = 0.8 * complex(math.cos(0.3), math.sin(0.3))
    closed = mb.j_omega_closed(x, x_prime, 0.5 + 0.7j, 0.1, zeta)
    mapped = mb.j_omega_from_second(x, x_prime, 0.5 + 0.7j, 0.1, zeta)
    assert closed == pytest.approx(mapped, rel=1e-10)


def test_j_omega_params_layout():
    x = [SeparatedPoint(2, 0.1)]
    params = mb.j_omega_params(x, [SeparatedPoint(0, 0.2)], 0.5 + 0.3j, 0.2)
    assert len(params.z_list) == 2
    assert params.z_list[-1].w == pytest.approx(0.3 + 0.3j)
    assert params.z_list[0].key() == x[0].ix().key()
    with pytest.raises(PreconditionViolated):
        mb.j_omega_params(x, [], 0.5, 0.0)


def test_j_omega_check_size():
    points = [SeparatedPoint(0, 0.1), SeparatedPoint(0, 0.2)]
    with pytest.raises(PreconditionViolated):
        mb.j_omega_check(points, points, 0.5, 0.0, 1.0, SMALL)
