import cmath

import pytest

from sov_verify.core.exceptions import (
    DegenerateChain,
    IndexSumMismatch,
    NoPlaneWave,
    NotAChain,
    StuckDiagram,
    UniquenessViolated,
)
from sov_verify.services.cfield import FieldExponent, afactor
from sov_verify.services.diagrams import (
    ClosedFormFactor,
    Diagram,
    LinComb,
    apply_chain,
    apply_delta,
    apply_exchange,
    apply_fourier,
    apply_star_triangle,
    closed_form_from_model,
    closed_form_to_model,
    diagram_from_dict,
    diagram_to_dict,
    find_free_vertices,
    merge,
    numeric_eval,
    reduce,
)
from sov_verify.services.plane import QuadratureSpec, eval_propagator, fourier_closed

POINTS = {"z1": 0.3 + 0.1j, "z2": -0.5 + 0.2j, "z3": 0.1 - 0.6j}
ALPHA = FieldExponent(w=0.6 + 0.1j, m2=2)
BETA = FieldExponent(w=0.7, m2=0)
GAMMA = FieldExponent(w=0.8 - 0.2j, m2=-2)


def a(u):
    return afactor(u).value


def chain_diagram():
    return Diagram.build(
        external={"z1": POINTS["z1"], "z2": POINTS["z2"]},
        internal=["v"],
        edges=[("v", "z1", ALPHA), ("z2", "v", BETA)],
    )


def star_diagram(alpha, beta, gamma):
    return Diagram.build(
        external={k: POINTS[k] for k in ("z1", "z2", "z3")},
        internal=["v"],
        edges=[("v", "z1", alpha), ("v", "z2", beta), ("v", "z3", gamma)],
    )


def test_lincomb_canonical():
    combo = LinComb.of("b") - LinComb.of("a")
    sign, canonical = combo.canonical()
    assert sign == -1
    assert canonical.as_dict() == {"a": 1, "b": -1}
    assert str(canonical) == "a - b"
    assert (combo + canonical).is_zero()


def test_closed_form_gamma_canonical():
    u = FieldExponent(w=0.3 + 0.2j, m2=2)
    direct = ClosedFormFactor().with_gammas([u])
    swapped = ClosedFormFactor().with_gammas([u.swap()], []).times(ClosedFormFactor(sign=-1))
    assert direct.same_as(swapped)
    assert direct.evaluate() == pytest.approx(swapped.evaluate())


def test_chain_rule_closed_form():
    d = chain_diagram()
    assert find_free_vertices(d) == ["v"]
    closed = apply_chain(d, "v").closed_form()
    gamma = ALPHA + BETA - 1
    expected = cmath.pi * a(ALPHA) * a(BETA) / a(gamma) * eval_propagator(gamma, POINTS["z1"] - POINTS["z2"])
    assert closed.pi_power == 1
    assert closed.evaluate(POINTS) == pytest.approx(expected, rel=1e-12)


@pytest.mark.slow
def test_chain_rule_quadrature():
    d = chain_diagram()
    estimate = numeric_eval(d)
    closed = apply_chain(d, "v").closed_form().evaluate(POINTS)
    assert estimate.value == pytest.approx(closed, rel=1e-3)


@pytest.mark.slow
def test_star_triangle_quadrature():
    gamma = 2 - ALPHA - BETA
    d = star_diagram(ALPHA, BETA, gamma)
    estimate = numeric_eval(d, spec=QuadratureSpec.default(1, rel_tol=1e-5)).require()
    closed = apply_star_triangle(d, "v").closed_form().evaluate(POINTS)
    assert estimate.value == pytest.approx(closed, rel=1e-3)


def test_chain_contact_term():
    d = Diagram.build(
        external={"z1": 0.0, "z2": 1.0},
        internal=["v"],
        edges=[("v", "z1", FieldExponent.scalar(0.5)), ("z2", "v", FieldExponent.scalar(0.5))],
    )
    with pytest.raises(DegenerateChain):
        apply_chain(d, "v")


@pytest.mark.parametrize("m2, pair", [(-2, (0.0, 1.0)), (2, (1.0, 0.0))])
def test_chain_contact_term_with_spin(m2, pair):
    alpha, beta = FieldExponent(0.75, m2), FieldExponent.scalar(0.75)
    gamma = alpha + beta - 1
    assert (gamma.a, gamma.abar) == pytest.approx(pair)
    d = Diagram.build(
        external={"z1": 0.0, "z2": 1.0},
        internal=["v"],
        edges=[("v", "z1", alpha), ("z2", "v", beta)],
    )
    with pytest.raises(DegenerateChain):
        apply_chain(d, "v")


def test_chain_needs_two_legs():
    with pytest.raises(NotAChain):
        apply_chain(star_diagram(ALPHA, BETA, GAMMA), "v")


def test_star_triangle_closed_form():
    alpha = FieldExponent(w=0.5 + 0.1j, m2=2)
    beta = FieldExponent(w=0.8 - 0.3j, m2=-2)
    gamma = FieldExponent(w=0.7 + 0.2j, m2=0)
    closed = apply_star_triangle(star_diagram(alpha, beta, gamma), "v").closed_form()
    z1, z2, z3 = POINTS["z1"], POINTS["z2"], POINTS["z3"]
    expected = (
        cmath.pi
        * a(alpha) * a(beta) * a(gamma)
        * eval_propagator(1 - gamma, z1 - z2)
        * eval_propagator(1 - alpha, z2 - z3)
        * eval_propagator(1 - beta, z3 - z1)
    )
    assert len(closed.momentum_powers) == 3
    assert closed.evaluate(POINTS) == pytest.approx(expected, rel=1e-12)


def test_star_triangle_needs_unique_vertex():
    with pytest.raises(UniquenessViolated):
        apply_star_triangle(star_diagram(ALPHA, BETA, GAMMA), "v")


def test_fourier_rule():
    d = Diagram.build(
        external={"u": None, "p": None},
        internal=["v"],
        edges=[("u", "v", ALPHA)],
        waves={"v": [LinComb.of("p")]},
    )
    closed = apply_fourier(d, "v").closed_form()
    bindings = {"u": 0.4 - 0.2j, "p": 0.9 + 0.5j}
    expected = fourier_closed(ALPHA, bindings["p"]) * cmath.exp(2j * (bindings["p"] * bindings["u"]).real)
    assert closed.evaluate(bindings) == pytest.approx(expected, rel=1e-12)


def test_fourier_needs_plane_wave():
    with pytest.raises(NoPlaneWave):
        apply_fourier(chain_diagram(), "v")


def test_delta_rule():
    d = Diagram.build(
        external={"p": None, "q": None},
        internal=["v"],
        waves={"v": [LinComb.of("p"), -LinComb.of("q")]},
    )
    closed = apply_delta(d, "v").closed_form()
    assert closed.pi_power == 2
    assert closed.deltas == (LinComb.from_dict({"p": 1, "q": -1}),)


def test_merge_parallel_edges():
    d = Diagram.build(external={"a": 0.0, "b": 1.0}, edges=[("a", "b", ALPHA), ("b", "a", BETA)])
    merged = merge(d)
    assert len(merged.edges()) == 1
    (_, _, total), = merged.edges()
    assert total.key() == (ALPHA + BETA).key()
    assert merged.prefactor.sign == 1


def test_exchange_index_sum_mismatch():
    d = Diagram.build(
        external={"a": 0.0, "b": 1.0},
        internal=["w"],
        edges=[("w", "a", ALPHA), ("w", "b", BETA)],
    )
    with pytest.raises(IndexSumMismatch):
        apply_exchange(d, ("w", "a", "b", None), (ALPHA, ALPHA))


def test_exchange_keeps_two_leg_value():
    d = Diagram.build(
        external={"a": 0.2j, "b": 1.0},
        internal=["w"],
        edges=[("w", "a", ALPHA), ("w", "b", BETA)],
    )
    shift = FieldExponent(w=0.1, m2=2)
    moved = apply_exchange(d, ("w", "a", "b", None), (ALPHA - shift, BETA + shift))
    bindings = {"a": 0.2j, "b": 1.0}
    assert reduce(moved).evaluate(bindings) == pytest.approx(reduce(d).evaluate(bindings), rel=1e-10)


def test_chain_reduction_is_confluent():
    d = Diagram.build(
        external={"a": 0.1 + 0.2j, "b": -0.7 + 0.4j},
        internal=["v1", "v2"],
        edges=[("v1", "a", ALPHA), ("v2", "v1", BETA), ("b", "v2", GAMMA)],
    )
    left = reduce(d, strategy="leftmost")
    right = reduce(d, strategy="rightmost")
    assert left.same_as(right)
    total = ALPHA + BETA + GAMMA - 2
    bindings = {"a": 0.1 + 0.2j, "b": -0.7 + 0.4j}
    expected = cmath.pi**2 * a(ALPHA) * a(BETA) * a(GAMMA) / a(total) * eval_propagator(total, bindings["a"] - bindings["b"])
    assert left.evaluate(bindings) == pytest.approx(expected, rel=1e-12)


def test_stuck_diagram():
    d = Diagram.build(
        external={f"z{k}": complex(k, 1) for k in range(4)},
        internal=["v"],
        edges=[("v", f"z{k}", FieldExponent.scalar(0.3)) for k in range(4)],
    )
    with pytest.raises(StuckDiagram) as info:
        reduce(d)
    assert info.value.diagram is not None


def test_json_layout_preserves_reduction():
    d = Diagram.build(
        external={"u": None, "p": None},
        internal=["v"],
        edges=[("u", "v", ALPHA)],
        waves={"v": [LinComb.of("p")]},
    )
    data = diagram_to_dict(d)
    assert {"label": "p", "momentum": "p", "z_re": None, "z_im": None} in data["external"]
    assert reduce(diagram_from_dict(data)).same_as(reduce(d))
    closed = reduce(d)
    assert closed_form_from_model(closed_form_to_model(closed)).same_as(closed)
