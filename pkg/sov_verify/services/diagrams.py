"""Propagator diagrams and the rewrite rules that integrate them out.

An edge u → v with index α stands for D_α(v - u). Internal vertices are integrated
over the plane with the measure d²z; plane waves e^{i(Pz + P̄z̄)} may be attached to
vertices. Rules consume internal vertices and accumulate constants, Γ-factors and
momentum powers in a ClosedFormFactor.
"""

import cmath
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import (
    BranchCutHit,
    DegenerateChain,
    IndexSumMismatch,
    NoPlaneWave,
    NotAChain,
    PreconditionViolated,
    StuckDiagram,
    UniquenessViolated,
    UnsupportedDiagram,
)
from sov_verify.schemas.diagram import (
    ClosedFormModel,
    DiagramModel,
    EdgeModel,
    ExternalModel,
    GammaFactorModel,
    MomentumPowerModel,
    RatioPowerModel,
    WaveModel,
)
from sov_verify.services.cfield import FieldExponent, cgamma, gamma_ratio
from sov_verify.services.plane import (
    IntegralEstimate,
    QuadratureSpec,
    eval_propagator,
    integrate_c2,
    propagator_array,
)

logger = logging.getLogger(__name__)

SUM_TOL = 1e-9
CONTACT_TOL = 1e-12


class RuleKind(str, Enum):
    CHAIN = "chain"
    STAR_TRIANGLE = "star-triangle"
    FOURIER = "fourier"
    EXCHANGE = "exchange"


# ---------------------------------------------------------------------------
# linear combinations of vertex labels


@dataclass(frozen=True)
class LinComb:
    """Integer combination Σ c_l · l of vertex labels."""

    terms: Tuple[Tuple[str, int], ...] = ()

    @classmethod
    def of(cls, *labels: str) -> "LinComb":
        return cls.from_dict({label: 1 for label in labels})

    @classmethod
    def from_dict(cls, coeffs: Mapping[str, int]) -> "LinComb":
        return cls(tuple(sorted((k, int(v)) for k, v in coeffs.items() if v)))

    def as_dict(self) -> Dict[str, int]:
        return dict(self.terms)

    def __add__(self, other: "LinComb") -> "LinComb":
        out = self.as_dict()
        for k, v in other.terms:
            out[k] = out.get(k, 0) + v
        return LinComb.from_dict(out)

    def __neg__(self) -> "LinComb":
        return LinComb(tuple((k, -v) for k, v in self.terms))

    def __sub__(self, other: "LinComb") -> "LinComb":
        return self + (-other)

    def is_zero(self) -> bool:
        return not self.terms

    def canonical(self) -> Tuple[int, "LinComb"]:
        """(s, L) with self = s·L and the first coefficient of L positive."""
        if self.terms and self.terms[0][1] < 0:
            return -1, -self
        return 1, self

    def evaluate(self, bindings: Mapping[str, complex]) -> complex:
        try:
            return sum((v * complex(bindings[k]) for k, v in self.terms), 0j)
        except KeyError as exc:
            raise PreconditionViolated(f"no value bound for {exc.args[0]!r}") from None

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, v in self.terms:
            coeff = "" if abs(v) == 1 else f"{abs(v)}"
            parts.append(("- " if v < 0 else "+ ") + coeff + k)
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]


# ---------------------------------------------------------------------------
# closed forms


def _gamma_representative(u: FieldExponent) -> Tuple[FieldExponent, int, int]:
    """(r, s, e) with Γ[u] = s · Γ[r]^e, r the smallest of u, ū, 1-u, 1-ū by key."""
    parity = -1 if u.m % 2 else 1
    candidates = [
        (u, 1, 1),
        (u.swap(), parity, 1),
        (u.reflect(), parity, -1),
        (u.swap().reflect(), 1, -1),
    ]
    return min(candidates, key=lambda c: c[0].key())


def _power_sign(sign: int, power: int) -> int:
    return -1 if (sign < 0 and power % 2) else 1


@dataclass(frozen=True)
class ClosedFormFactor:
    """π^k · i^q · sign · ΠΓ[u]^mult · ΠD_α(L) · Π[num/den]^e · Πδ²(L) · Πe^{i(Pz+P̄z̄)}.

    `evaluate` returns the coefficient of the delta functions.
    """

    pi_power: int = 0
    phase_quarter_turns: int = 0
    sign: int = 1
    gamma_factors: Tuple[Tuple[FieldExponent, int], ...] = ()
    momentum_powers: Tuple[Tuple[LinComb, FieldExponent], ...] = ()
    ratio_powers: Tuple[Tuple[LinComb, LinComb, FieldExponent], ...] = ()
    deltas: Tuple[LinComb, ...] = ()
    waves: Tuple[Tuple[LinComb, str], ...] = ()

    def times(self, other: "ClosedFormFactor") -> "ClosedFormFactor":
        return ClosedFormFactor(
            pi_power=self.pi_power + other.pi_power,
            phase_quarter_turns=self.phase_quarter_turns + other.phase_quarter_turns,
            sign=self.sign * other.sign,
            gamma_factors=self.gamma_factors + other.gamma_factors,
            momentum_powers=self.momentum_powers + other.momentum_powers,
            ratio_powers=self.ratio_powers + other.ratio_powers,
            deltas=self.deltas + other.deltas,
            waves=self.waves + other.waves,
        ).canonical()

    def with_gammas(self, numerators: Iterable[FieldExponent] = (), denominators: Iterable[FieldExponent] = ()) -> "ClosedFormFactor":
        extra = tuple((u, 1) for u in numerators) + tuple((u, -1) for u in denominators)
        return replace(self, gamma_factors=self.gamma_factors + extra).canonical()

    def canonical(self) -> "ClosedFormFactor":
        sign = self.sign
        gammas: Dict[tuple, List] = {}
        for u, mult in self.gamma_factors:
            rep, s, e = _gamma_representative(u)
            sign *= _power_sign(s, mult)
            entry = gammas.setdefault(rep.key(), [rep, 0])
            entry[1] += e * mult
        gamma_factors = tuple(
            (rep, mult) for _, (rep, mult) in sorted(gammas.items()) if mult != 0
        )

        powers: Dict[LinComb, FieldExponent] = {}
        for combo, alpha in self.momentum_powers:
            s, combo = combo.canonical()
            if s < 0 and alpha.m % 2:
                sign = -sign
            powers[combo] = powers[combo] + alpha if combo in powers else alpha
        momentum_powers = tuple(
            (combo, alpha)
            for combo, alpha in sorted(powers.items(), key=lambda item: (item[0].terms, item[1].key()))
            if not alpha.is_zero()
        )

        ratio_powers = tuple(
            sorted(
                (r for r in self.ratio_powers if not r[2].is_zero()),
                key=lambda r: (r[0].terms, r[1].terms, r[2].key()),
            )
        )
        deltas = tuple(sorted((d.canonical()[1] for d in self.deltas), key=lambda d: d.terms))
        waves = tuple(sorted(self.waves, key=lambda wv: (wv[1], wv[0].terms)))

        phase = self.phase_quarter_turns + (2 if sign < 0 else 0)
        return ClosedFormFactor(
            pi_power=self.pi_power,
            phase_quarter_turns=phase % 4,
            sign=1,
            gamma_factors=gamma_factors,
            momentum_powers=momentum_powers,
            ratio_powers=ratio_powers,
            deltas=deltas,
            waves=waves,
        )

    def key(self, ndigits: int = 8) -> tuple:
        """Rounded comparison key of the canonical form."""
        c = self.canonical()
        return (
            c.pi_power,
            c.phase_quarter_turns,
            tuple((u.key(ndigits), mult) for u, mult in c.gamma_factors),
            tuple((combo.terms, alpha.key(ndigits)) for combo, alpha in c.momentum_powers),
            tuple((n.terms, d.terms, e.key(ndigits)) for n, d, e in c.ratio_powers),
            tuple(d.terms for d in c.deltas),
            tuple((p.terms, v) for p, v in c.waves),
        )

    def same_as(self, other: "ClosedFormFactor", ndigits: int = 8) -> bool:
        return self.key(ndigits) == other.key(ndigits)

    def gamma_value(self) -> complex:
        numerators, denominators = [], []
        for u, mult in self.gamma_factors:
            (numerators if mult > 0 else denominators).extend([u] * abs(mult))
        return gamma_ratio(numerators, denominators)

    def evaluate(self, bindings: Mapping[str, complex] | None = None) -> complex:
        """Numeric value with vertex labels bound to points.

        Raises:
            PoleEncountered: If the Γ-product sits on a net pole
            BranchCutHit: If a ratio power is evaluated next to its cut
        """
        bindings = bindings or {}
        value = 1j ** (self.phase_quarter_turns % 4) * self.sign * math.pi**self.pi_power
        value *= self.gamma_value()
        for combo, alpha in self.momentum_powers:
            value *= eval_propagator(alpha, combo.evaluate(bindings))
        for num, den, e in self.ratio_powers:
            value *= _ratio_power(num.evaluate(bindings) / den.evaluate(bindings), e)
        for momentum, vertex in self.waves:
            if vertex not in bindings:
                raise PreconditionViolated(f"no value bound for {vertex!r}")
            value *= cmath.exp(2j * (momentum.evaluate(bindings) * complex(bindings[vertex])).real)
        return complex(value)

    def __str__(self) -> str:
        parts = [f"i^{self.phase_quarter_turns}", f"π^{self.pi_power}"]
        if self.sign < 0:
            parts.insert(0, "-1")
        parts += [f"Γ[{u.a:.6g}, {u.abar:.6g}]^{mult}" for u, mult in self.gamma_factors]
        parts += [f"D[{alpha.a:.6g}, {alpha.abar:.6g}]({combo})" for combo, alpha in self.momentum_powers]
        parts += [f"[({n})/({d})]^[{e.a:.6g}, {e.abar:.6g}]" for n, d, e in self.ratio_powers]
        parts += [f"δ²({d})" for d in self.deltas]
        parts += [f"e^{{i({p})·{v}}}" for p, v in self.waves]
        return " · ".join(parts)


def _ratio_power(z: complex, e: FieldExponent) -> complex:
    """z^e z̄^ē on the principal branch."""
    margin = get_settings().cut_margin
    if z == 0:
        raise PreconditionViolated("ratio power of zero")
    if math.pi - abs(cmath.phase(z)) < margin:
        raise BranchCutHit(f"argument {z} lies within {margin} of the negative real axis")
    log_z = cmath.log(z)
    return cmath.exp(e.a * log_z + e.abar * log_z.conjugate())


# ---------------------------------------------------------------------------
# diagrams


class Diagram:
    """Propagator graph over external and internal vertices with an accumulated prefactor.

    Vertices keep their insertion order; "leftmost" means earliest inserted.
    """

    def __init__(self, graph: Optional[nx.MultiDiGraph] = None, prefactor: Optional[ClosedFormFactor] = None):
        self.graph = graph if graph is not None else nx.MultiDiGraph()
        self.prefactor = prefactor or ClosedFormFactor()

    @classmethod
    def build(
        cls,
        external: Mapping[str, Optional[complex]],
        internal: Sequence[str] = (),
        edges: Sequence[Tuple[str, str, FieldExponent]] = (),
        waves: Optional[Mapping[str, Sequence[LinComb]]] = None,
        prefactor: Optional[ClosedFormFactor] = None,
    ) -> "Diagram":
        """Assemble a diagram; an edge (u, v, α) stands for D_α(v - u).

        Raises:
            PreconditionViolated: On self-loops, unknown or duplicate vertices
        """
        d = cls(prefactor=prefactor)
        for label, point in external.items():
            d.graph.add_node(label, kind="external", point=None if point is None else complex(point), waves=())
        for label in internal:
            if label in d.graph:
                raise PreconditionViolated(f"duplicate vertex {label!r}")
            d.graph.add_node(label, kind="internal", point=None, waves=())
        for source, target, alpha in edges:
            d._add_edge(source, target, alpha)
        for label, momenta in (waves or {}).items():
            d._require(label)
            d.graph.nodes[label]["waves"] = d.graph.nodes[label]["waves"] + tuple(momenta)
        return d

    def copy(self) -> "Diagram":
        return Diagram(self.graph.copy(), self.prefactor)

    def _require(self, label: str) -> None:
        if label not in self.graph:
            raise PreconditionViolated(f"unknown vertex {label!r}")

    def _add_edge(self, source: str, target: str, alpha: FieldExponent) -> None:
        self._require(source)
        self._require(target)
        if source == target:
            raise PreconditionViolated(f"self-loop at {source!r}")
        if not alpha.is_integral:
            raise PreconditionViolated(f"edge index {alpha!r} has a half-integer difference")
        if not alpha.is_zero():
            self.graph.add_edge(source, target, index=alpha)

    def _flip(self, source: str, target: str, key) -> Tuple[str, str, object]:
        """Reverse an edge using D_α(-z) = (-1)^{[α]} D_α(z)."""
        alpha = self.graph.edges[source, target, key]["index"]
        self.graph.remove_edge(source, target, key)
        new_key = self.graph.add_edge(target, source, index=alpha)
        if alpha.m % 2:
            self.prefactor = replace(self.prefactor, sign=-self.prefactor.sign)
        return target, source, new_key

    def _multiply(self, factor: ClosedFormFactor) -> None:
        self.prefactor = self.prefactor.times(factor)

    def external_vertices(self) -> List[str]:
        return [v for v, kind in self.graph.nodes(data="kind") if kind == "external"]

    def internal_vertices(self) -> List[str]:
        return [v for v, kind in self.graph.nodes(data="kind") if kind == "internal"]

    def is_internal(self, v: str) -> bool:
        return v in self.graph and self.graph.nodes[v]["kind"] == "internal"

    def incident(self, v: str) -> List[Tuple[str, str, object, FieldExponent]]:
        out = [(u, w, k, data["index"]) for u, w, k, data in self.graph.out_edges(v, keys=True, data=True)]
        into = [(u, w, k, data["index"]) for u, w, k, data in self.graph.in_edges(v, keys=True, data=True)]
        return out + into

    def waves(self, v: str) -> Tuple[LinComb, ...]:
        return self.graph.nodes[v]["waves"]

    def degree(self, v: str) -> int:
        """Number of propagators at v, plus one if plane waves are attached."""
        return self.graph.degree(v) + (1 if self.waves(v) else 0)

    def edges(self) -> List[Tuple[str, str, FieldExponent]]:
        return [(u, v, data["index"]) for u, v, data in self.graph.edges(data=True)]

    def closed_form(self) -> ClosedFormFactor:
        """Prefactor times all remaining propagators and waves; requires no internal vertices."""
        if self.internal_vertices():
            raise UnsupportedDiagram("diagram still has internal vertices")
        powers = tuple((LinComb.of(v) - LinComb.of(u), alpha) for u, v, alpha in self.edges())
        waves = tuple((p, v) for v in self.external_vertices() for p in self.waves(v))
        return replace(
            self.prefactor,
            momentum_powers=self.prefactor.momentum_powers + powers,
            waves=self.prefactor.waves + waves,
        ).canonical()

    def __repr__(self) -> str:
        return (
            f"Diagram(external={self.external_vertices()}, internal={self.internal_vertices()}, "
            f"edges={len(self.graph.edges)})"
        )


def _internal_without_waves(d: Diagram, v: str) -> None:
    if not d.is_internal(v):
        raise PreconditionViolated(f"{v!r} is not an internal vertex")


def _orient_out(d: Diagram, v: str) -> List[Tuple[str, FieldExponent]]:
    """Point every edge at v away from v; returns (neighbor, index) pairs."""
    for u, w, k, _ in d.incident(v):
        if w == v:
            d._flip(u, w, k)
    return [(w, data["index"]) for _, w, data in d.graph.out_edges(v, data=True)]


def _gamma_factor(pi_power: int = 0, numerators=(), denominators=(), phase: int = 0) -> ClosedFormFactor:
    return ClosedFormFactor(pi_power=pi_power, phase_quarter_turns=phase).with_gammas(numerators, denominators)


def _unique(total: FieldExponent, target: float) -> bool:
    return total.m2 == 0 and abs(total.w - target) <= SUM_TOL


def find_free_vertices(d: Diagram) -> List[str]:
    """Internal vertices with exactly two attachments, leftmost first."""
    return [v for v in d.internal_vertices() if d.degree(v) == 2]


def apply_chain(d: Diagram, v: str) -> Diagram:
    """∫ d²v D_α(z1 - v) D_β(v - z2) = π a(α)a(β)/a(γ) D_γ(z1 - z2), γ = α + β - 1.

    Raises:
        NotAChain: Unless v has one incoming and one outgoing propagator and no waves
        DegenerateChain: If Γ[γ] sits on a pole (contact term)
    """
    _internal_without_waves(d, v)
    if d.waves(v) or d.graph.degree(v) != 2:
        raise NotAChain(f"{v!r} is not a two-propagator vertex")
    out_edges = list(d.graph.out_edges(v, data=True))
    in_edges = list(d.graph.in_edges(v, data=True))
    if len(out_edges) != 1 or len(in_edges) != 1:
        raise NotAChain(f"legs of {v!r} do not form a directed chain")
    (_, z1, out_data), (z2, _, in_data) = out_edges[0], in_edges[0]
    if z1 == z2:
        raise NotAChain(f"both legs of {v!r} end on {z1!r}")
    alpha, beta = out_data["index"], in_data["index"]
    gamma = alpha + beta - 1
    if cgamma(gamma).is_pole or min(abs(gamma.a), abs(gamma.abar)) < CONTACT_TOL:
        raise DegenerateChain(f"chain at {v!r} produces the contact index {gamma!r}")
    out = d.copy()
    out.graph.remove_node(v)
    out._add_edge(z2, z1, gamma)
    out._multiply(_gamma_factor(1, [gamma], [alpha, beta]))
    logger.debug("chain at %s: %r + %r -> %r", v, alpha, beta, gamma)
    return out


def _orient_chain(d: Diagram, v: str) -> Diagram:
    out = d.copy()
    if out.graph.out_degree(v) == 2:
        u, w, k = next(iter(out.graph.out_edges(v, keys=True)))
        out._flip(u, w, k)
    elif out.graph.in_degree(v) == 2:
        u, w, k = next(iter(out.graph.in_edges(v, keys=True)))
        out._flip(u, w, k)
    return out


def apply_star_triangle(d: Diagram, v: str) -> Diagram:
    """∫ d²v D_α(z1-v)D_β(z2-v)D_γ(z3-v) = π a(α)a(β)a(γ) D_{1-γ}(z1-z2) D_{1-α}(z2-z3) D_{1-β}(z3-z1).

    Raises:
        UniquenessViolated: Unless the three indices sum to 2 in both sectors
    """
    _internal_without_waves(d, v)
    if d.waves(v) or d.graph.degree(v) != 3:
        raise UniquenessViolated(f"{v!r} is not a three-propagator vertex")
    out = d.copy()
    legs = _orient_out(out, v)
    if len({z for z, _ in legs}) != 3:
        raise UniquenessViolated(f"legs of {v!r} do not end on three distinct vertices")
    (z1, alpha), (z2, beta), (z3, gamma) = legs
    if not _unique(alpha + beta + gamma, 2.0):
        raise UniquenessViolated(f"indices at {v!r} sum to {alpha + beta + gamma!r}, not 2")
    out.graph.remove_node(v)
    out._add_edge(z2, z1, 1 - gamma)
    out._add_edge(z3, z2, 1 - alpha)
    out._add_edge(z1, z3, 1 - beta)
    out._multiply(_gamma_factor(1, [], [alpha, beta, gamma]))
    logger.debug("star-triangle at %s", v)
    return out


def _single_edge(d: Diagram, source: str, target: str) -> Tuple[str, str, object]:
    """The unique edge between two vertices, oriented source → target."""
    forward = list(d.graph.get_edge_data(source, target, default={}).keys())
    backward = list(d.graph.get_edge_data(target, source, default={}).keys())
    if len(forward) + len(backward) != 1:
        raise UniquenessViolated(f"{source!r} and {target!r} are not joined by exactly one propagator")
    if forward:
        return source, target, forward[0]
    return d._flip(target, source, backward[0])


def apply_triangle_star(d: Diagram, triangle: Tuple[str, str, str], new_label: Optional[str] = None) -> Diagram:
    """Replace a triangle with indices summing to 1 by a unique star around a new vertex.

    Raises:
        UniquenessViolated: If the triangle is incomplete or its indices do not sum to 1
    """
    z1, z2, z3 = triangle
    out = merge(d)
    e12 = _single_edge(out, z2, z1)
    e23 = _single_edge(out, z3, z2)
    e31 = _single_edge(out, z1, z3)
    gamma_t, alpha_t, beta_t = (out.graph.edges[e]["index"] for e in (e12, e23, e31))
    if not _unique(gamma_t + alpha_t + beta_t, 1.0):
        raise UniquenessViolated(f"triangle {triangle} indices do not sum to 1")
    for e in (e12, e23, e31):
        out.graph.remove_edge(*e)
    label = new_label or _fresh_label(out)
    out.graph.add_node(label, kind="internal", point=None, waves=())
    alpha, beta, gamma = 1 - alpha_t, 1 - beta_t, 1 - gamma_t
    out._add_edge(label, z1, alpha)
    out._add_edge(label, z2, beta)
    out._add_edge(label, z3, gamma)
    out._multiply(_gamma_factor(-1, [alpha, beta, gamma], []))
    logger.debug("triangle-star on %s -> %s", triangle, label)
    return out


def _fresh_label(d: Diagram) -> str:
    n = 0
    while f"_v{n}" in d.graph:
        n += 1
    return f"_v{n}"


def apply_fourier(d: Diagram, v: str) -> Diagram:
    """∫ d²v e^{i(Pv+P̄v̄)} D_α(v - u) = e^{i(Pu+P̄ū)} π i^{[α]} a(α) D_{1-α}(P).

    Raises:
        NoPlaneWave: Unless v carries plane waves and exactly one propagator
    """
    if not d.is_internal(v):
        raise PreconditionViolated(f"{v!r} is not an internal vertex")
    if not d.waves(v) or d.graph.degree(v) != 1:
        raise NoPlaneWave(f"{v!r} is not a plane wave attached to one propagator")
    out = d.copy()
    (u, w, k, _), = out.incident(v)
    if u == v:
        u, w, k = out._flip(u, w, k)
    alpha = out.graph.edges[u, w, k]["index"]
    momentum = sum(out.waves(v), LinComb())
    if momentum.is_zero():
        raise UnsupportedDiagram(f"plane waves at {v!r} carry zero total momentum")
    out.graph.remove_node(v)
    out.graph.nodes[u]["waves"] = out.waves(u) + (momentum,)
    factor = ClosedFormFactor(
        pi_power=1,
        phase_quarter_turns=alpha.m % 4,
        momentum_powers=((momentum, 1 - alpha),),
    ).with_gammas([], [alpha])
    out._multiply(factor)
    logger.debug("fourier at %s with momentum %s", v, momentum)
    return out


def apply_delta(d: Diagram, v: str) -> Diagram:
    """∫ d²v e^{i(Pv+P̄v̄)} = π² δ²(P) for a vertex carrying only plane waves."""
    if not d.is_internal(v) or d.graph.degree(v) != 0 or not d.waves(v):
        raise NoPlaneWave(f"{v!r} is not a bare plane-wave vertex")
    out = d.copy()
    momentum = sum(out.waves(v), LinComb())
    out.graph.remove_node(v)
    out._multiply(ClosedFormFactor(pi_power=2, deltas=(momentum,)))
    return out


def apply_exchange(
    d: Diagram,
    quad: Tuple[str, str, str, Optional[str]],
    new_indices: Tuple[FieldExponent, FieldExponent],
) -> Diagram:
    """Move index τ = α - α′ between the legs w → a and w → b of a vertex w.

    With two legs, C(α, β) = ∫ d²w D_α(a-w) D_β(b-w) depends on α + β only up to
    C(α,β) = (-1)^{[β]-[β′]} a(α)a(β)/(a(α′)a(β′)) C(α′,β′). With a third leg to c and
    α + β + δ = 2, S(α,β) = a(α)a(β)/(a(α′)a(β′)) D_{-τ}(b-c) D_τ(c-a) S(α′,β′).

    Args:
        d: Diagram containing the pattern
        quad: (w, a, b, c) with c None for the two-leg form
        new_indices: (α′, β′)

    Raises:
        IndexSumMismatch: If α + β ≠ α′ + β′
        UniquenessViolated: If the three-leg vertex is not unique
    """
    w, a, b, c = quad
    _internal_without_waves(d, w)
    alpha_new, beta_new = new_indices
    expected = {a, b} if c is None else {a, b, c}
    if d.waves(w) or d.graph.degree(w) != len(expected):
        raise PreconditionViolated(f"{w!r} does not match the exchange pattern")
    out = d.copy()
    legs = dict(_orient_out(out, w))
    if set(legs) != expected:
        raise PreconditionViolated(f"legs of {w!r} do not end on {sorted(expected)}")
    alpha, beta = legs[a], legs[b]
    if not _unique(alpha + beta - alpha_new - beta_new, 0.0):
        raise IndexSumMismatch(f"{alpha!r} + {beta!r} differs from {alpha_new!r} + {beta_new!r}")
    if c is not None and not _unique(alpha + beta + legs[c], 2.0):
        raise UniquenessViolated(f"indices at {w!r} do not sum to 2")
    for target in (a, b):
        for key in list(out.graph.get_edge_data(w, target).keys()):
            out.graph.remove_edge(w, target, key)
    out._add_edge(w, a, alpha_new)
    out._add_edge(w, b, beta_new)
    factor = _gamma_factor(0, [alpha_new, beta_new], [alpha, beta])
    if c is None:
        if (beta.m - beta_new.m) % 2:
            factor = replace(factor, sign=-factor.sign)
    else:
        tau = alpha - alpha_new
        out._add_edge(c, b, -tau)
        out._add_edge(a, c, tau)
    out._multiply(factor)
    logger.debug("exchange at %s: (%r, %r) -> (%r, %r)", w, alpha, beta, alpha_new, beta_new)
    return merge(out)


def merge(d: Diagram) -> Diagram:
    """Combine parallel propagators, D_α(z) D_β(z) = D_{α+β}(z), and drop zero indices."""
    out = d.copy()
    order = {v: i for i, v in enumerate(out.graph.nodes)}
    pairs = {tuple(sorted((u, v), key=order.get)) for u, v in out.graph.edges()}
    for u, v in sorted(pairs, key=lambda pair: (order[pair[0]], order[pair[1]])):
        for key in list(out.graph.get_edge_data(v, u, default={}).keys()):
            out._flip(v, u, key)
        data = out.graph.get_edge_data(u, v, default={})
        if len(data) == 1 and not next(iter(data.values()))["index"].is_zero():
            continue
        total = sum((attrs["index"] for attrs in data.values()), FieldExponent.scalar(0))
        out.graph.remove_edges_from([(u, v, key) for key in list(data.keys())])
        out._add_edge(u, v, total)
    return out


def _next_move(d: Diagram, strategy: str):
    internals = d.internal_vertices()
    if strategy == "rightmost":
        internals = internals[::-1]
    elif strategy != "leftmost":
        raise PreconditionViolated(f"unknown reduction strategy {strategy!r}")

    for v in internals:
        if d.graph.degree(v) == 0 and d.waves(v):
            return RuleKind.FOURIER, v, lambda v=v: apply_delta(d, v)
    free = [v for v in internals if d.degree(v) == 2]
    for v in free:
        if not d.waves(v):
            candidate = _orient_chain(d, v)
            try:
                result = apply_chain(candidate, v)
            except (DegenerateChain, NotAChain):
                continue
            return RuleKind.CHAIN, v, lambda result=result: result
    for v in free:
        if d.waves(v):
            return RuleKind.FOURIER, v, lambda v=v: apply_fourier(d, v)
    for v in internals:
        if d.waves(v) or d.graph.degree(v) != 3:
            continue
        try:
            result = apply_star_triangle(d, v)
        except UniquenessViolated:
            continue
        return RuleKind.STAR_TRIANGLE, v, lambda result=result: result
    for triangle in _triangles(d, internals):
        try:
            result = apply_triangle_star(d, triangle)
        except UniquenessViolated:
            continue
        if any(result.degree(z) == 2 for z in triangle if result.is_internal(z)):
            return RuleKind.EXCHANGE, triangle, lambda result=result: result
    return None


def _triangles(d: Diagram, internals: List[str]) -> List[Tuple[str, str, str]]:
    """Triangles through at least one internal vertex, in the order of `internals`."""
    simple = nx.Graph(d.graph.to_undirected())
    found, seen = [], set()
    for v in internals:
        for u, w in itertools.combinations(sorted(simple.neighbors(v), key=list(d.graph.nodes).index), 2):
            if simple.has_edge(u, w) and frozenset((v, u, w)) not in seen:
                seen.add(frozenset((v, u, w)))
                found.append((v, u, w))
    return found


def reduce(d: Diagram, strategy: str = "leftmost", max_steps: int = 500) -> ClosedFormFactor:
    """Integrate out every internal vertex.

    Rule priority: bare plane waves (delta), chain on the first free vertex, Fourier,
    star-triangle on a unique vertex, then triangle-star when it frees a vertex.

    Args:
        d: Diagram to reduce
        strategy: "leftmost" or "rightmost" vertex order
        max_steps: Rewrite budget

    Raises:
        StuckDiagram: If no rule applies or the budget is exhausted
    """
    current = merge(d)
    for step in range(max_steps):
        if not current.internal_vertices():
            return current.closed_form()
        move = _next_move(current, strategy)
        if move is None:
            raise StuckDiagram(f"no rule applies to {current!r}", diagram=current)
        kind, where, apply = move
        current = merge(apply())
        logger.debug("step %d: %s at %s", step, kind.value, where)
    raise StuckDiagram(f"reduction did not finish within {max_steps} steps", diagram=current)


# ---------------------------------------------------------------------------
# numeric evaluation


def numeric_eval(
    d: Diagram, bindings: Optional[Mapping[str, complex]] = None, spec: Optional[QuadratureSpec] = None
) -> IntegralEstimate:
    """Direct quadrature over the internal vertices.

    Args:
        d: Diagram with at most three internal vertices and no plane waves on them
        bindings: Values of external vertices (override stored points)
        spec: Quadrature spec; the external points are added as singularity centers

    Raises:
        UnsupportedDiagram: For more than three internal vertices or oscillatory vertices
    """
    values: Dict[str, complex] = {}
    for v in d.external_vertices():
        point = (bindings or {}).get(v, d.graph.nodes[v]["point"])
        if point is None:
            raise PreconditionViolated(f"no value bound for external vertex {v!r}")
        values[v] = complex(point)
    internals = d.internal_vertices()
    if len(internals) > 3:
        raise UnsupportedDiagram(f"{len(internals)} internal vertices exceed the quadrature limit")
    if any(d.waves(v) for v in internals):
        raise UnsupportedDiagram("plane waves on internal vertices need the Fourier rule")

    fixed = Diagram(nx.MultiDiGraph(), d.prefactor)
    for v in d.external_vertices():
        fixed.graph.add_node(v, **d.graph.nodes[v])
    external_edges = []
    internal_edges = []
    for u, v, alpha in d.edges():
        (internal_edges if d.is_internal(u) or d.is_internal(v) else external_edges).append((u, v, alpha))
    for u, v, alpha in external_edges:
        fixed.graph.add_edge(u, v, index=alpha)
    constant = fixed.closed_form().evaluate(values)
    if not internals:
        return IntegralEstimate(constant, 0.0, 0, True)

    position = {v: i for i, v in enumerate(internals)}

    def integrand(*zs: np.ndarray) -> np.ndarray:
        def at(label: str):
            return zs[position[label]] if label in position else values[label]

        out = np.ones(zs[0].shape, dtype=complex)
        for u, v, alpha in internal_edges:
            out = out * propagator_array(alpha, at(v) - at(u))
        return out

    spec = spec or QuadratureSpec.default(len(internals))
    spec = spec.with_centers(tuple(spec.singularity_centers) + tuple(values.values()))
    return integrate_c2(integrand, len(internals), spec).scale(constant)


# ---------------------------------------------------------------------------
# JSON


def _exponent_fields(alpha: FieldExponent) -> dict:
    w = complex(alpha.w)
    return {"m": alpha.m2 / 2.0, "w_re": w.real, "w_im": w.imag}


def _exponent_from(model) -> FieldExponent:
    return FieldExponent(w=complex(model.w_re, model.w_im), m2=int(round(2.0 * model.m)))


def closed_form_to_model(f: ClosedFormFactor) -> ClosedFormModel:
    f = f.canonical()
    return ClosedFormModel(
        pi_power=f.pi_power,
        phase_quarter_turns=f.phase_quarter_turns,
        sign=f.sign,
        gamma_factors=[GammaFactorModel(mult=mult, **_exponent_fields(u)) for u, mult in f.gamma_factors],
        momentum_powers=[
            MomentumPowerModel(combo=combo.as_dict(), **_exponent_fields(alpha)) for combo, alpha in f.momentum_powers
        ],
        ratio_powers=[
            RatioPowerModel(num=n.as_dict(), den=dd.as_dict(), **_exponent_fields(e)) for n, dd, e in f.ratio_powers
        ],
        deltas=[delta.as_dict() for delta in f.deltas],
        waves=[WaveModel(vertex=v, momentum=p.as_dict()) for p, v in f.waves],
    )


def closed_form_from_model(model: ClosedFormModel) -> ClosedFormFactor:
    return ClosedFormFactor(
        pi_power=model.pi_power,
        phase_quarter_turns=model.phase_quarter_turns,
        sign=model.sign,
        gamma_factors=tuple((_exponent_from(g), g.mult) for g in model.gamma_factors),
        momentum_powers=tuple((LinComb.from_dict(mp.combo), _exponent_from(mp)) for mp in model.momentum_powers),
        ratio_powers=tuple(
            (LinComb.from_dict(r.num), LinComb.from_dict(r.den), _exponent_from(r)) for r in model.ratio_powers
        ),
        deltas=tuple(LinComb.from_dict(delta) for delta in model.deltas),
        waves=tuple((LinComb.from_dict(wv.momentum), wv.vertex) for wv in model.waves),
    ).canonical()


def diagram_to_dict(d: Diagram) -> dict:
    external = []
    for v in d.external_vertices():
        point = d.graph.nodes[v]["point"]
        if point is None:
            external.append(ExternalModel(label=v, momentum=v))
        else:
            external.append(ExternalModel(label=v, z_re=point.real, z_im=point.imag))
    model = DiagramModel(
        external=external,
        internal=d.internal_vertices(),
        edges=[EdgeModel(source=u, to=v, **_exponent_fields(alpha)) for u, v, alpha in d.edges()],
        waves=[WaveModel(vertex=v, momentum=p.as_dict()) for v in d.graph.nodes for p in d.waves(v)],
        prefactor=closed_form_to_model(d.prefactor),
    )
    return model.model_dump(by_alias=True)


def diagram_from_dict(data: dict) -> Diagram:
    """Parse the diagram JSON layout; pydantic validation errors propagate."""
    model = DiagramModel.model_validate(data)
    external = {
        e.label: None if e.z_re is None else complex(e.z_re, e.z_im or 0.0) for e in model.external
    }
    waves: Dict[str, List[LinComb]] = {}
    for wv in model.waves:
        waves.setdefault(wv.vertex, []).append(LinComb.from_dict(wv.momentum))
    return Diagram.build(
        external=external,
        internal=model.internal,
        edges=[(e.source, e.to, _exponent_from(e)) for e in model.edges],
        waves=waves,
        prefactor=closed_form_from_model(model.prefactor),
    )
