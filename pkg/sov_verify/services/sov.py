"""Eigenfunctions of the B and A entries of the monodromy matrix and their scalar products.

Separated variables x = i·n/2 + ν enter every propagator index through the pair
ix = (i x, i x̄). Chains are described by `ChainSpec`; γ-vectors are tuples of
FieldExponent whose differences may be half-integral, while every index built from
them (γ ± ix) has to be integral.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import (
    ConvergenceDomainViolated,
    FormMismatch,
    PoleEncountered,
    PreconditionViolated,
    TooShort,
    UnsupportedDiagram,
)
from sov_verify.schemas.chain import ChainSpec, SeparatedSpec
from sov_verify.services.cfield import FieldExponent, gamma_ratio
from sov_verify.services.diagrams import ClosedFormFactor, Diagram, LinComb, numeric_eval, reduce
from sov_verify.services.plane import (
    IntegralEstimate,
    QuadratureSpec,
    eval_propagator,
    integrate_c2,
    propagator_array,
    raise_if_cancelled,
)

logger = logging.getLogger(__name__)

FORM_TOL = 1e-10


class EigenKind(str, Enum):
    B = "B"
    A = "A"


@dataclass(frozen=True)
class SeparatedPoint:
    """x = i·n/2 + ν, x̄ = -i·n/2 + ν with n = n2/2."""

    n2: int
    nu: complex

    def __post_init__(self):
        nu = complex(self.nu)
        if abs(nu.imag) >= 0.5:
            raise PreconditionViolated(f"Im ν = {nu.imag} is outside the strip |Im ν| < 1/2")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "n2", int(self.n2))

    @classmethod
    def from_spec(cls, spec: SeparatedSpec) -> "SeparatedPoint":
        return cls(n2=spec.n2, nu=complex(spec.nu_re, spec.nu_im))

    @property
    def n(self) -> float:
        return self.n2 / 2.0

    @property
    def x(self) -> complex:
        return 0.5j * self.n + self.nu

    @property
    def xbar(self) -> complex:
        return -0.5j * self.n + self.nu

    def ix(self) -> FieldExponent:
        """The pair (i x, i x̄)."""
        return FieldExponent(w=1j * self.nu, m2=-self.n2)

    def shifted(self, delta: complex) -> "SeparatedPoint":
        return SeparatedPoint(self.n2, self.nu + delta)


def _ix_sum(points: Sequence[SeparatedPoint]) -> FieldExponent:
    return sum((x.ix() for x in points), FieldExponent.scalar(0))


@dataclass(frozen=True)
class GammaVector:
    """Ordered γ-entries; `at(k)` is 1-based and `upper(k, j)` is γ_k^{(j)}."""

    entries: Tuple[FieldExponent, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def at(self, k: int) -> FieldExponent:
        if not 1 <= k <= len(self.entries):
            raise PreconditionViolated(f"γ_{k} is outside a vector of length {len(self.entries)}")
        return self.entries[k - 1]

    def upper(self, k: int, j: int) -> FieldExponent:
        """γ_k reflected j times: a^{(1)} = 1 - a, a^{(j+1)} = 1 - a^{(j)}."""
        u = self.at(k)
        return u.reflect() if j % 2 else u

    def shifted(self, epsilon: float) -> "GammaVector":
        """Add ε to both components of the last entry."""
        if not self.entries or epsilon == 0:
            return self
        return GammaVector(self.entries[:-1] + (self.entries[-1] + epsilon,))

    def unitarity_defect(self) -> float:
        """max_k |γ_k + conj(γ̄_k) - 1|."""
        if not self.entries:
            return 0.0
        return max(abs(u.w + u.w.conjugate() - 1.0) for u in self.entries)


@dataclass(frozen=True)
class EigenfunctionSpec:
    """Ψ_{p,x} (kind B, N-1 points and a momentum) or Φ_x (kind A, N points)."""

    kind: EigenKind
    chain: ChainSpec
    separated: Tuple[SeparatedPoint, ...]
    p: Optional[complex] = None

    def __post_init__(self):
        kind = EigenKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "separated", tuple(self.separated))
        expected = self.chain.N - 1 if kind is EigenKind.B else self.chain.N
        if len(self.separated) != expected:
            raise PreconditionViolated(f"kind {kind.value} needs {expected} separated points, got {len(self.separated)}")
        if kind is EigenKind.B and self.p is None:
            raise PreconditionViolated("kind B needs a momentum")
        if len({x.n2 % 2 for x in self.separated}) > 1:
            raise PreconditionViolated("separated points mix integer and half-integer labels")

    @property
    def N(self) -> int:
        return self.chain.N

    @property
    def gamma(self) -> GammaVector:
        return build_gamma(self.chain, self.kind)


# ---------------------------------------------------------------------------
# γ-vectors and prefactors


def build_gamma(chain: ChainSpec, kind: EigenKind = EigenKind.B) -> GammaVector:
    """γ = (s_1-iξ_1, s_2+iξ_2, s_2-iξ_2, ..., s_N+iξ_N[, s_N-iξ_N]).

    For kind B the regulator ξ_N → ξ_N - iε adds ε to the last entry.
    """
    kind = EigenKind(kind)
    spins, xis = chain.spins, chain.xis

    def entry(k: int, sign: int) -> FieldExponent:
        s, sbar = spins[k].s, spins[k].sbar
        xi = xis[k]
        return FieldExponent.from_pair(s + sign * 1j * xi, sbar + sign * 1j * xi.conjugate(), allow_half=True)

    entries = [entry(0, -1)]
    for k in range(1, chain.N):
        entries += [entry(k, +1), entry(k, -1)]
    if kind is EigenKind.B:
        entries = entries[:-1] if chain.N > 1 else []
        return GammaVector(tuple(entries)).shifted(chain.epsilon)
    return GammaVector(tuple(entries))


def rho_map(g: GammaVector) -> GammaVector:
    """Drop the first and last entries and reflect the rest.

    Raises:
        TooShort: For vectors shorter than 3
    """
    if len(g) < 3:
        raise TooShort(f"ρ needs at least 3 entries, got {len(g)}")
    return GammaVector(tuple(u.reflect() for u in g.entries[1:-1]))


def _rho_power(g: GammaVector, k: int) -> GammaVector:
    for _ in range(k):
        g = rho_map(g)
    return g


def varpi1_args(x: SeparatedPoint, g: GammaVector) -> List[FieldExponent]:
    """Arguments of ϖ_1(x|γ) = ∏_m Γ[γ_{2m-1} - ix] Γ[γ̄_{2m} + ix̄] over len(γ)//2 pairs."""
    ix = x.ix()
    args = []
    for m in range(1, len(g) // 2 + 1):
        args.append(g.at(2 * m - 1) - ix)
        args.append((g.at(2 * m) + ix).swap())
    return args


def varpi1(x: SeparatedPoint, g: GammaVector) -> complex:
    return gamma_ratio(varpi1_args(x, g))


def varpi_args(xs: Sequence[SeparatedPoint], g: GammaVector) -> List[FieldExponent]:
    args = []
    for m in range(1, len(xs) + 1):
        gm = _rho_power(g, m - 1)
        for k in range(m):
            args += varpi1_args(xs[k], gm)
    return args


def varpi_prefactor(xs: Sequence[SeparatedPoint], g: GammaVector) -> complex:
    """ϖ(x|γ) = ∏_{m=1}^{n} ∏_{k=1}^{m} ϖ_1(x_k|ρ^{m-1}γ), the prefactor making U_x symmetric.

    Raises:
        PoleEncountered: If the product sits on a pole
    """
    return gamma_ratio(varpi_args(xs, g))


def omega_factor_forms(g: GammaVector, u: SeparatedPoint, v: SeparatedPoint) -> Tuple[complex, complex]:
    """ω_n(γ, u, v) = ϖ_1(v|γ)/ϖ_1(u|γ) and the same ratio with every factor's components swapped.

    Raises:
        PreconditionViolated: For odd-length γ
        PoleEncountered: On singular arguments
    """
    if len(g) % 2:
        raise PreconditionViolated(f"ω needs an even-length γ, got {len(g)}")
    first = gamma_ratio(varpi1_args(v, g), varpi1_args(u, g))
    second = gamma_ratio([a.swap() for a in varpi1_args(v, g)], [a.swap() for a in varpi1_args(u, g)])
    return first, second


def omega_factor(g: GammaVector, u: SeparatedPoint, v: SeparatedPoint) -> complex:
    """ω_n(γ, u, v), refusing to answer when its two forms disagree.

    Raises:
        PreconditionViolated: For odd-length γ
        PoleEncountered: On singular arguments
        FormMismatch: If the swapped form differs by more than FORM_TOL
    """
    first, second = omega_factor_forms(g, u, v)
    if abs(first - second) > FORM_TOL * max(1.0, abs(first)):
        raise FormMismatch(f"ω forms disagree: {first} vs {second}", forms=(first, second))
    return first


# ---------------------------------------------------------------------------
# layer kernels and eigenfunctions


def _propagate(alpha: FieldExponent, z):
    if np.ndim(z) == 0:
        return eval_propagator(alpha, complex(z))
    return propagator_array(alpha, z)


def lambda_kernel(
    kind: EigenKind,
    n: int,
    x: SeparatedPoint,
    g: GammaVector,
    zs: Sequence,
    ws: Sequence,
):
    """Kernel of Λ_n(x|γ) (kind B) or Λ′_n(x|γ) (kind A) at (z_1..z_n | w_1..w_{n-1}).

    Points may be complex scalars or numpy arrays of equal shape.

    Raises:
        OriginSingularity: If a scalar propagator argument vanishes
    """
    kind = EigenKind(kind)
    expected = 2 * n - 2 if kind is EigenKind.B else 2 * n - 1
    if len(g) != expected:
        raise PreconditionViolated(f"Λ_{n} of kind {kind.value} needs {expected} γ-entries, got {len(g)}")
    if len(zs) != n or len(ws) != n - 1:
        raise PreconditionViolated(f"Λ_{n} takes {n} points z and {n - 1} points w")
    ix = x.ix()
    value = 1.0 + 0j
    for k in range(1, n):
        value = value * _propagate(g.at(2 * k - 1) - ix, zs[k - 1] - ws[k - 1])
        value = value * _propagate(g.at(2 * k) + ix, zs[k] - ws[k - 1])
    if kind is EigenKind.A:
        value = value * _propagate(g.at(2 * n - 1) - ix, zs[n - 1])
    return value


def _layer_indices(xs: Sequence[SeparatedPoint], g: GammaVector) -> List[Tuple[int, int, FieldExponent, FieldExponent]]:
    """Position-space indices (m, j, A_mj, B_mj) of the B-kind layers Λ_N(x_1|γ) Λ_{N-1}(x_2|ργ) ..."""
    out = []
    for m, x in enumerate(xs, start=1):
        gm = _rho_power(g, m - 1)
        ix = x.ix()
        for j in range(1, len(gm) // 2 + 1):
            out.append((m, j, gm.at(2 * j - 1) - ix, gm.at(2 * j) + ix))
    return out


def momentum_indices(
    xs: Sequence[SeparatedPoint], g: GammaVector, prefix: str = "l"
) -> List[Tuple[str, str, FieldExponent]]:
    """Edges of the momentum-space diagram of Ψ_x.

    Vertex ℓ_{k,j} is "o" for j = 0, "p" for j = k + 1, "q{j}" (partial sum p_1 + ... + p_j)
    for k = N-1 and "{prefix}{k}_{j}" otherwise. Edge α_kj runs ℓ_{k-1,j-1} → ℓ_{k,j}
    and β_kj runs ℓ_{k,j} → ℓ_{k-1,j}, with α_kj = 1 - A and β_kj = 1 - B of layer N-k.
    """
    N = len(xs) + 1
    if len(g) != 2 * N - 2:
        raise PreconditionViolated(f"Ψ with {N - 1} separated points needs {2 * N - 2} γ-entries, got {len(g)}")

    def label(k: int, j: int) -> str:
        if j == 0:
            return "o"
        if j == k + 1:
            return "p"
        if k == N - 1:
            return f"q{j}"
        return f"{prefix}{k}_{j}"

    edges = []
    for m, j, a, b in _layer_indices(xs, g):
        k = N - m
        edges.append((label(k - 1, j - 1), label(k, j), 1 - a))
        edges.append((label(k, j), label(k - 1, j), 1 - b))
    return edges


def loop_labels(N: int, prefix: str = "l") -> List[str]:
    return [f"{prefix}{k}_{j}" for k in range(1, N - 1) for j in range(1, k + 1)]


def psi_normalization(xs: Sequence[SeparatedPoint], g: GammaVector, p: complex) -> complex:
    """K = π^{N-N²/2} |p|^{N-1} ϖ(x|γ) ∏ i^{-[A]} a(A) over the position-space indices A.

    Multiplies the bare momentum diagram of `momentum_indices` to give Ψ_x(p_1..p_N)
    in the convention Ψ(z) = π^{-N} ∫ Ψ̃(p) e^{i Σ(p_k z_k + c.c.)} d²p.
    """
    N = len(xs) + 1
    indices = [a for _, _, a, _ in _layer_indices(xs, g)] + [b for _, _, _, b in _layer_indices(xs, g)]
    phase = -sum(a.m for a in indices)
    value = gamma_ratio(varpi_args(xs, g), indices)
    return complex(math.pi ** (N - N * N / 2.0) * abs(p) ** (N - 1) * 1j ** (phase % 4) * value)


def psi_diagram(xs: Sequence[SeparatedPoint], g: GammaVector, momenta: Sequence[complex]) -> Diagram:
    N = len(xs) + 1
    if len(momenta) != N:
        raise PreconditionViolated(f"expected {N} momenta, got {len(momenta)}")
    partial = np.cumsum(np.asarray(momenta, dtype=complex))
    external = {"o": 0j, "p": complex(partial[-1])}
    external.update({f"q{j}": complex(partial[j - 1]) for j in range(1, N)})
    return Diagram.build(external=external, internal=loop_labels(N), edges=momentum_indices(xs, g))


def psi_momentum_eval(
    spec: EigenfunctionSpec, momenta: Sequence[complex], quad: Optional[QuadratureSpec] = None
) -> IntegralEstimate:
    """Ψ^{ε}_x(p_1, ..., p_N) with the delta function δ²(p - Σp_k) stripped.

    N = 1, 2 are algebraic; N = 3 has one loop integral.

    Raises:
        UnsupportedDiagram: For N > 3
        NotConverged: If the loop quadrature does not reach its tolerance
    """
    if spec.kind is not EigenKind.B:
        raise PreconditionViolated("momentum-space evaluation is defined for kind B")
    if spec.N > 3:
        raise UnsupportedDiagram(f"N = {spec.N} needs more than one loop integral")
    g = spec.gamma
    total = complex(sum(momenta))
    constant = psi_normalization(spec.separated, g, total)
    if spec.N == 1:
        return IntegralEstimate(constant, 0.0, 0, True)
    quad = quad or QuadratureSpec.default(1, max_evals=4 * get_settings().quad_max_evals)
    estimate = numeric_eval(psi_diagram(spec.separated, g, momenta), spec=quad)
    return estimate.scale(constant).require()


def phi_position_eval(
    spec: EigenfunctionSpec, zs: Sequence[complex], quad: Optional[QuadratureSpec] = None
) -> IntegralEstimate:
    """Φ_x(z) = π^{-N²/2} ϖ(x|γ) [Λ′_N(x_1|γ) ... Λ′_1(x_N|ρ^{N-1}γ)](z) for N ≤ 2.

    Raises:
        UnsupportedDiagram: For N > 2
        NotConverged: If the quadrature does not reach its tolerance
    """
    if spec.kind is not EigenKind.A:
        raise PreconditionViolated("position-space Φ is defined for kind A")
    if len(zs) != spec.N:
        raise PreconditionViolated(f"expected {spec.N} points, got {len(zs)}")
    g, xs = spec.gamma, spec.separated
    constant = math.pi ** (-spec.N**2 / 2.0) * varpi_prefactor(xs, g)
    zs = [complex(z) for z in zs]
    if spec.N == 1:
        return IntegralEstimate(constant * lambda_kernel(EigenKind.A, 1, xs[0], g, zs, []), 0.0, 0, True)
    if spec.N > 2:
        raise UnsupportedDiagram(f"Φ for N = {spec.N} needs nested layer integrals")
    inner = rho_map(g)

    def integrand(w: np.ndarray) -> np.ndarray:
        return lambda_kernel(EigenKind.A, 2, xs[0], g, zs, [w]) * lambda_kernel(EigenKind.A, 1, xs[1], inner, [w], [])

    quad = quad or QuadratureSpec.default(1)
    quad = quad.with_centers(tuple(quad.singularity_centers) + (zs[0], zs[1], 0j))
    return integrate_c2(integrand, 1, quad).scale(constant).require()


# ---------------------------------------------------------------------------
# scalar-product diagrams


def _conjugated(edges) -> List[Tuple[str, str, FieldExponent]]:
    return [(u, v, alpha.star()) for u, v, alpha in edges]


def bb_diagram(
    xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint], g: GammaVector, eps: float, eps_prime: float
) -> Diagram:
    """Momentum diagram of ∫ δ²(p - Σp_k) Ψ^{ε}_x(p) Ψ^{ε′}_y(p)^† ∏d²p_k without the constants K_x, K_y.

    Externals are "o" (zero) and "p"; the partial sums q_1..q_{N-1} and both sets of loop
    momenta are internal. `g` is the unregulated γ-vector.
    """
    if len(xs) != len(ys) or not xs:
        raise PreconditionViolated("x and y need the same nonzero length")
    N = len(xs) + 1
    edges = momentum_indices(xs, g.shifted(eps), prefix="lx")
    edges += _conjugated(momentum_indices(ys, g.shifted(eps_prime), prefix="ly"))
    internal = [f"q{j}" for j in range(1, N)] + loop_labels(N, "lx") + loop_labels(N, "ly")
    return Diagram.build(external={"o": 0j, "p": None}, internal=internal, edges=edges)


def scalar_bb_reduced(
    xs: Sequence[SeparatedPoint],
    ys: Sequence[SeparatedPoint],
    g: GammaVector,
    eps: Optional[float] = None,
    eps_prime: Optional[float] = None,
    p: complex = 1.0,
    strategy: str = "leftmost",
) -> complex:
    """I^{ε,ε′}(x, y) = π^{-1} |p|^{-2(ε+ε′)} K_x K_y^* · reduce(bb_diagram).

    Regulators left out take the configured default ε.

    Raises:
        StuckDiagram: If the rewrite rules cannot finish the diagram
    """
    eps, eps_prime = _regulators(eps, eps_prime)
    form = reduce(bb_diagram(xs, ys, g, eps, eps_prime), strategy=strategy)
    k_x = psi_normalization(xs, g.shifted(eps), p)
    k_y = psi_normalization(ys, g.shifted(eps_prime), p)
    value = form.evaluate({"o": 0j, "p": complex(p)})
    return value * k_x * k_y.conjugate() * abs(p) ** (-2.0 * (eps + eps_prime)) / math.pi


def scalar_bb_numeric(
    xs: Sequence[SeparatedPoint],
    ys: Sequence[SeparatedPoint],
    g: GammaVector,
    eps: Optional[float] = None,
    eps_prime: Optional[float] = None,
    p: complex = 1.0,
    quad: Optional[QuadratureSpec] = None,
) -> IntegralEstimate:
    """I^{ε,ε′}(x, y) with the momentum integrals of bb_diagram done by quadrature.

    Raises:
        UnsupportedDiagram: If the diagram has more than three internal vertices
        NotConverged: If the quadrature misses its tolerance
    """
    eps, eps_prime = _regulators(eps, eps_prime)
    d = bb_diagram(xs, ys, g, eps, eps_prime)
    quad = quad or QuadratureSpec.default(len(d.internal_vertices()))
    estimate = numeric_eval(d, {"o": 0j, "p": complex(p)}, spec=quad)
    k_x = psi_normalization(xs, g.shifted(eps), p)
    k_y = psi_normalization(ys, g.shifted(eps_prime), p)
    return estimate.scale(k_x * k_y.conjugate() * abs(p) ** (-2.0 * (eps + eps_prime)) / math.pi).require()


def ab_diagram(xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint], g: GammaVector) -> Diagram:
    """Momentum diagram of (Ψ_{p,y} | Φ_x) for N = 2 without its constants.

    Edges o→q1 (1-a), q1→ℓ (1-b), ℓ→p (1-c), o→ℓ (1-d) come from Φ with
    a = γ_1 - ix_1, b = γ_2 + ix_1, c = γ_3 - ix_1, d = 1 - γ_2 - ix_2; the conjugated
    Ψ_y contributes o→q1 and q1→p.

    Raises:
        UnsupportedDiagram: Unless N = 2
    """
    N = len(xs)
    if N != 2 or len(ys) != 1 or len(g) != 3:
        raise UnsupportedDiagram(f"the A/B pairing diagram is built for N = 2, got N = {N}")
    a, b, c, d = _ab_indices(xs, g)
    edges = [("o", "q1", 1 - a), ("q1", "l", 1 - b), ("l", "p", 1 - c), ("o", "l", 1 - d)]
    edges += _conjugated(momentum_indices(ys, GammaVector(g.entries[:2])))
    return Diagram.build(external={"o": 0j, "p": None}, internal=["q1", "l"], edges=edges)


def _ab_indices(xs: Sequence[SeparatedPoint], g: GammaVector) -> Tuple[FieldExponent, ...]:
    ix1, ix2 = xs[0].ix(), xs[1].ix()
    return (g.at(1) - ix1, g.at(2) + ix1, g.at(3) - ix1, rho_map(g).at(1) - ix2)


def scalar_ab_reduced(
    xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint], g: GammaVector, p: complex, strategy: str = "leftmost"
) -> complex:
    """(Ψ_{p,y} | Φ_x) at N = 2 through the rewrite rules; `g` is the A-vector."""
    _check_ab_domain(xs, ys)
    form = reduce(ab_diagram(xs, ys, g), strategy=strategy)
    indices = _ab_indices(xs, g)
    phase = -sum(u.m for u in indices)
    constant = math.pi**-2 * 1j ** (phase % 4) * gamma_ratio(varpi_args(xs, g), indices)
    k_y = psi_normalization(ys, GammaVector(g.entries[:2]), p)
    return form.evaluate({"o": 0j, "p": complex(p)}) * constant * k_y.conjugate()


def _check_ab_domain(xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint]) -> None:
    for x, y in itertools.product(xs, ys):
        if (x.nu + y.nu).imag <= 0:
            raise ConvergenceDomainViolated(f"Im(ν + μ) = {(x.nu + y.nu).imag} is not positive")


# ---------------------------------------------------------------------------
# closed-form scalar products


def _parity_turns(terms: Sequence[FieldExponent]) -> int:
    """Quarter turns of (-1)^{Σ[u]}."""
    total = sum(u.diff for u in terms)
    if abs(total - round(total)) > 1e-9:
        raise PreconditionViolated(f"sign exponent {total} is not an integer")
    return 2 * (int(round(total)) % 2)


def _sum_upper(g: GammaVector, lo: int, hi: int) -> FieldExponent:
    """Σ_{m=lo}^{hi} γ_m^{(m)}; zero for an empty range."""
    return sum((g.upper(m, m) for m in range(lo, hi + 1)), FieldExponent.scalar(0))


def bb_sign_turns(g: GammaVector, N: int) -> int:
    """Quarter turns of 𝒞_N(γ): 1 for odd N, (-1)^{Σ_{k=1}^{N-3}[γ_{2N-2-k}^{(k-1)} - γ_N^{(N-3)}]} for even N."""
    if N % 2:
        return 0
    return _parity_turns([g.upper(2 * N - 2 - k, k - 1) - g.upper(N, N - 3) for k in range(1, N - 2)])


def ab_sign_turns(g: GammaVector, N: int) -> int:
    if N % 2:
        return 0
    return _parity_turns([g.upper(2 * N - k, k - 1) - g.upper(N, N - 1) for k in range(1, N + 1)])


def mixed_sign_turns(g: GammaVector, N: int) -> int:
    if N % 2:
        return 0
    return _parity_turns([g.upper(2 * N - k, k - 1) - g.upper(N, N - 1) for k in range(1, N)])


def _phi_args(g: GammaVector, N: int, x: SeparatedPoint) -> List[FieldExponent]:
    """Arguments of φ_N(x) = Γ[γ_{2N-3} - ix, γ^{(1)}_{2N-4} - ix, ..., γ^{(N-3)}_N - ix]."""
    ix = x.ix()
    return [g.upper(2 * N - 3 - i, i) - ix for i in range(N - 2)]


def _regulators(eps: Optional[float], eps_prime: Optional[float]) -> Tuple[float, float]:
    default = get_settings().epsilon_default
    return (default if eps is None else eps), (default if eps_prime is None else eps_prime)


def scalar_bb_closed(
    xs: Sequence[SeparatedPoint],
    ys: Sequence[SeparatedPoint],
    g: GammaVector,
    eps: Optional[float] = None,
    eps_prime: Optional[float] = None,
    form: int = 1,
) -> ClosedFormFactor:
    """Closed form of I^{ε,ε′}(x, y) for the unregulated B-vector γ.

    Form 1 is 𝒞_N Γ[ε+ε′+iX-iȲ*]/Γ[ε+ε′] ∏Γ[i(y_k*-x̄_j)] / ∏φ̄_N(x̄_k) φ_N(y_k)*;
    form 2 is its holomorphic/antiholomorphic mirror. Regulators left out take the
    configured default ε.

    Raises:
        PreconditionViolated: If ε + ε′ ≤ 0 or the lengths do not match
        PoleEncountered: If the Γ-product is singular
    """
    if form not in (1, 2):
        raise PreconditionViolated(f"unknown closed form {form}")
    eps, eps_prime = _regulators(eps, eps_prime)
    e = eps + eps_prime
    if e <= 0:
        raise PreconditionViolated("ε + ε′ must be positive")
    if len(xs) != len(ys) or not xs:
        raise PreconditionViolated("x and y need the same nonzero length")
    N = len(xs) + 1
    if len(g) != 2 * N - 2:
        raise PreconditionViolated(f"expected {2 * N - 2} γ-entries, got {len(g)}")

    r = _ix_sum(xs) + _ix_sum(ys).star() + e
    pairs = [-y.ix().conj() - x.ix().swap() for y in ys for x in xs]
    if form == 1:
        numerators = [r] + pairs
        denominators = [u.swap() for x in xs for u in _phi_args(g, N, x)]
        denominators += [u.conj() for y in ys for u in _phi_args(g, N, y)]
    else:
        numerators = [r.swap()] + [u.swap() for u in pairs]
        denominators = [u for x in xs for u in _phi_args(g, N, x)]
        denominators += [u.star() for y in ys for u in _phi_args(g, N, y)]
    return ClosedFormFactor(phase_quarter_turns=bb_sign_turns(g, N)).with_gammas(
        numerators, denominators + [FieldExponent.scalar(e)]
    )


def scalar_ab_closed(xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint], g: GammaVector) -> ClosedFormFactor:
    """Closed form of (Ψ_{p,y} | Φ_x) as a function of the external label "p".

    C^{AB}_N |p|^{N-1} (-ip)^{-G_N-iX} (ip̄)^{-Ḡ_N-iX̄} ∏Γ[i(ȳ_j*-x_k)] / ∏ϑ_N(x_j) (∏ϑ̄_N(ȳ_j))^†.

    Raises:
        ConvergenceDomainViolated: Unless Im(ν_k + μ_j) > 0 for all pairs
    """
    N = len(xs)
    if len(ys) != N - 1 or len(g) != 2 * N - 1:
        raise PreconditionViolated(f"expected {N - 1} points y and {2 * N - 1} γ-entries")
    _check_ab_domain(xs, ys)
    c = _sum_upper(g, N, 2 * N - 1) + _ix_sum(xs)

    def theta(point: SeparatedPoint) -> List[FieldExponent]:
        return [g.upper(2 * N - k, k - 1) - point.ix() for k in range(1, N + 1)]

    numerators = [-y.ix().star() - x.ix() for x in xs for y in ys]
    denominators = [u for x in xs for u in theta(x)] + [u.star() for y in ys for u in theta(y)]
    return ClosedFormFactor(
        phase_quarter_turns=ab_sign_turns(g, N) + c.m,
        momentum_powers=(
            (LinComb.of("p"), FieldExponent.scalar(-(N - 1) / 2.0)),
            (LinComb.of("p"), c),
        ),
    ).with_gammas(numerators, denominators)


def scalar_mixed_closed(ys: Sequence[SeparatedPoint], xs: Sequence[SeparatedPoint], g: GammaVector) -> ClosedFormFactor:
    """Closed form of (Ψ^{(N)}_{q1,y} ⊗ Ψ^{(1)}_{q2}, Ψ^{(N+1)}_{p,x}) over external labels p, q1, q2.

    Carries π δ²(p - q1 - q2) symbolically; `evaluate` returns its coefficient.
    """
    N = len(xs)
    if len(ys) != N - 1 or len(g) != 2 * N:
        raise PreconditionViolated(f"expected {N - 1} points y and {2 * N} γ-entries")
    g_n = _sum_upper(g, N, 2 * N - 1)
    g_next = _sum_upper(g, N + 1, 2 * N - 1).star()
    last = g.at(2 * N).reflect()
    ix, iy = _ix_sum(xs), _ix_sum(ys)
    p, q1, q2 = LinComb.of("p"), LinComb.of("q1"), LinComb.of("q2")

    numerators = [-y.ix().star() - x.ix() for y in ys for x in xs]
    denominators = [g.upper(2 * N - k, k - 1) - x.ix() for x in xs for k in range(1, N)]
    denominators += [(g.upper(2 * N - k, k - 1) - y.ix()).star() for y in ys for k in range(1, N + 1)]
    return ClosedFormFactor(
        pi_power=1,
        phase_quarter_turns=mixed_sign_turns(g, N) - g_next.m - last.m + g_n.m,
        momentum_powers=(
            (p, FieldExponent.scalar(-N / 2.0)),
            (q1, FieldExponent.scalar(-(N - 1) / 2.0)),
            (p, g_next),
            (q2, last),
            (q1, g_n),
        ),
        ratio_powers=(
            (q1 + q2, q2, -iy.star()),
            (-q2, q1, ix),
        ),
        deltas=(p - q1 - q2,),
    ).with_gammas(numerators, denominators)


# ---------------------------------------------------------------------------
# SoV measure


def measure_mu(xs: Sequence[SeparatedPoint]) -> float:
    """μ(x) = ∏_{k<j} (ν_kj² + n_kj²/4) for points on the real line."""
    if any(abs(x.nu.imag) > 1e-12 for x in xs):
        raise PreconditionViolated("the SoV weight is defined for real ν")
    value = 1.0
    for a, b in itertools.combinations(xs, 2):
        value *= (a.nu.real - b.nu.real) ** 2 + 0.25 * (a.n - b.n) ** 2
    return value


def sov_constants(N: int, kind: EigenKind = EigenKind.B) -> float:
    """c_N^B = 2/((2π)^{N+1} N!) and c_N^A = 1/((2π)^N N!)."""
    if N < 1:
        raise PreconditionViolated(f"N = {N} must be positive")
    if EigenKind(kind) is EigenKind.B:
        return 2.0 / ((2.0 * math.pi) ** (N + 1) * math.factorial(N))
    return 1.0 / ((2.0 * math.pi) ** N * math.factorial(N))


def omega_z(ys: Sequence[SeparatedPoint], M: float) -> complex:
    """Ω_Z(y) = ∏_k Γ[Z + iy_k] Γ[Z - iy_k] / Γ[Z]², Z = 1/2 + iM; a pure phase for real y."""
    z = FieldExponent.scalar(0.5 + 1j * M)
    numerators = [z + y.ix() for y in ys] + [z - y.ix() for y in ys]
    return gamma_ratio(numerators, [z] * (2 * len(ys)))


def sov_pairing(
    phi1: Callable,
    phi2: Callable,
    N: int,
    kind: EigenKind = EigenKind.B,
    sigma: int = 0,
    n_max: int = 2,
    nu_cutoff: float = 4.0,
    nodes: int = 16,
    p_cutoff: float = 3.0,
) -> complex:
    """(φ_1, φ_2) in the SoV space for test functions supported in the truncated domain.

    Kind B integrates φ(p, x) over d²p dμ^B_{N-1}(x), kind A integrates χ(x) over dμ^A_N(x).
    Discrete labels run over n ∈ ℤ + σ/2 with |n| ≤ n_max + σ/2, ν and p over Gauss-Legendre
    nodes of [-nu_cutoff, nu_cutoff] and the square of half-width p_cutoff.
    """
    kind = EigenKind(kind)
    if sigma not in (0, 1):
        raise PreconditionViolated(f"σ = {sigma} must be 0 or 1")
    count = N - 1 if kind is EigenKind.B else N
    if count > 3:
        raise PreconditionViolated(f"{count} separated variables exceed the tensor grid limit")
    constant = sov_constants(count, kind) if count else 1.0
    t, w = np.polynomial.legendre.leggauss(nodes)
    nus, nu_weights = nu_cutoff * t, nu_cutoff * w
    labels = [2 * k + sigma for k in range(-n_max, n_max + 1)]
    if kind is EigenKind.B:
        momenta = [(p_cutoff * complex(a, b), p_cutoff**2 * wa * wb) for (a, wa), (b, wb) in itertools.product(zip(t, w), repeat=2)]

    total = 0j
    for n2s in itertools.product(labels, repeat=count):
        for idx in itertools.product(range(nodes), repeat=count):
            xs = tuple(SeparatedPoint(n2, nus[i]) for n2, i in zip(n2s, idx))
            weight = float(np.prod([nu_weights[i] for i in idx])) * measure_mu(xs)
            if weight == 0.0:
                continue
            if kind is EigenKind.A:
                total += weight * np.conj(phi1(xs)) * phi2(xs)
            else:
                total += weight * sum(wp * np.conj(phi1(p, xs)) * phi2(p, xs) for p, wp in momenta)
    return complex(constant * total)


# ---------------------------------------------------------------------------
# eigen-relations in position space


def _psi2_terms(
    spec: EigenfunctionSpec, zs: Sequence[complex], quad: Optional[QuadratureSpec], mixed: bool
) -> dict:
    """∫ d²w f(w) D_A(z1-w) D_B(z2-w) e^{i(pw+p̄w̄)} for f = 1, ∂_{z1}, ∂_{z2} (and ∂_{z1}∂_{z2})."""
    if spec.kind is not EigenKind.B:
        raise PreconditionViolated("eigen-relations are checked for kind B")
    if len(zs) != 2:
        raise PreconditionViolated(f"expected 2 points, got {len(zs)}")
    g, x, p = spec.gamma, spec.separated[0], complex(spec.p)
    alpha, beta = g.at(1) - x.ix(), g.at(2) + x.ix()
    z1, z2 = (complex(z) for z in zs)
    quad = quad or QuadratureSpec.default(1, oscillation=2.0 * abs(p))
    quad = quad.with_centers(tuple(quad.singularity_centers) + (z1, z2))

    def base(w: np.ndarray) -> np.ndarray:
        return propagator_array(alpha, z1 - w) * propagator_array(beta, z2 - w) * np.exp(2j * (p * w).real)

    factors = {
        "0": lambda w: 1.0,
        "1": lambda w: -alpha.a / (z1 - w),
        "2": lambda w: -beta.a / (z2 - w),
    }
    if mixed:
        factors["12"] = lambda w: alpha.a * beta.a / ((z1 - w) * (z2 - w))
    out = {}
    for name, factor in factors.items():
        out[name] = integrate_c2(lambda w, f=factor: f(w) * base(w), 1, quad).require().value
        logger.debug("Ψ term %s = %s", name, out[name])
    return out


def eigen_translation_check(
    spec: EigenfunctionSpec, zs: Sequence[complex], quad: Optional[QuadratureSpec] = None
) -> float:
    """|-i Σ_k ∂_{z_k} Ψ - pΨ| / |pΨ| by differentiation under the integral sign.

    Raises:
        UnsupportedDiagram: For N > 2
        NotConverged: If a quadrature misses its tolerance
    """
    if spec.N == 1:
        return 0.0
    if spec.N > 2:
        raise UnsupportedDiagram(f"position-space checks cover N ≤ 2, got N = {spec.N}")
    terms = _psi2_terms(spec, zs, quad, mixed=False)
    p = complex(spec.p)
    target = p * terms["0"]
    return abs(-1j * (terms["1"] + terms["2"]) - target) / abs(target)


def eigen_b_check(
    spec: EigenfunctionSpec, u: complex, zs: Sequence[complex], quad: Optional[QuadratureSpec] = None
) -> float:
    """Residual of B_2(u)Ψ = p(u - x_1)Ψ with B_2(u) = (u+ξ_1+iS_1^0)(iS_2^-) + (iS_1^-)(u+ξ_2-iS_2^0).

    In terms of derivatives B_2(u) = (z_1-z_2)∂_1∂_2 + (s_1-i(u+ξ_1))∂_2 - (s_2+i(u+ξ_2))∂_1,
    with ξ_2 regulated to ξ_2 - iε. The residual is relative to |p(u-x_1)Ψ|, or to |pΨ| at u = x_1.

    Raises:
        UnsupportedDiagram: Unless N = 2
        NotConverged: If a quadrature misses its tolerance
    """
    if spec.N != 2:
        raise UnsupportedDiagram(f"B_2 is checked at N = 2, got N = {spec.N}")
    terms = _psi2_terms(spec, zs, quad, mixed=True)
    z1, z2 = (complex(z) for z in zs)
    s1, s2 = spec.chain.spins[0].s, spec.chain.spins[1].s
    xi1, xi2 = spec.chain.xis[0], spec.chain.xis[1] - 1j * spec.chain.epsilon
    p, u = complex(spec.p), complex(u)
    lhs = (
        (z1 - z2) * terms["12"]
        + (s1 - 1j * (u + xi1)) * terms["2"]
        - (s2 + 1j * (u + xi2)) * terms["1"]
    )
    rhs = p * (u - spec.separated[0].x) * terms["0"]
    scale = abs(rhs) if abs(rhs) > 1e-12 * abs(p * terms["0"]) else abs(p * terms["0"])
    return abs(lhs - rhs) / scale


# ---------------------------------------------------------------------------
# ε → 0 study


STUDY_WIDTH = 4.0
STUDY_DIP = 2.0


def study_test_function(center: float) -> Callable[[np.ndarray], np.ndarray]:
    """(1 + ((ν-c)/2)²)·exp(-((ν-c)/4)²): a Gaussian with a shallow dip at its center.

    With the dip the smoothed pairing increases with ε together with its Γ-ratio
    corrections.
    """

    def test_function(nu: np.ndarray) -> np.ndarray:
        t = np.asarray(nu) - center
        return (1.0 + (t / STUDY_DIP) ** 2) * np.exp(-((t / STUDY_WIDTH) ** 2))

    return test_function


def epsilon_study(
    xs: Sequence[SeparatedPoint],
    ys: Sequence[SeparatedPoint],
    g: GammaVector,
    epsilons: Optional[Sequence[float]] = None,
    test_function: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    span: float = 20.0,
    points: int = 4000,
) -> pd.DataFrame:
    """∫ dν φ(ν) I^{ε,ε}(x, y(ν)) over the first coordinate of y for a sequence of ε.

    The midpoint grid is symmetric about Re ν of x_1, so the pole of the pairing at
    y_1 = x_1 falls between nodes; the step has to stay well below 2ε, the distance of
    the regulated pole from the real line. Returns columns epsilon, value, cauchy,
    where cauchy is the distance to the previous value in the sequence.
    """
    epsilons = list(epsilons or get_settings().epsilon_sequence)
    if points % 2:
        points += 1
    center = xs[0].nu.real
    h = 2.0 * span / points
    if h > 0.5 * min(epsilons):
        logger.warning("grid step %.3g is coarse against ε = %g", h, min(epsilons))
    grid = center + (np.arange(points) - points / 2 + 0.5) * h
    test_function = test_function or study_test_function(center)
    weights = h * np.asarray(test_function(grid))

    rows = []
    previous = None
    for eps in epsilons:
        raise_if_cancelled()
        total = 0j
        for nu, weight in zip(grid, weights):
            y_first = SeparatedPoint(ys[0].n2, complex(nu, ys[0].nu.imag))
            try:
                total += weight * scalar_bb_closed(xs, (y_first,) + tuple(ys[1:]), g, eps, eps).evaluate()
            except PoleEncountered:
                logger.warning("pole of I at ν = %s skipped", nu)
        cauchy = math.nan if previous is None else abs(total - previous)
        rows.append({"epsilon": eps, "value": total, "cauchy": cauchy})
        logger.info("ε = %g: %s (Δ = %.3g)", eps, total, cauchy)
        previous = total
    return pd.DataFrame(rows)
