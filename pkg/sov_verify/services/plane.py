"""Propagators D_α(z) = z^{-a} z̄^{-ā} on the complex plane and quadrature over ℂ^k.

The quadrature splits the plane with a smooth partition of unity: a disk around every
declared singularity center is integrated in polar coordinates on geometric rings
(ratio 4) whose trailing contributions are extrapolated as a geometric series, and the
remainder is integrated on a polar grid around the centroid with an outer ladder of
rings for the power-law tail. Oscillatory integrands (a plane wave) are cut off with a
smooth radial window instead of the outer ladder.
"""

import cmath
import logging
import math
import threading
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, List, Sequence, Tuple, Union

import mpmath
import numpy as np

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import BudgetExceeded, NotConverged, OriginSingularity, PreconditionViolated
from sov_verify.services.cfield import FieldExponent, afactor

logger = logging.getLogger(__name__)

LOCAL_RINGS = 12
OUTER_RINGS = 8
MERGE_RADIUS = 1e-2
RHO_MAX = 1.0
FOURIER_DPS = 30

# mpmath keeps its precision in one global context
MPMATH_LOCK = threading.RLock()
cancelled = threading.Event()


def raise_if_cancelled() -> None:
    """Raise BudgetExceeded once a runner has withdrawn the remaining time."""
    if cancelled.is_set():
        raise BudgetExceeded("evaluation cancelled: time budget exhausted")


@dataclass(frozen=True)
class PlanePoint:
    """A finite point of the complex plane (position or momentum)."""

    z: complex

    def __post_init__(self):
        z = complex(self.z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise PreconditionViolated(f"non-finite point {z}")
        object.__setattr__(self, "z", z)


Point = Union[PlanePoint, complex, float, int]


def as_complex(z: Point) -> complex:
    return z.z if isinstance(z, PlanePoint) else complex(z)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and geometry of a plane quadrature.

    Attributes:
        abs_tol: Absolute tolerance
        rel_tol: Relative tolerance
        max_evals: Integrand evaluation budget
        outer_cutoff: Radius beyond which the tail is extrapolated (or windowed)
        singularity_centers: Points where the integrand may be singular
        oscillation: Largest radial wavenumber of a plane-wave factor; 0 for none
        local_power_limit: Largest accepted local singular power
        max_level: Largest refinement level
    """

    abs_tol: float
    rel_tol: float
    max_evals: int
    outer_cutoff: float
    singularity_centers: Tuple[complex, ...] = ()
    oscillation: float = 0.0
    local_power_limit: float = 1.9
    max_level: int = 4

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise PreconditionViolated("quadrature tolerances must be positive")
        if self.outer_cutoff <= 0:
            raise PreconditionViolated("outer_cutoff must be positive")
        centers = tuple(as_complex(c) for c in self.singularity_centers)
        object.__setattr__(self, "singularity_centers", centers)

    @classmethod
    def default(cls, k: int = 1, centers: Sequence[Point] = (), **overrides) -> "QuadratureSpec":
        """Spec from settings; k = 2, 3 use the relaxed relative tolerance."""
        settings = get_settings()
        values = dict(
            abs_tol=settings.quad_abs_tol,
            rel_tol=settings.quad_rel_tol if k == 1 else settings.quad_rel_tol_multi,
            max_evals=settings.quad_max_evals,
            outer_cutoff=settings.outer_cutoff,
            singularity_centers=tuple(centers),
            local_power_limit=settings.local_power_limit,
            max_level=settings.quad_max_level,
        )
        values.update(overrides)
        return cls(**values)

    def with_centers(self, centers: Sequence[Point]) -> "QuadratureSpec":
        return replace(self, singularity_centers=tuple(centers))


@dataclass(frozen=True)
class IntegralEstimate:
    value: complex
    err: float
    evals: int = 0
    converged: bool = True

    def require(self) -> "IntegralEstimate":
        """Return self, or raise NotConverged carrying this estimate."""
        if not self.converged:
            raise NotConverged(
                f"estimate {self.value:.6g} with error {self.err:.2g} did not converge",
                estimate=self,
            )
        return self

    def __add__(self, other: "IntegralEstimate") -> "IntegralEstimate":
        return IntegralEstimate(
            value=self.value + other.value,
            err=self.err + other.err,
            evals=self.evals + other.evals,
            converged=self.converged and other.converged,
        )

    def scale(self, c: complex) -> "IntegralEstimate":
        return IntegralEstimate(self.value * c, self.err * abs(c), self.evals, self.converged)

    def rel_err(self) -> float:
        return self.err / abs(self.value) if self.value else math.inf


# ---------------------------------------------------------------------------
# propagators


def eval_propagator(alpha: FieldExponent, z: Point) -> complex:
    """D_α(z) = |z|^{-2w} e^{-i m arg z}.

    Raises:
        OriginSingularity: If z = 0
    """
    z = as_complex(z)
    if z == 0:
        raise OriginSingularity("propagator evaluated at the origin")
    return cmath.exp(-2.0 * alpha.w * math.log(abs(z)) - 1j * alpha.m * cmath.phase(z))


def propagator_array(alpha: FieldExponent, z: np.ndarray) -> np.ndarray:
    """Vectorized D_α over an array of points."""
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.exp(-2.0 * alpha.w * np.log(np.abs(z)) - 1j * alpha.m * np.angle(z))


def propagator_derivative(alpha: FieldExponent, z: np.ndarray) -> np.ndarray:
    """∂_z D_α(z) = -a z^{-1} D_α(z)."""
    z = np.asarray(z, dtype=complex)
    return -alpha.a / z * propagator_array(alpha, z)


def fourier_closed(alpha: FieldExponent, p: Point) -> complex:
    """π i^{[α]} a(α) D_{1-α}(p), the closed form of ∫ d²z e^{i(pz+p̄z̄)} D_α(z)."""
    return math.pi * 1j ** (alpha.m % 4) * afactor(alpha).value * eval_propagator(1 - alpha, p)


# ---------------------------------------------------------------------------
# quadrature grid


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def smooth_step(s: np.ndarray) -> np.ndarray:
    """Smooth step: 1 for s ≤ 0, 0 for s ≥ 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        left = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        right = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return left / (left + right)


def _cutoff(r: np.ndarray, rho: float) -> np.ndarray:
    """1 for r ≤ ρ/2, 0 for r ≥ ρ."""
    return smooth_step(2.0 * r / rho - 1.0)


def _panels(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on consecutive panels with the polar weight r dr."""
    x, w = gauss_legendre(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    r = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel() * r
    return r, weights


def _log_ring(r_lo: float, r_hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes on [r_lo, r_hi] in t = log r with the polar weight r² dt."""
    x, w = gauss_legendre(n)
    t_lo, t_hi = math.log(r_lo), math.log(r_hi)
    t = 0.5 * (t_hi - t_lo) * x + 0.5 * (t_hi + t_lo)
    r = np.exp(t)
    return r, 0.5 * (t_hi - t_lo) * w * r * r


class _Grid:
    """Weighted nodes grouped into blocks; ladders are ring sequences to extrapolate."""

    def __init__(self):
        self.nodes: List[np.ndarray] = []
        self.weights: List[np.ndarray] = []
        self.groups: List[np.ndarray] = []
        self.ladders: List[Tuple[str, List[int]]] = []

    def polar_block(
        self,
        center: complex,
        r: np.ndarray,
        r_weights: np.ndarray,
        n_theta: int,
        weight_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> int:
        gid = len(self.nodes)
        theta = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
        z = (center + r[:, None] * np.exp(1j * theta[None, :])).ravel()
        w = np.repeat(r_weights * (2.0 * np.pi / n_theta), n_theta)
        if weight_fn is not None:
            w = w * weight_fn(z)
        keep = w != 0.0
        self.nodes.append(z[keep])
        self.weights.append(w[keep])
        self.groups.append(np.full(int(keep.sum()), gid))
        return gid

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.concatenate(self.nodes), np.concatenate(self.weights), np.concatenate(self.groups)


def _merge_centers(centers: Sequence[complex]) -> List[complex]:
    merged: List[complex] = []
    for c in centers:
        if all(abs(c - d) > MERGE_RADIUS for d in merged):
            merged.append(c)
    return merged


def _local_radii(centers: Sequence[complex]) -> List[float]:
    radii = []
    for i, c in enumerate(centers):
        dist = min((abs(c - d) for j, d in enumerate(centers) if j != i), default=math.inf)
        radii.append(min(RHO_MAX, dist / 3.0))
    return radii


def _build_grid(centers: Sequence[complex], spec: QuadratureSpec, level: int) -> _Grid:
    n_r = 8 + 4 * level
    theta_mult = 1.0 + 0.5 * level
    centers = _merge_centers(centers)
    radii = _local_radii(centers)
    grid = _Grid()

    def partition(z: np.ndarray) -> np.ndarray:
        out = np.ones(z.shape)
        for c, rho in zip(centers, radii):
            out = out - _cutoff(np.abs(z - c), rho)
        return out

    n_local = int(math.ceil(32 * theta_mult))
    for c, rho in zip(centers, radii):
        ladder = []
        for j in range(LOCAL_RINGS):
            r_hi = rho * 4.0 ** (-j)
            r, w = _log_ring(r_hi / 4.0, r_hi, n_r)
            weight_fn = (lambda z, c=c, rho=rho: _cutoff(np.abs(z - c), rho)) if j == 0 else None
            ladder.append(grid.polar_block(c, r, w, n_local, weight_fn))
        grid.ladders.append(("local", ladder[1:]))

    origin = complex(np.mean(centers)) if centers else 0j
    spread = max((abs(c - origin) for c in centers), default=0.0)
    h = min(radii, default=2 * RHO_MAX) / 2.0
    r_a = max(1.0, spread + max(radii, default=0.0) + h)
    edges = np.linspace(0.0, r_a, int(math.ceil(r_a / h)) + 1)
    n_theta = int(math.ceil(max(64.0, 8.0 * math.pi * r_a / h) * theta_mult))
    r, w = _panels(edges, n_r)
    grid.polar_block(origin, r, w, n_theta, partition if centers else None)

    r0 = max(spec.outer_cutoff, 2.0 * r_a)
    if spec.oscillation > 0:
        hb = min(2.0, math.pi / (2.0 * spec.oscillation))
        edges = np.linspace(r_a, r0, int(math.ceil((r0 - r_a) / hb)) + 1)
        n_theta_b = int(math.ceil((1.5 * spec.oscillation * r0 + 64.0) * theta_mult))
        r, w = _panels(edges, n_r)
        grid.polar_block(
            origin, r, w, max(n_theta, n_theta_b), lambda z: _cutoff(np.abs(z - origin), r0)
        )
        return grid

    n_geo = max(1, int(math.ceil(math.log(r0 / r_a) / math.log(1.5))))
    r, w = _panels(np.geomspace(r_a, r0, n_geo + 1), n_r)
    grid.polar_block(origin, r, w, n_theta)
    ladder = []
    for j in range(OUTER_RINGS):
        r, w = _log_ring(r0 * 4.0**j, r0 * 4.0 ** (j + 1), n_r)
        ladder.append(grid.polar_block(origin, r, w, n_theta))
    grid.ladders.append(("outer", ladder))
    return grid


def _extrapolate(kind: str, sums: np.ndarray, total: complex, spec: QuadratureSpec) -> Tuple[complex, float]:
    """Geometric tail of a ring ladder and its error estimate."""
    last, prev, before = sums[-1], sums[-2], sums[-3]
    scale = max(abs(total), 1e-300)
    if abs(last) <= 1e-14 * scale or prev == 0 or before == 0:
        return 0j, abs(last)
    ratio, ratio_prev = last / prev, prev / before
    if abs(last) > 1e-6 * scale:
        power = math.log(abs(ratio)) / math.log(4.0)
        if kind == "local" and 2.0 + power >= spec.local_power_limit:
            raise PreconditionViolated(f"local singular power {2.0 + power:.3f} is too close to 2")
        if kind == "outer" and 2.0 - power <= 4.0 - spec.local_power_limit:
            raise PreconditionViolated(f"tail decay power {2.0 - power:.3f} is too close to 2")
    if abs(ratio) >= 1.0:
        if abs(last) <= 1e-9 * scale:
            return 0j, abs(last)
        raise PreconditionViolated(f"{kind} ring contributions do not decrease")
    tail = last * ratio / (1.0 - ratio)
    if abs(ratio_prev) < 1.0:
        err = abs(tail - last * ratio_prev / (1.0 - ratio_prev))
    else:
        err = abs(tail)
    return tail, err


def _integrate_level(
    f: Callable[[np.ndarray], np.ndarray],
    centers: Sequence[complex],
    spec: QuadratureSpec,
    level: int,
    counter: List[int],
) -> Tuple[complex, float]:
    raise_if_cancelled()
    grid = _build_grid(centers, spec, level)
    nodes, weights, groups = grid.arrays()
    values = np.asarray(f(nodes), dtype=complex)
    counter[0] += nodes.size
    contrib = weights * values
    n_groups = len(grid.nodes)
    sums = np.bincount(groups, contrib.real, n_groups) + 1j * np.bincount(groups, contrib.imag, n_groups)
    total = complex(sums.sum())
    if not cmath.isfinite(total):
        raise PreconditionViolated("integrand is not finite on the quadrature grid")
    tail_err = 0.0
    for kind, ladder in grid.ladders:
        tail, err = _extrapolate(kind, sums[ladder], total, spec)
        total += tail
        tail_err += err
    return total, tail_err


def _nested(
    integrand: Callable[..., np.ndarray],
    k: int,
    centers: Tuple[complex, ...],
    spec: QuadratureSpec,
    level: int,
    counter: List[int],
    fixed: Tuple[complex, ...] = (),
) -> Tuple[complex, float]:
    if k == 1:

        def inner(z: np.ndarray) -> np.ndarray:
            return integrand(*[np.full(z.shape, v) for v in fixed], z)

        return _integrate_level(inner, centers, spec, level, counter)

    def outer(z: np.ndarray) -> np.ndarray:
        out = np.empty(z.shape, dtype=complex)
        for idx, zi in enumerate(z):
            out[idx] = _nested(integrand, k - 1, centers + (zi,), spec, level, counter, fixed + (zi,))[0]
        return out

    return _integrate_level(outer, centers, spec, level, counter)


def integrate_c2(integrand: Callable[..., np.ndarray], k: int, spec: QuadratureSpec) -> IntegralEstimate:
    """Integrate over ℂ^k with d²z = d(Re z) d(Im z) per variable.

    Args:
        integrand: Vectorized function of k complex arrays of equal shape
        k: Number of complex variables (1, 2 or 3); inner variables see the outer ones as centers
        spec: Tolerances, centers and tail treatment

    Returns:
        Estimate from the last two refinement levels; `converged` is False when the
        budget or the level limit ran out first

    Raises:
        PreconditionViolated: If k is unsupported or the integrand is too singular
    """
    if k not in (1, 2, 3):
        raise PreconditionViolated(f"k = {k} complex variables is not supported")
    counter = [0]
    previous = None
    level = 0
    while True:
        value, tail_err = _nested(integrand, k, spec.singularity_centers, spec, level, counter)
        if previous is not None:
            err = abs(value - previous) + tail_err
            tol = max(spec.abs_tol, spec.rel_tol * abs(value))
            logger.debug("level %d: value %s, err %.3g, evals %d", level, value, err, counter[0])
            if err <= tol:
                return IntegralEstimate(value, err, counter[0], True)
            if level >= spec.max_level or counter[0] >= spec.max_evals:
                logger.warning("quadrature stopped at level %d with err %.3g > tol %.3g", level, err, tol)
                return IntegralEstimate(value, err, counter[0], False)
        previous = value
        level += 1


# ---------------------------------------------------------------------------
# Fourier transform of a propagator


def _radial_bessel(w: complex, m: int, method: str) -> complex:
    exponent = mpmath.mpc(1 - 2 * w)

    def f(s):
        return mpmath.power(s, exponent) * mpmath.besselj(m, s)

    if method == "zeros":
        value = mpmath.quadosc(f, [0, mpmath.inf], zeros=lambda n: mpmath.besseljzero(abs(m), n))
    else:
        value = mpmath.quadosc(f, [0, mpmath.inf], omega=1)
    return complex(value)


def fourier_propagator(alpha: FieldExponent, p: Point, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """∫ d²z e^{i(pz+p̄z̄)} D_α(z), evaluated numerically.

    The angular integral is 2π i^m e^{im arg p} J_m(2|p|r); the radial one
    ∫ s^{1-2w} J_m(s) ds is summed between Bessel zeros. A second summation with
    the asymptotic period gives the error estimate.

    Raises:
        OriginSingularity: If p = 0
        PreconditionViolated: If the radial integral diverges at 0 or at infinity
    """
    spec = spec or QuadratureSpec.default()
    p = as_complex(p)
    if p == 0:
        raise OriginSingularity("Fourier transform evaluated at zero momentum")
    m, w = alpha.m, complex(alpha.w)
    if (2.0 - 2.0 * w + abs(m)).real <= 0 or w.real <= 0.25:
        raise PreconditionViolated(f"Fourier integral of D_α diverges for w = {w}, m = {m}")
    with MPMATH_LOCK, mpmath.workdps(FOURIER_DPS):
        radial = _radial_bessel(w, m, "zeros")
        check = _radial_bessel(w, m, "period")
    prefactor = 2.0 * math.pi * 1j ** (m % 4) * cmath.exp(1j * m * cmath.phase(p)) * (2.0 * abs(p)) ** (2.0 * w - 2.0)
    value = prefactor * radial
    err = abs(prefactor) * abs(radial - check)
    converged = err <= max(spec.abs_tol, spec.rel_tol * abs(value))
    if not converged:
        logger.warning("Fourier integral for %r at p = %s: err %.3g", alpha, p, err)
    return IntegralEstimate(value, err, evals=0, converged=converged)


def fourier_plane(alpha: FieldExponent, p: Point, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """∫ d²z e^{i(pz+p̄z̄)} D_α(z) as a windowed quadrature over the plane.

    Unlike `fourier_propagator` nothing is integrated analytically; the origin is a
    singularity center and the plane wave sets the outer window.

    Raises:
        OriginSingularity: If p = 0
        PreconditionViolated: If D_α is not locally integrable
    """
    p = as_complex(p)
    if p == 0:
        raise OriginSingularity("Fourier transform evaluated at zero momentum")
    spec = spec or QuadratureSpec.default(1)
    spec = replace(spec, oscillation=max(spec.oscillation, 2.0 * abs(p)))
    spec = spec.with_centers(tuple(spec.singularity_centers) + (0j,))

    def integrand(z: np.ndarray) -> np.ndarray:
        return propagator_array(alpha, z) * np.exp(2j * (p * z).real)

    return integrate_c2(integrand, 1, spec)
