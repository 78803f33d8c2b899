"""Mellin-Barnes integrals of the complex field: Gustafson's two integrals and J_ω.

Every integration variable is a pair u_k = (n_k/2 + ν_k, -n_k/2 + ν_k) with
ν_k = c_k + iτ_k. For each discrete label the real offset c_k sits in the middle of the
gap between the left and the right series of poles, and the τ integrals run over
Gauss-Legendre panels graded towards the nearest poles. Discrete sums and τ integrals
are truncated with smooth windows of three sizes and the limit is extrapolated with
Aitken's Δ² process.
"""

import cmath
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import (
    BranchCutHit,
    ConvergenceDomainViolated,
    PoleOnContour,
    PreconditionViolated,
)
from sov_verify.services.cfield import FieldExponent, gamma_ratio, log_cgamma_array
from sov_verify.services.plane import IntegralEstimate, gauss_legendre, raise_if_cancelled, smooth_step
from sov_verify.services.sov import SeparatedPoint, measure_mu, sov_constants

logger = logging.getLogger(__name__)

LEVELS = (1, 2, 4)


@dataclass(frozen=True)
class MBSpec:
    """Truncation and contour prescription of a Mellin-Barnes sum-integral.

    Attributes:
        sigma: Parity of the discrete labels, n ∈ ℤ + σ/2
        n_max: Smallest discrete window; the larger ones are 2·n_max and 4·n_max
        nu_cutoff: Smallest τ window
        contour_shifts: Fixed real offsets of the ν contours, one per variable;
            empty to place every contour in the middle of its pole gap
        tol: Relative tolerance of the extrapolated value
        nodes: Gauss-Legendre nodes per τ panel
        max_panel: Longest τ panel
    """

    sigma: int = 0
    n_max: int = 8
    nu_cutoff: float = 40.0
    contour_shifts: Tuple[float, ...] = ()
    tol: float = 1e-6
    nodes: int = 12
    max_panel: float = 2.0

    def __post_init__(self):
        if self.sigma not in (0, 1):
            raise PreconditionViolated(f"sigma = {self.sigma} must be 0 or 1")
        if self.n_max < 1:
            raise PreconditionViolated("n_max must be at least 1")
        if self.nu_cutoff <= 0 or self.tol <= 0 or self.max_panel <= 0:
            raise PreconditionViolated("nu_cutoff, tol and max_panel must be positive")
        if self.nodes < 2:
            raise PreconditionViolated("at least two nodes per panel are needed")
        object.__setattr__(self, "contour_shifts", tuple(float(c) for c in self.contour_shifts))

    @classmethod
    def default(cls, **overrides) -> "MBSpec":
        settings = get_settings()
        values = dict(n_max=settings.mb_n_max, nu_cutoff=settings.mb_nu_cutoff, tol=settings.mb_tol)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class MBParams:
    """Parameters z_m = (n_m/2 + x_m, -n_m/2 + x_m) and w_m = (ℓ_m/2 + y_m, -ℓ_m/2 + y_m)."""

    z_list: Tuple[FieldExponent, ...]
    w_list: Tuple[FieldExponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "z_list", tuple(self.z_list))
        object.__setattr__(self, "w_list", tuple(self.w_list))
        if len(self.z_list) != len(self.w_list):
            raise PreconditionViolated("z_list and w_list must have equal length")

    @classmethod
    def from_pairs(cls, zs: Sequence[Tuple[complex, complex]], ws: Sequence[Tuple[complex, complex]]) -> "MBParams":
        def pair(a, abar):
            return FieldExponent.from_pair(a, abar, allow_half=True)

        return cls(tuple(pair(*z) for z in zs), tuple(pair(*w) for w in ws))

    def continuous_sum(self) -> float:
        """Σ Re(x_m + y_m) over the continuous parts."""
        return sum(u.w.real for u in self.z_list + self.w_list)

    def check_convergence(self) -> None:
        """Raise ConvergenceDomainViolated unless Σ Re(x_m + y_m) < 1."""
        total = self.continuous_sum()
        if total >= 1.0:
            raise ConvergenceDomainViolated(f"Σ Re(z_m + w_m) = {total:.6g} is not below 1")

    def parity_compatible(self, sigma: int) -> bool:
        """Every z_m - u_k and u_k + w_m has an integer difference for u_k ∈ ℤ + σ/2."""
        return all((u.m2 - sigma) % 2 == 0 for u in self.z_list + self.w_list)


@dataclass(frozen=True)
class _Arg:
    """Γ argument const + Σ_k coeffs[k]·u_k, optionally with its components swapped."""

    const: FieldExponent
    coeffs: Tuple[int, ...]
    swapped: bool = False

    @property
    def single(self) -> Optional[Tuple[int, int]]:
        """(k, ±1) when the argument depends on one variable only."""
        used = [(k, c) for k, c in enumerate(self.coeffs) if c]
        return used[0] if len(used) == 1 else None


@dataclass(frozen=True)
class _Integrand:
    numerators: Tuple[_Arg, ...]
    denominators: Tuple[_Arg, ...] = ()
    zeta: Optional[complex] = None
    vandermonde: bool = False
    constant: complex = 1.0


@dataclass
class MBResult:
    """Extrapolated estimate, the windowed sums behind it and the contour offsets used."""

    estimate: IntegralEstimate
    levels: List[Tuple[int, float, complex]] = field(default_factory=list)
    offsets: Dict[Tuple[int, float], float] = field(default_factory=dict)


def _unit(N: int, k: int, sign: int) -> Tuple[int, ...]:
    return tuple(sign if j == k else 0 for j in range(N))


# ---------------------------------------------------------------------------
# contours


def _pole_bounds(integrand: _Integrand, k: int, n: float) -> Optional[Tuple[float, float]]:
    """Rightmost left pole and leftmost right pole of the ν_k integrand at label n.

    Returns None when some argument has a non-integer difference at this label.
    """
    lower, upper = -math.inf, math.inf
    for arg in integrand.numerators:
        single = arg.single
        if single is None or single[0] != k:
            continue
        s = single[1]
        m = arg.const.diff + s * n
        if abs(m - round(m)) > 1e-9:
            return None
        if s > 0:
            lower = max(lower, -arg.const.w.real - abs(m) / 2.0)
        else:
            upper = min(upper, arg.const.w.real + abs(m) / 2.0)
    return lower, upper


def _midpoint(lower: float, upper: float) -> float:
    if math.isfinite(lower) and math.isfinite(upper):
        return 0.5 * (lower + upper)
    if math.isfinite(upper):
        return upper - 0.5
    if math.isfinite(lower):
        return lower + 0.5
    return 0.0


def _offset(integrand: _Integrand, k: int, n: float, spec: MBSpec) -> Optional[Tuple[float, float]]:
    """Offset c_k of the ν_k contour at label n and its distance to the nearest pole.

    Returns None when the label is incompatible with the discrete parts.

    Raises:
        PoleOnContour: If the pole gap is closed or a fixed offset comes within the margin
    """
    margin = get_settings().pole_margin
    bounds = _pole_bounds(integrand, k, n)
    if bounds is None:
        return None
    lower, upper = bounds
    if spec.contour_shifts:
        c = spec.contour_shifts[k]
    else:
        if upper - lower <= 2.0 * margin:
            raise PoleOnContour(f"pole series of ν_{k + 1} overlap at n = {n}: gap ({lower:.6g}, {upper:.6g})")
        c = _midpoint(lower, upper)
    gap = min(c - lower, upper - c)
    if gap <= margin:
        raise PoleOnContour(f"ν_{k + 1} contour at {c:.6g} is within {margin:g} of a pole at n = {n}")
    return c, gap


def _pole_heights(integrand: _Integrand, k: int) -> List[float]:
    heights = {0.0}
    for arg in integrand.numerators:
        single = arg.single
        if single is not None and single[0] == k:
            heights.add(-single[1] * arg.const.w.imag)
    return sorted(heights)


def _tau_grid(integrand: _Integrand, k: int, spec: MBSpec, distance: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-τ_top, τ_top] graded geometrically towards the pole heights."""
    top = LEVELS[-1] * spec.nu_cutoff
    edges = {-top, top}
    for s in LEVELS:
        edges.update({-s * spec.nu_cutoff, s * spec.nu_cutoff, -0.5 * s * spec.nu_cutoff, 0.5 * s * spec.nu_cutoff})
    for t in _pole_heights(integrand, k):
        r = max(distance, 1e-6)
        while r < 2.0 * top:
            edges.update({t - r, t + r})
            r *= 2.0
        edges.add(t)
    width = spec.max_panel
    if integrand.zeta is not None:
        freq = 2.0 * abs(math.log(abs(integrand.zeta)))
        width = min(width, 2.0 / max(freq, 1.0))
    ordered = sorted(e for e in edges if -top <= e <= top)
    fine: List[float] = [ordered[0]]
    for hi in ordered[1:]:
        lo = fine[-1]
        if hi - lo <= 1e-12:
            continue
        pieces = max(1, math.ceil((hi - lo) / width))
        fine.extend(lo + (hi - lo) * np.arange(1, pieces + 1) / pieces)
    bounds = np.asarray(fine)
    x, w = gauss_legendre(spec.nodes)
    lo, hi = bounds[:-1, None], bounds[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


def _labels(sigma: int, top: int) -> np.ndarray:
    if sigma:
        return np.arange(-top - 1, top + 1) + 0.5
    return np.arange(-top, top + 1).astype(float)


# ---------------------------------------------------------------------------
# sum-integral


def _coupling(integrand: _Integrand, N: int) -> str:
    """How the variables couple: "none", "vandermonde" or "pair".

    "pair" is the denominator 1/Γ[u_1-u_2]Γ[u_2-u_1] = -(-1)^{n_1-n_2}(u_1-u_2)(ū_1-ū_2);
    together with the Vandermonde factor it is the only coupling that keeps the
    sum-integral a finite sum of products of one-variable moments.

    Raises:
        PreconditionViolated: For numerators in several variables or any other coupling
    """
    if N > 2:
        raise PreconditionViolated(f"sum-integrals over {N} variables are not supported")
    if any(arg.single is None for arg in integrand.numerators):
        raise PreconditionViolated("every numerator Γ must depend on a single variable")
    if not integrand.denominators:
        return "vandermonde" if integrand.vandermonde and N == 2 else "none"
    coeffs = sorted(arg.coeffs for arg in integrand.denominators)
    pair = (
        N == 2
        and not integrand.vandermonde
        and coeffs == [(-1, 1), (1, -1)]
        and all(abs(arg.const.a) + abs(arg.const.abar) == 0 and not arg.swapped for arg in integrand.denominators)
    )
    if not pair:
        raise PreconditionViolated("denominators must be the pair Γ[u_1-u_2]Γ[u_2-u_1]")
    return "pair"


def _label_moments(
    integrand: _Integrand,
    k: int,
    n: float,
    c: float,
    grid: Tuple[np.ndarray, np.ndarray],
    spec: MBSpec,
    phase: complex,
) -> Tuple[np.ndarray, int]:
    """Windowed Σ_τ f_k·a^p·ā^q at one label, shape (window levels, 2, 2)."""
    raise_if_cancelled()
    tau, weight = grid
    a = n / 2.0 + c + 1j * tau
    abar = -n / 2.0 + c + 1j * tau

    log_value = np.zeros_like(a)
    order = np.zeros(a.shape, dtype=int)
    for arg in integrand.numerators:
        j, sign = arg.single
        if j != k:
            continue
        x = arg.const.a + sign * a
        xbar = arg.const.abar + sign * abar
        if arg.swapped:
            x, xbar = xbar, x
        value, o = log_cgamma_array(x, xbar)
        log_value = log_value + value
        order = order + o
    if np.any(order > 0):
        raise PoleOnContour(f"integrand is singular on the ν_{k + 1} contour at n = {n}")
    if integrand.zeta is not None:
        log_zeta = cmath.log(integrand.zeta)
        log_value = log_value + a * log_zeta + abar * log_zeta.conjugate()
    values = np.where(order == 0, np.exp(np.where(order == 0, log_value, 0.0)), 0.0) * weight * phase

    moments = np.empty((len(LEVELS), 2, 2), dtype=complex)
    for i, s in enumerate(LEVELS):
        win = smooth_step(2.0 * abs(n) / (s * spec.n_max) - 1.0) * smooth_step(2.0 * np.abs(tau) / (s * spec.nu_cutoff) - 1.0)
        part = values * win
        moments[i, 0, 0] = part.sum()
        moments[i, 1, 0] = (part * a).sum()
        moments[i, 0, 1] = (part * abar).sum()
        moments[i, 1, 1] = (part * a * abar).sum()
    return moments, values.size


def _variable(
    integrand: _Integrand, k: int, spec: MBSpec, signed: bool, pool: ThreadPoolExecutor
) -> Tuple[np.ndarray, Dict[float, float], int]:
    """Moments of variable k summed over its labels, with the offset used at each label."""
    offsets: Dict[float, float] = {}
    distance = math.inf
    for n in _labels(spec.sigma, LEVELS[-1] * spec.n_max).tolist():
        found = _offset(integrand, k, n, spec)
        if found is None:
            continue
        offsets[n], gap = found
        distance = min(distance, gap)
    if not offsets:
        return np.zeros((len(LEVELS), 2, 2), dtype=complex), offsets, 0

    grid = _tau_grid(integrand, k, spec, distance)
    direction = 1.0 if k == 0 else -1.0

    def run(n: float) -> Tuple[np.ndarray, int]:
        phase = cmath.exp(1j * math.pi * direction * n) if signed else 1.0
        return _label_moments(integrand, k, n, offsets[n], grid, spec, phase)

    parts = list(pool.map(run, offsets))
    moments = np.sum(np.stack([p[0] for p in parts]), axis=0)
    return moments, offsets, sum(p[1] for p in parts)


def _aitken(sums: Sequence[complex], evals: int, tol: float) -> IntegralEstimate:
    """Δ² extrapolation of three windowed sums; falls back to the largest window."""
    s1, s2, s4 = sums
    d1, d2 = s2 - s1, s4 - s2
    scale = max(1.0, abs(s4))
    if abs(d2) <= 1e-14 * scale:
        value, err = s4, abs(d2)
    elif abs(d2) >= abs(d1) or abs(d2 - d1) <= 1e-300:
        value, err = s4, max(abs(d1), abs(d2))
    else:
        value = s4 - d2 * d2 / (d2 - d1)
        err = abs(value - s4) * abs(d2 / d1)
    return IntegralEstimate(value=value, err=err, evals=evals, converged=err <= tol * max(1.0, abs(value)))


def mb_evaluate(integrand: _Integrand, N: int, spec: MBSpec) -> MBResult:
    """Truncated Σ_n ∫ dτ of an integrand over N ≤ 2 variables with window extrapolation.

    The windows are products over the variables and the coupling between them is a
    polynomial of degree one in each u_k and ū_k, so the sum-integral is assembled from
    windowed one-variable moments Σ_n ∫ dτ f_k·u_k^p·ū_k^q with p, q ∈ {0, 1}.

    Raises:
        PoleOnContour: If some contour cannot separate its pole series
        PreconditionViolated: For an unsupported coupling between the variables
    """
    if spec.contour_shifts and len(spec.contour_shifts) != N:
        raise PreconditionViolated(f"{len(spec.contour_shifts)} contour shifts for {N} variables")
    coupling = _coupling(integrand, N)
    with ThreadPoolExecutor(max_workers=get_settings().threads) as pool:
        found = [_variable(integrand, k, spec, coupling == "pair", pool) for k in range(N)]

    offsets = {(k, n): c for k, (_, table, _) in enumerate(found) for n, c in table.items()}
    evals = sum(f[2] for f in found)
    if any(not f[1] for f in found):
        logger.warning("discrete parts are incompatible with sigma = %d; every term vanishes", spec.sigma)
        return MBResult(IntegralEstimate(0j, 0.0, 0, True), [(s * spec.n_max, s * spec.nu_cutoff, 0j) for s in LEVELS])
    logger.debug("contour offsets at label 0: %s", [f[1].get(spec.sigma / 2.0) for f in found])

    if N == 1:
        sums = found[0][0][:, 0, 0]
    elif coupling == "none":
        sums = found[0][0][:, 0, 0] * found[1][0][:, 0, 0]
    else:
        A, B = found[0][0], found[1][0]
        sums = -(A[:, 1, 1] * B[:, 0, 0] - A[:, 1, 0] * B[:, 0, 1] - A[:, 0, 1] * B[:, 1, 0] + A[:, 0, 0] * B[:, 1, 1])
    sums = [complex(v) * integrand.constant for v in sums]
    estimate = _aitken(sums, evals, spec.tol)
    logger.info(
        "Mellin-Barnes sum with %s coupling over %d points: %.12g%+.12gj (err %.2g)",
        coupling, evals, estimate.value.real, estimate.value.imag, estimate.err,
    )
    levels = [(s * spec.n_max, s * spec.nu_cutoff, v) for s, v in zip(LEVELS, sums)]
    return MBResult(estimate, levels, offsets)


# ---------------------------------------------------------------------------
# Gustafson's integrals


def _zeta_power(zeta: complex, u: FieldExponent) -> complex:
    """[ζ]^u = ζ^u ζ̄^ū on the principal branch."""
    log_zeta = cmath.log(zeta)
    return cmath.exp(u.a * log_zeta + u.abar * log_zeta.conjugate())


def _check_zeta(zeta: complex) -> complex:
    zeta = complex(zeta)
    margin = get_settings().cut_margin
    if abs(zeta) <= margin or abs(cmath.phase(zeta)) >= math.pi - margin:
        raise BranchCutHit(f"ζ = {zeta} lies on the cut (-∞, 0]")
    return zeta


def _check_size(N: int, params: MBParams, count: int) -> None:
    if N not in (1, 2):
        raise PreconditionViolated(f"N = {N}: only N = 1, 2 are evaluated")
    if len(params.z_list) != count:
        raise PreconditionViolated(f"expected {count} parameters z_m, got {len(params.z_list)}")


def _gustafson_args(N: int, params: MBParams) -> Tuple[Tuple[_Arg, ...], Tuple[_Arg, ...]]:
    numerators = []
    for z, w in zip(params.z_list, params.w_list):
        for k in range(N):
            numerators.append(_Arg(z, _unit(N, k, -1)))
            numerators.append(_Arg(w, _unit(N, k, 1)))
    zero = FieldExponent.scalar(0)
    denominators = []
    for m, j in itertools.combinations(range(N), 2):
        diff = tuple(int(i == m) - int(i == j) for i in range(N))
        denominators.append(_Arg(zero, diff))
        denominators.append(_Arg(zero, tuple(-c for c in diff)))
    return tuple(numerators), tuple(denominators)


def gustafson_first_rhs(N: int, params: MBParams) -> complex:
    """N! ∏_{k,j} Γ(z_k + w_j) / Γ(Σ_k (z_k + w_k))."""
    numerators = [z + w for z in params.z_list for w in params.w_list]
    total = sum(params.z_list, FieldExponent.scalar(0)) + sum(params.w_list, FieldExponent.scalar(0))
    return math.factorial(N) * gamma_ratio(numerators, [total])


def _gustafson_integrand(kind: str, N: int, params: MBParams, zeta: complex) -> Tuple[_Integrand, complex]:
    if kind == "first":
        _check_size(N, params, N + 1)
        params.check_convergence()
        numerators, denominators = _gustafson_args(N, params)
        return _Integrand(numerators, denominators, constant=(2.0 * math.pi) ** -N), gustafson_first_rhs(N, params)
    if kind == "second":
        _check_size(N, params, N)
        zeta = _check_zeta(zeta)
        numerators, denominators = _gustafson_args(N, params)
        integrand = _Integrand(
            numerators, denominators, zeta=zeta, constant=(2.0 * math.pi) ** -N / math.factorial(N)
        )
        return integrand, gustafson_second_rhs(N, params, zeta)
    raise PreconditionViolated(f"unknown integral {kind!r}")


def gustafson_evaluate(
    kind: str, N: int, params: MBParams, spec: Optional[MBSpec] = None, zeta: complex = 1.0
) -> Tuple[MBResult, complex]:
    """Windowed sums and extrapolated left-hand side of a Gustafson integral, with its closed form.

    Args:
        kind: "first" or "second"
        N: Number of integration variables, 1 or 2
        params: N + 1 parameters for the first integral, N for the second
        spec: Truncation; settings defaults when omitted
        zeta: Argument of the second integral

    Raises:
        ConvergenceDomainViolated: Outside Σ Re(z_m + w_m) < 1 for the first integral
        BranchCutHit: If ζ lies on the negative real axis
        PoleOnContour: If a contour cannot separate its pole series
    """
    integrand, rhs = _gustafson_integrand(kind, N, params, zeta)
    return mb_evaluate(integrand, N, spec or MBSpec.default()), rhs


def gustafson_first(N: int, params: MBParams, spec: Optional[MBSpec] = None) -> Tuple[IntegralEstimate, complex]:
    """Truncated left-hand side of the first Gustafson integral and its closed form.

    Args:
        N: Number of integration variables, 1 or 2
        params: N + 1 parameters z_m and w_m
        spec: Truncation; settings defaults when omitted

    Returns:
        Tuple (lhs estimate, rhs)

    Raises:
        ConvergenceDomainViolated: Outside Σ Re(z_m + w_m) < 1
        PoleOnContour: If a contour cannot separate its pole series
        NotConverged: If the extrapolation misses spec.tol
    """
    result, rhs = gustafson_evaluate("first", N, params, spec)
    return result.estimate.require(), rhs


def gustafson_second_rhs(N: int, params: MBParams, zeta: complex) -> complex:
    """[ζ]^Z / [1 + ζ]^{Z + W} ∏_{k,j} Γ(z_k + w_j)."""
    zeta = _check_zeta(zeta)
    Z = sum(params.z_list, FieldExponent.scalar(0))
    W = sum(params.w_list, FieldExponent.scalar(0))
    numerators = [z + w for z in params.z_list for w in params.w_list]
    return _zeta_power(zeta, Z) / _zeta_power(1.0 + zeta, Z + W) * gamma_ratio(numerators)


def gustafson_second(
    N: int, params: MBParams, zeta: complex, spec: Optional[MBSpec] = None
) -> Tuple[IntegralEstimate, complex]:
    """Truncated left-hand side of the second Gustafson integral and its closed form.

    Raises:
        BranchCutHit: If ζ lies on the negative real axis
        PoleOnContour: If a contour cannot separate its pole series
        NotConverged: If the extrapolation misses spec.tol
    """
    result, rhs = gustafson_evaluate("second", N, params, spec, zeta)
    return result.estimate.require(), rhs


def levels_frame(result: MBResult, rhs: complex) -> pd.DataFrame:
    """One row per window and one for the extrapolated value, each against the closed form."""
    rows = [
        dict(window=f"{s}x", n_max=n_max, nu_cutoff=cutoff, lhs=value, abs_err=abs(value - rhs))
        for s, (n_max, cutoff, value) in zip(LEVELS, result.levels)
    ]
    value = result.estimate.value
    rows.append(dict(window="aitken", n_max=None, nu_cutoff=None, lhs=value, abs_err=abs(value - rhs)))
    table = pd.DataFrame(rows)
    table["rhs"] = rhs
    return table


def convergence_table(
    kind: str, N: int, params: MBParams, spec: Optional[MBSpec] = None, zeta: complex = 1.0
) -> pd.DataFrame:
    """Windowed sums of a Gustafson integral against its closed form, one row per window.

    Args:
        kind: "first" or "second"
    """
    return levels_frame(*gustafson_evaluate(kind, N, params, spec, zeta))


# ---------------------------------------------------------------------------
# J_ω and its sign bookkeeping


def reflection_sign_exponent(ms: Sequence[float]) -> int:
    """Σ_{k<j} [i(y_k - y_j)] for discrete parts m_k, using [i y] = -m."""
    return int(round(sum(mj - mk for mk, mj in itertools.combinations(ms, 2))))


def swap_sign_exponent(ns: Sequence[float], ms: Sequence[float]) -> int:
    """Σ_j Σ_k [i(y_j - x_k)] for discrete parts n_k of x and m_j of y."""
    return int(round(sum(n - m for m in ms for n in ns)))


def x_sign_exponent(ns: Sequence[float]) -> int:
    """Σ_{k<j} [i(x_k - x_j)]."""
    return reflection_sign_exponent(ns)


def sign_identity_holds(ns: Sequence[float], ms: Sequence[float]) -> bool:
    """Parity of the y-dependent sign exponents equals that of the x-only one."""
    total = reflection_sign_exponent(ms) + swap_sign_exponent(ns, ms) - x_sign_exponent(ns)
    return total % 2 == 0


def reflection_identity(ys: Sequence[SeparatedPoint]) -> Tuple[complex, complex]:
    """∏_{j≠k} 1/Γ[i(y_k - y_j)] against μ(y)·(-1)^{Σ_{k<j}[i(y_k - y_j)]}."""
    denominators = [yk.ix() - yj.ix() for yk, yj in itertools.permutations(ys, 2)]
    lhs = gamma_ratio([], denominators)
    rhs = measure_mu(ys) * (-1) ** (reflection_sign_exponent([y.n for y in ys]) % 2)
    return lhs, rhs


def swap_identity(xs: Sequence[SeparatedPoint], ys: Sequence[SeparatedPoint]) -> Tuple[complex, complex]:
    """∏ Γ[i(x̄_k - ȳ_j)] against ∏ Γ[i(x_k - y_j)]·(-1)^{ΣΣ[i(y_j - x_k)]}."""
    diffs = [x.ix() - y.ix() for y in ys for x in xs]
    lhs = gamma_ratio([d.swap() for d in diffs])
    sign = (-1) ** (swap_sign_exponent([x.n for x in xs], [y.n for y in ys]) % 2)
    return lhs, gamma_ratio(diffs) * sign


def _as_exponent(Z: Union[FieldExponent, complex]) -> FieldExponent:
    return Z if isinstance(Z, FieldExponent) else FieldExponent.scalar(Z)


def j_omega_params(
    xs: Sequence[SeparatedPoint], x_prime: Sequence[SeparatedPoint], Z: Union[FieldExponent, complex], omega: float
) -> MBParams:
    """Parameters of the second Gustafson integral for J_ω after u_k → iy_k.

    z = (ix_1, ..., ix_{N-1}, Z - ω) and w = (-ix'_1, ..., -ix'_{N-1}, Z - ω).
    """
    if len(xs) != len(x_prime):
        raise PreconditionViolated("x and x' must have equal length")
    shifted = _as_exponent(Z) - omega
    return MBParams(
        tuple(x.ix() for x in xs) + (shifted,),
        tuple(-x.ix() for x in x_prime) + (shifted,),
    )


def j_omega_closed(
    xs: Sequence[SeparatedPoint],
    x_prime: Sequence[SeparatedPoint],
    Z: Union[FieldExponent, complex],
    omega: float,
    zeta: complex,
) -> complex:
    """Closed form of J_ω(Z, ζ, x, x')."""
    zeta = _check_zeta(zeta)
    Z = _as_exponent(Z)
    shifted = Z - omega
    zero = FieldExponent.scalar(0)
    ix = sum((x.ix() for x in xs), zero)
    ix_prime = sum((x.ix() for x in x_prime), zero)
    sign = (-1) ** (x_sign_exponent([x.n for x in xs]) % 2)
    power = _zeta_power(zeta, shifted + ix) / _zeta_power(1.0 + zeta, shifted + shifted + ix - ix_prime)
    numerators = [shifted + shifted]
    numerators += [shifted + x.ix() for x in xs] + [shifted - x.ix() for x in x_prime]
    numerators += [x.ix() - xp.ix() for x in xs for xp in x_prime]
    N = len(xs) + 1
    return math.pi * sign * power * gamma_ratio(numerators, [Z] * (2 * N))


def j_omega_from_second(
    xs: Sequence[SeparatedPoint],
    x_prime: Sequence[SeparatedPoint],
    Z: Union[FieldExponent, complex],
    omega: float,
    zeta: complex,
) -> complex:
    """J_ω through the closed form of the second Gustafson integral."""
    Z = _as_exponent(Z)
    N = len(xs) + 1
    params = j_omega_params(xs, x_prime, Z, omega)
    sign = (-1) ** (x_sign_exponent([x.n for x in xs]) % 2)
    return math.pi * sign * gustafson_second_rhs(N, params, zeta) * gamma_ratio([], [Z] * (2 * N))


def j_omega_evaluate(
    xs: Sequence[SeparatedPoint],
    x_prime: Sequence[SeparatedPoint],
    Z: Union[FieldExponent, complex],
    omega: float,
    zeta: complex,
    spec: Optional[MBSpec] = None,
) -> Tuple[MBResult, complex]:
    """Windowed sums of J_ω over dμ^B_N(y) and its closed form.

    The y integral runs over u_j = iy_j, so the discrete labels of u are -m_j and
    dν_y = dτ along each contour.

    Raises:
        BranchCutHit: If ζ lies on the negative real axis
        PoleOnContour: If a contour cannot separate its pole series
    """
    spec = spec or MBSpec.default()
    N = len(xs) + 1
    if N not in (1, 2):
        raise PreconditionViolated(f"N = {N}: only N = 1, 2 are evaluated")
    zeta = _check_zeta(zeta)
    Z = _as_exponent(Z)
    params = j_omega_params(xs, x_prime, Z, omega)
    if not params.parity_compatible(spec.sigma):
        raise PreconditionViolated(f"discrete parts are incompatible with sigma = {spec.sigma}")
    rhs = j_omega_closed(xs, x_prime, Z, omega, zeta)

    shifted = Z - omega
    numerators = []
    for j in range(N):
        numerators += [_Arg(shifted, _unit(N, j, -1)), _Arg(shifted, _unit(N, j, 1))]
        numerators += [_Arg(x.ix(), _unit(N, j, -1), swapped=True) for x in xs]
        numerators += [_Arg(-x.ix(), _unit(N, j, 1)) for x in x_prime]
    constant = math.pi**2 * sov_constants(N) * gamma_ratio([], [Z] * (2 * N))
    integrand = _Integrand(tuple(numerators), zeta=zeta, vandermonde=True, constant=constant)
    return mb_evaluate(integrand, N, spec), rhs


def j_omega_check(
    xs: Sequence[SeparatedPoint],
    x_prime: Sequence[SeparatedPoint],
    Z: Union[FieldExponent, complex],
    omega: float,
    zeta: complex,
    spec: Optional[MBSpec] = None,
) -> Tuple[IntegralEstimate, complex]:
    """Direct truncated evaluation of J_ω against its closed form.

    Raises:
        BranchCutHit: If ζ lies on the negative real axis
        PoleOnContour: If a contour cannot separate its pole series
        NotConverged: If the extrapolation misses spec.tol
    """
    result, rhs = j_omega_evaluate(xs, x_prime, Z, omega, zeta, spec)
    return result.estimate.require(), rhs
