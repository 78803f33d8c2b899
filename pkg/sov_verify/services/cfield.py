"""Complex-field Gamma function and the exponent pairs it is evaluated on.

An exponent is a pair (a, ā) with integer (or, for chain parameters, half-integer)
difference. It is stored as its continuous part w = (a + ā)/2 together with twice the
difference, so that a = w + m2/4 and ā = w - m2/4 are reconstructed exactly.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import gammaln

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import NonIntegerDifference, PoleEncountered

logger = logging.getLogger(__name__)

# Lanczos approximation, g = 7, n = 9
LANCZOS_G = 7.0
LANCZOS_COEFFS = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)

POLE_TOL = 1e-12
Scalar = Union[int, float, complex]


@dataclass(frozen=True)
class FieldExponent:
    """Exponent pair (a, ā) of the complex field.

    Attributes:
        w: Continuous part (a + ā)/2
        m2: Twice the difference a - ā
    """

    w: complex
    m2: int

    @classmethod
    def from_pair(
        cls, a: Scalar, abar: Scalar, tol: float | None = None, allow_half: bool = False
    ) -> "FieldExponent":
        """Validate a pair and snap its difference onto the (half-)integer lattice.

        Raises:
            NonIntegerDifference: If a - ā is not an integer (or half-integer when allowed)
        """
        tol = get_settings().int_tol if tol is None else tol
        a, abar = complex(a), complex(abar)
        diff = a - abar
        m2 = int(round(2.0 * diff.real))
        if abs(2.0 * diff - m2) > 2.0 * tol:
            raise NonIntegerDifference(f"a - abar = {diff} is not on the half-integer lattice")
        if m2 % 2 and not allow_half:
            raise NonIntegerDifference(f"a - abar = {diff} is not an integer")
        return cls(w=(a + abar) / 2.0, m2=m2)

    @classmethod
    def scalar(cls, c: Scalar) -> "FieldExponent":
        """The pair (c, c)."""
        return cls(w=complex(c), m2=0)

    @property
    def a(self) -> complex:
        return self.w + self.m2 / 4.0

    @property
    def abar(self) -> complex:
        return self.w - self.m2 / 4.0

    @property
    def is_integral(self) -> bool:
        return self.m2 % 2 == 0

    @property
    def m(self) -> int:
        """Integer difference a - ā."""
        if self.m2 % 2:
            raise NonIntegerDifference(f"difference {self.m2 / 2} is half-integer")
        return self.m2 // 2

    @property
    def diff(self) -> float:
        return self.m2 / 2.0

    def __add__(self, other: Union["FieldExponent", Scalar]) -> "FieldExponent":
        if isinstance(other, FieldExponent):
            return FieldExponent(self.w + other.w, self.m2 + other.m2)
        return FieldExponent(self.w + complex(other), self.m2)

    __radd__ = __add__

    def __sub__(self, other: Union["FieldExponent", Scalar]) -> "FieldExponent":
        if isinstance(other, FieldExponent):
            return FieldExponent(self.w - other.w, self.m2 - other.m2)
        return FieldExponent(self.w - complex(other), self.m2)

    def __rsub__(self, other: Scalar) -> "FieldExponent":
        return FieldExponent(complex(other) - self.w, -self.m2)

    def __neg__(self) -> "FieldExponent":
        return FieldExponent(-self.w, -self.m2)

    def reflect(self) -> "FieldExponent":
        """(1 - a, 1 - ā)."""
        return FieldExponent(1.0 - self.w, -self.m2)

    def swap(self) -> "FieldExponent":
        """(ā, a)."""
        return FieldExponent(self.w, -self.m2)

    def conj(self) -> "FieldExponent":
        """(a*, ā*)."""
        return FieldExponent(self.w.conjugate(), self.m2)

    def star(self) -> "FieldExponent":
        """Index of the complex-conjugated propagator: (ā*, a*)."""
        return FieldExponent(self.w.conjugate(), -self.m2)

    def is_zero(self, tol: float = 1e-12) -> bool:
        return self.m2 == 0 and abs(self.w) <= tol

    def key(self, ndigits: int = 10) -> tuple:
        """Rounded sort key (m, Re w, Im w)."""
        return (
            self.m2,
            round(self.w.real, ndigits) + 0.0,
            round(self.w.imag, ndigits) + 0.0,
        )

    def __repr__(self) -> str:
        return f"FieldExponent(a={self.a:.6g}, abar={self.abar:.6g})"


@dataclass(frozen=True)
class GammaValue:
    """Value of Γ[u] with in-band pole and zero bookkeeping.

    Poles carry `value = inf`; zeros carry `value = 0` and `zero_order = 1`.
    """

    value: complex
    is_pole: bool = False
    pole_order: int = 0
    zero_order: int = 0

    @property
    def is_finite(self) -> bool:
        return not self.is_pole

    def __complex__(self) -> complex:
        return self.value


def make_exponent(a: Scalar, abar: Scalar) -> FieldExponent:
    """Validated exponent with integer difference."""
    return FieldExponent.from_pair(a, abar)


def exponent_reflect(u: FieldExponent) -> FieldExponent:
    return u.reflect()


def sign_factor(u: FieldExponent) -> int:
    """(-1)^{[u]} with [u] = a - ā."""
    return -1 if u.m % 2 else 1


# ---------------------------------------------------------------------------
# log-Gamma


def _log_gamma_right(z: np.ndarray) -> np.ndarray:
    z = z - 1.0
    x = np.full_like(z, LANCZOS_COEFFS[0])
    for i in range(1, len(LANCZOS_COEFFS)):
        x = x + LANCZOS_COEFFS[i] / (z + i)
    t = z + LANCZOS_G + 0.5
    return HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(x)


def _log_sin_pi(z: np.ndarray) -> np.ndarray:
    """log sin(πz), stable for large |Im z|; imaginary part defined modulo 2π."""
    upper = np.where(z.imag >= 0, z, np.conj(z))
    val = -1j * np.pi * upper + np.log1p(-np.exp(2j * np.pi * upper)) + np.log(0.5j)
    return np.where(z.imag >= 0, val, np.conj(val))


def log_gamma(z: ArrayLike) -> np.ndarray:
    """Complex log Γ(z) via Lanczos with reflection for Re z < 1/2.

    The imaginary part is only defined modulo 2π; callers exponentiate. Poles
    must be screened out by the caller.
    """
    z = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(z).ravel()
    left = flat.real < 0.5
    out = np.empty_like(flat)
    if np.any(~left):
        out[~left] = _log_gamma_right(flat[~left])
    if np.any(left):
        zl = flat[left]
        out[left] = LOG_PI - _log_sin_pi(zl) - _log_gamma_right(1.0 - zl)
    return out.reshape(z.shape)


def _nonpositive_integer(z: complex) -> int | None:
    """Return k if z == -k for an integer k >= 0, else None."""
    k = round(z.real)
    if k <= 0 and abs(z - k) <= POLE_TOL * max(1.0, abs(z)):
        return -int(k)
    return None


def _require_integral(u: FieldExponent) -> None:
    if not u.is_integral:
        raise NonIntegerDifference(f"Γ needs an integer difference, got {u.diff}")


def _lgamma_scalar(z: complex) -> complex:
    return complex(log_gamma(np.array([z]))[0])


def _laurent(u: FieldExponent) -> tuple[int, complex]:
    """Order and leading coefficient of Γ[u + δ] as δ → 0 (δ shifts both components).

    Returns (order, coefficient) with Γ[u + δ] ≈ coefficient · δ^{-order}.
    """
    a, abar = u.a, u.abar
    k = _nonpositive_integer(a)
    j = _nonpositive_integer(1.0 - abar)
    if k is None and j is None:
        return 0, cmath.exp(_lgamma_scalar(a) - _lgamma_scalar(1.0 - abar))
    if k is not None and j is None:
        coeff = (-1) ** k / math.factorial(k) * cmath.exp(-_lgamma_scalar(1.0 - abar))
        return 1, coeff
    if k is None and j is not None:
        coeff = cmath.exp(_lgamma_scalar(a)) * (-1) ** (j + 1) * math.factorial(j)
        return -1, coeff
    # Γ(-k + δ)/Γ(-j - δ) → (-1)^m j!/k!
    return 0, (-1) ** (u.m % 2) * math.exp(math.lgamma(j + 1) - math.lgamma(k + 1))


def cgamma(u: FieldExponent) -> GammaValue:
    """Γ[u, ū] = Γ(u)/Γ(1 - ū).

    When both Γ(u) and Γ(1 - ū) sit on poles, the finite limit along a common
    shift of the continuous part is returned.
    """
    _require_integral(u)
    order, coeff = _laurent(u)
    if order > 0:
        return GammaValue(value=complex(math.inf), is_pole=True, pole_order=order)
    if order < 0:
        return GammaValue(value=0j, zero_order=-order)
    return GammaValue(value=coeff)


def afactor(u: FieldExponent) -> GammaValue:
    """a(u) = 1/Γ[u] = Γ(1 - ū)/Γ(u)."""
    g = cgamma(u)
    if g.is_pole:
        return GammaValue(value=0j, zero_order=g.pole_order)
    if g.zero_order:
        return GammaValue(value=complex(math.inf), is_pole=True, pole_order=g.zero_order)
    return GammaValue(value=1.0 / g.value)


def log_cgamma(u: FieldExponent) -> complex:
    """log Γ[u] for a regular argument.

    Raises:
        PoleEncountered: At poles and zeros of Γ[u]
    """
    _require_integral(u)
    if _nonpositive_integer(u.a) is not None or _nonpositive_integer(1.0 - u.abar) is not None:
        raise PoleEncountered(f"Γ[{u.a}, {u.abar}] is singular or vanishes")
    return _lgamma_scalar(u.a) - _lgamma_scalar(1.0 - u.abar)


def gamma_ratio(
    numerators: Iterable[FieldExponent], denominators: Iterable[FieldExponent] = ()
) -> complex:
    """Γ[a_1, ..., a_n / b_1, ..., b_m] with pole/zero cancellation by order counting.

    Every argument is regulated by the same shift of its continuous part.

    Raises:
        PoleEncountered: If the net order of the ratio is a pole
    """
    order, log_value = 0, 0j
    for power, factors in ((1, numerators), (-1, denominators)):
        for u in factors:
            _require_integral(u)
            o, c = _laurent(u)
            if c == 0:
                return 0j
            order += power * o
            log_value += power * cmath.log(c)
    if order > 0:
        raise PoleEncountered(f"ratio has a pole of order {order}")
    if order < 0:
        return 0j
    return cmath.exp(log_value)


def log_cgamma_array(a: ArrayLike, abar: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized log Γ[a, ā] for quadrature integrands.

    Returns:
        Tuple (log value, order) where order > 0 marks poles and order < 0 zeros; the
        log value is meaningful only where order == 0
    """
    a = np.asarray(a, dtype=complex)
    abar = np.asarray(abar, dtype=complex)
    b = 1.0 - abar

    def at_pole(z: np.ndarray) -> np.ndarray:
        k = np.round(z.real)
        return (k <= 0) & (np.abs(z - k) <= POLE_TOL * np.maximum(1.0, np.abs(z)))

    num_pole = at_pole(a)
    den_pole = at_pole(b)
    order = num_pole.astype(int) - den_pole.astype(int)
    safe_a = np.where(num_pole, 0.5, a)
    safe_b = np.where(den_pole, 0.5, b)
    value = log_gamma(safe_a) - log_gamma(safe_b)

    both = num_pole & den_pole
    if np.any(both):
        # Γ(-k + δ)/Γ(-j - δ) → (-1)^m j!/k!
        k = -np.round(a.real)
        j = -np.round(b.real)
        m = np.round((a - abar).real)
        limit = (
            1j * np.pi * np.mod(m, 2)
            + gammaln(np.maximum(j, 0) + 1)
            - gammaln(np.maximum(k, 0) + 1)
        )
        value = np.where(both, limit, value)
    return value, order
