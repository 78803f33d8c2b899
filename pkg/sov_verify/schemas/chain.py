from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from sov_verify.core.config import get_settings


class SpinSpec(BaseModel):
    """Representation label of one site: n = n2/2 and ρ."""

    n2: int = 0
    rho: float = 0.0

    @property
    def n(self) -> float:
        return self.n2 / 2.0

    @property
    def s(self) -> complex:
        return (1.0 + self.n) / 2.0 + 1j * self.rho

    @property
    def sbar(self) -> complex:
        return (1.0 - self.n) / 2.0 + 1j * self.rho


class ImpuritySpec(BaseModel):
    """Impurity ξ = re + i·im; its partner is ξ̄ = conj(ξ), so 4·im must be an integer."""

    re: float = 0.0
    im: float = 0.0

    @property
    def xi(self) -> complex:
        return complex(self.re, self.im)

    @model_validator(mode="after")
    def check_lattice(self) -> "ImpuritySpec":
        if abs(4.0 * self.im - round(4.0 * self.im)) > 1e-9:
            raise ValueError("i(ξ - ξ̄) = -2·im must be a half-integer")
        return self


class ChainSpec(BaseModel):
    """Chain length, per-site spins and impurities, and the regulator ε."""

    N: int = Field(ge=1)
    spins: List[SpinSpec]
    impurities: Optional[List[ImpuritySpec]] = None
    epsilon: float = Field(default=0.0, ge=0.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_lengths(self) -> "ChainSpec":
        if len(self.spins) != self.N:
            raise ValueError(f"expected {self.N} spins, got {len(self.spins)}")
        if self.impurities is not None and len(self.impurities) != self.N:
            raise ValueError(f"expected {self.N} impurities, got {len(self.impurities)}")
        return self

    @property
    def xis(self) -> List[complex]:
        if self.impurities is None:
            return [0j] * self.N
        return [imp.xi for imp in self.impurities]

    def with_epsilon(self, epsilon: Optional[float] = None) -> "ChainSpec":
        """Copy with regulator ε; the configured default when omitted."""
        if epsilon is None:
            epsilon = get_settings().epsilon_default
        return self.model_copy(update={"epsilon": epsilon})


class SeparatedSpec(BaseModel):
    n2: int = 0
    nu_re: float = 0.0
    nu_im: float = 0.0


class PlaneSpec(BaseModel):
    re: float = 0.0
    im: float = 0.0

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


class PointSpec(BaseModel):
    """Evaluation point for `sov-verify eval`."""

    p_re: float = 1.0
    p_im: float = 0.0
    separated: List[SeparatedSpec] = Field(default_factory=list)
    z: List[PlaneSpec] = Field(default_factory=list)
    momenta: List[PlaneSpec] = Field(default_factory=list)

    @property
    def p(self) -> complex:
        return complex(self.p_re, self.p_im)
