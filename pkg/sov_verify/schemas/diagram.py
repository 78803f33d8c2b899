from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ExponentModel(BaseModel):
    """Exponent pair stored as its difference m = a - ā and continuous part w."""

    m: float = 0.0
    w_re: float = 0.0
    w_im: float = 0.0


class ExternalModel(BaseModel):
    label: str
    z_re: Optional[float] = None
    z_im: Optional[float] = None
    momentum: Optional[str] = None


class EdgeModel(ExponentModel):
    model_config = ConfigDict(populate_by_name=True)

    source: str = Field(alias="from")
    to: str


class WaveModel(BaseModel):
    """Plane wave e^{i(Pz + P̄z̄)} attached to a vertex; P is a combination of labels."""

    vertex: str
    momentum: Dict[str, int]


class GammaFactorModel(ExponentModel):
    mult: int


class MomentumPowerModel(ExponentModel):
    combo: Dict[str, int]


class RatioPowerModel(ExponentModel):
    num: Dict[str, int]
    den: Dict[str, int]


class ClosedFormModel(BaseModel):
    pi_power: int = 0
    phase_quarter_turns: int = 0
    sign: int = 1
    gamma_factors: List[GammaFactorModel] = Field(default_factory=list)
    momentum_powers: List[MomentumPowerModel] = Field(default_factory=list)
    ratio_powers: List[RatioPowerModel] = Field(default_factory=list)
    deltas: List[Dict[str, int]] = Field(default_factory=list)
    waves: List[WaveModel] = Field(default_factory=list)


class DiagramModel(BaseModel):
    external: List[ExternalModel]
    internal: List[str] = Field(default_factory=list)
    edges: List[EdgeModel] = Field(default_factory=list)
    waves: List[WaveModel] = Field(default_factory=list)
    prefactor: ClosedFormModel = Field(default_factory=ClosedFormModel)
