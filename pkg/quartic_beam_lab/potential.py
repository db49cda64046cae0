"""Decaying test potentials V = c * V0 and their sign/amplitude split."""
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
from loguru import logger
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator

from .errors import DegeneratePotentialError, InvalidArgumentError
from .model import Classification
from .quadrature import QuadratureGrid


class PotentialFamily(str, Enum):
    GaussianWell = "GaussianWell"
    CompactBump = "CompactBump"
    PowerDecay = "PowerDecay"


DEFAULT_WIDTH = {
    PotentialFamily.GaussianWell: 1.0,
    PotentialFamily.CompactBump: 2.0,
    PotentialFamily.PowerDecay: 1.0,
}

DEFAULT_BETA = 24.0

# Smallest β for which the dispersive bounds are proven, per zero-energy case
DECAY_HYPOTHESES = {
    Classification.Regular: 7.0,
    Classification.FirstKind: 11.0,
    Classification.SecondKind: 19.0,
    Classification.ThirdKind: 23.0,
}


class Potential(BaseModel):
    """A real potential c * V0(x) from one of the built-in families"""
    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)

    family: PotentialFamily = Field(
        description="Potential family",
        default=PotentialFamily.GaussianWell
    )
    amplitude: float = Field(
        description="Peak value of V0 (the depth for wells)",
        default=-1.0,
        validation_alias=AliasChoices("amplitude", "depth")
    )
    width: Optional[float] = Field(
        description="Length scale: Gaussian width, bump support radius, or PowerDecay scale",
        default=None,
        gt=0
    )
    beta: Optional[float] = Field(
        description="Decay exponent of the PowerDecay family",
        default=None
    )
    inner_radius: Optional[float] = Field(
        description="CompactBump only: V0 changes sign on the sphere of this radius",
        default=None,
        gt=0
    )
    coupling: float = Field(
        description="Multiplier c applied to V0",
        default=1.0
    )

    @model_validator(mode='before')
    @classmethod
    def fill_family_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        family = PotentialFamily(data.get('family', PotentialFamily.GaussianWell))
        if data.get('width') is None:
            data['width'] = DEFAULT_WIDTH[family]
        if family == PotentialFamily.PowerDecay and data.get('beta') is None:
            data['beta'] = DEFAULT_BETA
        return data

    @model_validator(mode='after')
    def check_family_params(self):
        if self.family == PotentialFamily.PowerDecay:
            if self.beta is None or self.beta <= 0:
                raise ValueError(f"PowerDecay needs beta > 0, got {self.beta}")
        elif self.beta is not None:
            raise ValueError(f"beta only applies to PowerDecay, not {self.family.value}")
        if self.inner_radius is not None and self.family != PotentialFamily.CompactBump:
            raise ValueError("inner_radius only applies to CompactBump")
        return self

    @property
    def decay_beta(self) -> float:
        """Exponent β with |V(x)| <= C (1+|x|)^-β; infinite for the fast families"""
        if self.family == PotentialFamily.PowerDecay:
            return float(self.beta)
        return math.inf


# Default of decay runs: at depth -0.01 the low-energy regime of the Gaussian
# well is reached inside the default window t in [10, 300]
WEAK_GAUSSIAN_WELL = Potential(amplitude=-0.01)


def with_coupling(V: Potential, c: float) -> Potential:
    return V.model_copy(update={'coupling': float(c)})


def _profile(V: Potential, x: np.ndarray) -> np.ndarray:
    r2 = np.sum(x * x, axis=-1)
    if V.family == PotentialFamily.GaussianWell:
        return np.exp(-r2 / V.width ** 2)
    if V.family == PotentialFamily.CompactBump:
        s2 = r2 / V.width ** 2
        inside = s2 < 1.0
        out = np.zeros_like(r2)
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        if V.inner_radius is not None:
            out = out * (1.0 - r2 / V.inner_radius ** 2)
        return out
    return (1.0 + r2 / V.width ** 2) ** (-0.5 * V.beta)


def evaluate(V: Potential, x) -> np.ndarray:
    """Pointwise value c * V0(x); x has shape (..., 3)"""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise InvalidArgumentError(f"Points must have 3 coordinates, got shape {x.shape}")
    values = V.coupling * V.amplitude * np.atleast_1d(_profile(V, np.atleast_2d(x)))
    if x.ndim == 1:
        return float(values[0])
    return values.reshape(x.shape[:-1])


@dataclass(frozen=True, eq=False)
class SignAmplitude:
    """V = U v² sampled at the grid nodes"""
    U: np.ndarray
    v: np.ndarray
    values: np.ndarray


def decompose_sign_amplitude(V: Potential, grid: QuadratureGrid) -> SignAmplitude:
    values = evaluate(V, grid.nodes)
    if not np.any(values != 0):
        raise DegeneratePotentialError(
            f"{V.family.value} potential with amplitude {V.amplitude} and coupling {V.coupling} "
            f"vanishes on the grid"
        )
    # U = 1 where V vanishes, so U² = 1 on the whole grid
    U = np.where(values < 0, -1.0, 1.0)
    v = np.sqrt(np.abs(values))
    return SignAmplitude(U=U, v=v, values=values)


def l1_norm(V: Potential, grid: QuadratureGrid) -> float:
    values = evaluate(V, grid.nodes)
    norm = float(np.sum(np.abs(values) * grid.weights))
    if norm == 0:
        raise DegeneratePotentialError("Potential vanishes on the grid; ‖V‖_L1 = 0")
    return norm


def moment_vectors(sa: SignAmplitude, grid: QuadratureGrid):
    """Grid functions x_i v (shape (3, n)) and x_i x_j v for i <= j (shape (6, n))"""
    x = grid.nodes.T
    first = x * sa.v
    pairs = [(i, j) for i in range(3) for j in range(i, 3)]
    second = np.array([x[i] * x[j] * sa.v for i, j in pairs])
    return first, second


def decay_bound_constant(V: Potential, radii) -> float:
    """Sampled sup of |V(x)| (1+|x|)^β along the axes and the main diagonal"""
    beta = V.decay_beta
    if math.isinf(beta):
        raise InvalidArgumentError(f"{V.family.value} decays faster than any power")
    radii = np.asarray(radii, dtype=float)
    directions = np.vstack([np.eye(3), np.ones(3) / math.sqrt(3.0)])
    points = radii[:, None, None] * directions[None, :, :]
    values = np.abs(evaluate(V, points.reshape(-1, 3)))
    weights = (1.0 + np.repeat(radii, len(directions))) ** beta
    return float(np.max(values * weights))


def decay_hypothesis_warnings(V: Potential, classification: Optional[Classification] = None) -> List[str]:
    """Warnings for each zero-energy case whose decay hypothesis V violates"""
    cases = [classification] if classification is not None else list(DECAY_HYPOTHESES)
    warnings = []
    for case in cases:
        needed = DECAY_HYPOTHESES[case]
        if not V.decay_beta > needed:
            message = (f"{V.family.value} decays like (1+|x|)^-{V.decay_beta:g}; "
                       f"the {case.value} estimates assume β > {needed:g}")
            logger.warning(message)
            warnings.append(message)
    return warnings
