from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class Classification(str, Enum):
    """Behaviour of the operator at zero energy"""
    Regular = "Regular"
    FirstKind = "FirstKind"
    SecondKind = "SecondKind"
    ThirdKind = "ThirdKind"


class PropagatorMode(str, Enum):
    cosine = "cosine"
    sine_over_sqrt = "sine_over_sqrt"
    halfwave = "halfwave"


class ExpansionRecord(BaseModel):
    """One λ sample of a truncated low-energy expansion of M(λ)"""
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(
        alias="lambda",
        description="The spectral parameter λ"
    )
    residual_norm: float = Field(
        description="Operator norm of M(λ) minus its truncated expansion"
    )
    fitted_order: Optional[float] = Field(
        description="Log-log slope between this sample and the previous one",
        default=None
    )


class ExpansionReport(BaseModel):
    """Residual orders of a truncated expansion of M(λ)"""
    sign: int = Field(
        description="Branch of the boundary value, +1 or -1"
    )
    order: int = Field(
        description="Highest power of λ kept in the truncation"
    )
    records: List[ExpansionRecord] = Field(
        description="Residual per λ, in the order the λ values were given"
    )
    fitted_order: float = Field(
        description="Least-squares slope of log residual against log λ"
    )
    stderr: float = Field(
        description="Standard error of the fitted slope",
        default=0.0
    )


class ResonanceReport(BaseModel):
    """Outcome of running the resonance ladder on one potential"""
    classification: Classification = Field(
        description="Regular point or kind of zero-energy resonance"
    )
    ranks: Dict[str, int] = Field(
        description="Ranks of the projections S1, S2 and S3"
    )
    singular_spectra: Dict[str, List[float]] = Field(
        description="Singular values of QTQ, T1, T2 and T3 on their subspaces, descending"
    )
    residuals: Dict[str, float] = Field(
        description="Orthogonality and ladder identity residuals, relative to operator scale",
        default_factory=dict
    )
    absolute_norms: Dict[str, float] = Field(
        description="Operator norms of entrywise absolute values (recorded, never gated)",
        default_factory=dict
    )
    resonance_residuals: List[float] = Field(
        description="‖f - Uvφ‖ for each reconstructed resonance function",
        default_factory=list
    )
    coupling: Optional[float] = Field(
        description="Coupling constant of the potential",
        default=None
    )
    tolerance: float = Field(
        description="Relative singular value threshold used for null spaces"
    )
    warnings: List[str] = Field(
        description="Decay hypothesis and accuracy warnings",
        default_factory=list
    )
    ladder: Optional[Any] = Field(
        description="In-memory projection bases and D-operators",
        default=None,
        exclude=True,
        repr=False
    )


class ScanPoint(BaseModel):
    c: float = Field(
        description="Coupling constant"
    )
    sigma_min: float = Field(
        description="Smallest singular value of QTQ on QL²"
    )
    sigma_max: float = Field(
        description="Largest singular value of QTQ on QL²"
    )
    negative_count: int = Field(
        description="Number of negative eigenvalues of QTQ on QL²"
    )


class ScanResult(BaseModel):
    """Coupling scan curve and the resonant couplings found on it"""
    points: List[ScanPoint] = Field(
        description="Scan samples in increasing c"
    )
    brackets: List[Tuple[float, float]] = Field(
        description="Coupling intervals of relative width <= 1e-4 containing a root",
        default_factory=list
    )
    roots: List[float] = Field(
        description="Resonant couplings refined inside each bracket",
        default_factory=list
    )
    tolerance: float = Field(
        description="Relative singular value threshold"
    )


class PropagatorSample(BaseModel):
    """One propagator kernel value K(t; x, y)"""
    t: float
    x: Tuple[float, float, float]
    y: Tuple[float, float, float]
    mode: str
    re: float
    im: float
    est_error: float = Field(
        description="Estimated truncation error of the dyadic sum"
    )
    warn_flag: bool = Field(
        description="True when the quadrature budget was exhausted",
        default=False
    )
    low: Optional[float] = Field(
        description="Magnitude of the χ (low energy) part",
        default=None
    )
    high: Optional[float] = Field(
        description="Magnitude of the 1 - χ (high energy) part",
        default=None
    )


class SlopeFit(BaseModel):
    slope: float
    stderr: float
    n_points: int


class DecayCurve(BaseModel):
    """Sup-norm samples of a propagator kernel over time"""
    mode: str = Field(
        description="Propagator mode, with α for halfwave"
    )
    provenance: str = Field(
        description="Kernel path that produced the samples (free or perturbed)"
    )
    t: List[float] = Field(
        description="Strictly increasing time grid"
    )
    sup_abs: List[float] = Field(
        description="Max |K(t; x, y)| over the sample cloud per t"
    )
    n_warn: List[int] = Field(
        description="Number of warned samples per t"
    )
    fit: Optional[SlopeFit] = Field(
        description="Log-log slope fit of sup_abs against t",
        default=None
    )


class DecayModeResult(BaseModel):
    mode: str
    slope: float
    stderr: float
    expected: float
    subtracted_expected: Optional[float] = Field(
        description="Target slope after removing the leading growth term (reported, not gated)",
        default=None
    )
    passed: bool = Field(
        alias="pass",
        description="True when |slope - expected| is within tolerance"
    )

    model_config = ConfigDict(populate_by_name=True)


class DecayReport(BaseModel):
    classification: Classification
    window: Tuple[float, float]
    tolerance: float
    results: List[DecayModeResult]
    curves: List[DecayCurve] = Field(
        default_factory=list
    )


class OracleComparison(BaseModel):
    t: float
    x: Tuple[float, float, float]
    y: Tuple[float, float, float]
    computed_re: float
    computed_im: float
    exact_re: float
    exact_im: float
    relative_error: float


class FreeCheckReport(BaseModel):
    """Free propagator engine against closed-form kernels"""
    halfwave_samples: List[OracleComparison]
    halfwave_max_relative_error: float
    sine_diagonal_relative_error: float = Field(
        description="Sine kernel at x = y against the Fresnel value"
    )
    sine_closed_form_relative_error: float = Field(
        description="Fresnel closed form against adaptive quadrature"
    )
    cosine_slope: Optional[SlopeFit] = None
    sine_slope: Optional[SlopeFit] = None
    passed: bool


class BornCheckReport(BaseModel):
    lam: float
    sign: int
    max_residual: float
    max_kernel: float


class ExpansionSummary(BaseModel):
    """Expansion orders of M(λ) reported by expand-m"""
    expansions: List[ExpansionReport] = Field(
        description="One report per truncation order"
    )
    gamma_derivative: ExpansionReport = Field(
        description="λ‖∂λ Γ1(λ)‖ on the same λ sequence"
    )
