"""Per-experiment run configuration, read from one JSON file.

Process-wide knobs (log level, threads, cache size) live in settings.py.
"""
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import PropagatorMode
from .potential import Potential
from .stone import QuadratureBudget


class GridSection(BaseModel):
    model_config = ConfigDict(extra='forbid')

    radius: float = Field(
        description="Half side length R of the box [-R, R]^3",
        default=8.0,
        gt=0
    )
    order: int = Field(
        description="Gauss–Legendre nodes per axis",
        default=12,
        ge=2,
        le=64
    )


class SpectralSection(BaseModel):
    model_config = ConfigDict(extra='forbid')

    lambda0: float = Field(
        description="Boundary of the low-energy regime",
        default=0.1,
        gt=0,
        le=1
    )
    rank_tol: float = Field(
        description="Relative singular value threshold for null spaces",
        default=1e-8,
        gt=0,
        lt=1
    )
    sign: Literal[1, -1] = Field(
        description="Boundary value branch used by expand-m and born-check",
        default=1
    )


class PropagatorSection(BaseModel):
    model_config = ConfigDict(extra='forbid')

    mode: PropagatorMode = Field(
        description="Propagator mode",
        default=PropagatorMode.cosine
    )
    alpha: float = Field(
        description="Power α of H^{α/2} in halfwave mode",
        default=0.0,
        gt=-1.5,
        le=0
    )
    t_min: float = Field(
        description="Start of the time window",
        default=10.0,
        gt=0
    )
    t_max: float = Field(
        description="End of the time window",
        default=300.0,
        gt=0
    )
    t_points: int = Field(
        description="Number of log-spaced times",
        default=8,
        ge=6
    )
    n_min: int = Field(
        description="Minimum Gauss nodes per half panel",
        default=16,
        ge=2
    )
    nodes_per_cycle: float = Field(
        description="Gauss nodes per oscillation cycle",
        default=8.0,
        gt=0
    )
    n_cap: int = Field(
        description="Maximum Gauss nodes per half panel",
        default=4096,
        ge=2
    )
    tail_eps: float = Field(
        description="Tail envelope target of the dyadic sum",
        default=1e-8,
        gt=0
    )
    cloud_size: int = Field(
        description="Number of point pairs in the sample cloud",
        default=25,
        ge=1
    )
    seed: int = Field(
        description="Seed of the sample cloud",
        default=0
    )

    @model_validator(mode='after')
    def check_window(self):
        if self.t_max <= self.t_min:
            raise ValueError(f"t_max ({self.t_max}) must exceed t_min ({self.t_min})")
        if self.n_cap < self.n_min:
            raise ValueError(f"n_cap ({self.n_cap}) must be >= n_min ({self.n_min})")
        return self

    @property
    def budget(self) -> QuadratureBudget:
        return QuadratureBudget(n_min=self.n_min, nodes_per_cycle=self.nodes_per_cycle,
                                n_cap=self.n_cap, tail_eps=self.tail_eps)


class ScanSection(BaseModel):
    model_config = ConfigDict(extra='forbid')

    c_min: float = Field(
        description="Smallest coupling",
        default=0.5,
        gt=0
    )
    c_max: float = Field(
        description="Largest coupling",
        default=40.0,
        gt=0
    )
    steps: int = Field(
        description="Number of log-spaced couplings",
        default=32,
        ge=8
    )

    @model_validator(mode='after')
    def check_range(self):
        if self.c_max <= self.c_min:
            raise ValueError(f"c_max ({self.c_max}) must exceed c_min ({self.c_min})")
        return self


class OutputSection(BaseModel):
    model_config = ConfigDict(extra='forbid')

    dir: Optional[str] = Field(
        description="Directory for artifacts; defaults to the output_dir setting",
        default=None
    )
    formats: List[Literal['json', 'csv']] = Field(
        description="Artifact formats to write",
        default_factory=lambda: ['json', 'csv']
    )


class RunConfig(BaseModel):
    """One experiment: potential, discretization and engine controls"""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    schema_version: Literal[1] = Field(
        alias="schema",
        description="Config schema version",
        default=1
    )
    potential: Optional[Potential] = Field(
        description="Potential family and parameters; load_config fills in the subcommand default",
        default=None
    )
    grid: GridSection = Field(default_factory=GridSection)
    spectral: SpectralSection = Field(default_factory=SpectralSection)
    propagator: PropagatorSection = Field(default_factory=PropagatorSection)
    scan: ScanSection = Field(default_factory=ScanSection)
    output: OutputSection = Field(default_factory=OutputSection)


# Flag name -> (section, field)
OVERRIDES = {
    'radius': ('grid', 'radius'),
    'order': ('grid', 'order'),
    'coupling': ('potential', 'coupling'),
    'rank_tol': ('spectral', 'rank_tol'),
    'lambda0': ('spectral', 'lambda0'),
    'mode': ('propagator', 'mode'),
    't_min': ('propagator', 't_min'),
    't_max': ('propagator', 't_max'),
    'out': ('output', 'dir'),
}


def load_config(path: Optional[str] = None, default_potential: Optional[Potential] = None,
                **overrides) -> RunConfig:
    """Parse a config file (or the defaults), fill in a missing potential and
    apply non-None flag overrides"""
    if path is None:
        config = RunConfig()
    else:
        config = RunConfig.model_validate_json(Path(path).read_text())
    if config.potential is None:
        config = config.model_copy(update={'potential': default_potential or Potential()})
    data = config.model_dump(by_alias=True, exclude_unset=False)
    changed = False
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in OVERRIDES:
            raise KeyError(f"Unknown override {name!r}")
        section, key = OVERRIDES[name]
        data[section][key] = value
        changed = True
    return RunConfig.model_validate(data) if changed else config
