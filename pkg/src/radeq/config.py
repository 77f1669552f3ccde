"""Run configuration: strict schema, TOML/JSON loading and object builders."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigInvalid, IoError
from .geometry import ConvexDomain
from .mc_oracle import McConfig
from .physics import (
    AngularShape,
    BoundaryInflux,
    BoundarySpectrum,
    CoefficientLaw,
    FrequencyProfile,
    NONDIM,
    PhysicalConstants,
    RadiativeModel,
    ScatteringKernel,
)
from .scattering import CollisionSeriesConfig
from .solver import SolverConfig

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


Vec3 = Tuple[float, float, float]


class DomainBlock(_Strict):
    kind: Literal["ball", "ellipsoid"] = "ball"
    radius: float = Field(1.0, gt=0)
    semi_axes: Vec3 = (1.0, 1.0, 1.0)
    center: Vec3 = (0.0, 0.0, 0.0)

    def build(self) -> ConvexDomain:
        if self.kind == "ball":
            return ConvexDomain.ball(self.radius, self.center)
        return ConvexDomain.ellipsoid(self.semi_axes, self.center)


class CoefficientBlock(_Strict):
    kind: Literal["constant", "power", "rational"] = "constant"
    value: float = 1.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    p: float = 1.0

    def build(self) -> CoefficientLaw:
        return CoefficientLaw(kind=self.kind, value=self.value, a=self.a, b=self.b, c=self.c, p=self.p)


class ProfileBlock(_Strict):
    kind: Literal["constant", "exponential", "line"] = "constant"
    value: float = 1.0
    scale: float = 1.0
    amplitude: float = 0.0
    center: float = 1.0
    width: float = 1.0

    def build(self) -> FrequencyProfile:
        return FrequencyProfile(**self.model_dump())


class KernelBlock(_Strict):
    kind: Literal["isotropic", "linear", "rayleigh", "hg"] = "isotropic"
    b: float = 0.0
    g: float = 0.0

    def build(self) -> ScatteringKernel:
        return ScatteringKernel(kind=self.kind, b=self.b, g=self.g)


class SpectrumBlock(_Strict):
    kind: Literal["zero", "planck", "exponential"] = "planck"
    T0: float = Field(1.0, ge=0)
    amplitude: float = Field(1.0, ge=0)
    scale: float = Field(1.0, gt=0)


class ShapeBlock(_Strict):
    kind: Literal["isotropic", "linear", "beam"] = "isotropic"
    direction: Vec3 = (0.0, 0.0, 1.0)
    offset: float = 1.0
    strength: float = 0.0
    kappa: float = 10.0


class BoundaryBlock(_Strict):
    spectrum: SpectrumBlock = SpectrumBlock()
    shape: ShapeBlock = ShapeBlock()

    def build(self) -> BoundaryInflux:
        return BoundaryInflux(BoundarySpectrum(**self.spectrum.model_dump()),
                              AngularShape(**self.shape.model_dump()))


class ModelBlock(_Strict):
    units: Literal["nondimensional", "si"] = "nondimensional"
    alpha_a: CoefficientBlock = CoefficientBlock()
    alpha_s: CoefficientBlock = CoefficientBlock(value=0.0)
    Q_a: ProfileBlock = ProfileBlock()
    Q_s: ProfileBlock = ProfileBlock()
    kernel: KernelBlock = KernelBlock()
    boundary: BoundaryBlock = BoundaryBlock()
    T_max: float = Field(4.0, gt=0)

    def build(self) -> RadiativeModel:
        const = NONDIM if self.units == "nondimensional" else PhysicalConstants.codata()
        return RadiativeModel(alpha_a=self.alpha_a.build(), alpha_s=self.alpha_s.build(), Q_a=self.Q_a.build(),
                              Q_s=self.Q_s.build(), kernel=self.kernel.build(), boundary=self.boundary.build(),
                              T_max=self.T_max, constants=const)


class CollisionBlock(_Strict):
    max_order: int = Field(400, ge=1)
    tail_tolerance: float = Field(1e-6, gt=0)
    truncation: Literal["adaptive", "analytic", "fixed"] = "adaptive"


class SolverBlock(_Strict):
    mode: Literal["grey_absorption", "grey_full", "pseudo_absorption", "pseudo_full"] = "grey_absorption"
    grid_n: int = Field(24, ge=3)
    sphere_order: int = Field(8, ge=0)
    chord_step: Optional[float] = Field(None, gt=0)
    freq_panels: int = Field(12, ge=1)
    freq_per_panel: int = Field(8, ge=1)
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(500, ge=1)
    initial_guess: Literal["boundary", "zero", "apriori", "constant"] = "boundary"
    initial_value: float = Field(0.0, ge=0)
    mollifier_eps: float = Field(0.0, ge=0)
    mollifier_extension: Literal["zero", "renormalized"] = "zero"
    collision: CollisionBlock = CollisionBlock()
    compute_h: bool = True
    compute_flux: bool = False

    def build(self, seed: Optional[int] = None) -> SolverConfig:
        d = self.model_dump()
        d["collision"] = CollisionSeriesConfig(**d["collision"])
        return SolverConfig(seed=seed, **d)


class OutputsBlock(_Strict):
    formats: List[Literal["csv", "binary", "vtk"]] = ["csv"]
    write_angular: bool = False


class CompactlabBlock(_Strict):
    N: int = Field(64, ge=8)
    L: float = Field(1.0, gt=0)
    fields: int = Field(20, ge=1)
    band: int = Field(8, ge=1)
    sphere_order: int = Field(16, ge=2)
    measure_order: int = Field(24, ge=2)
    kappas: List[float] = [0.05, 0.1, 0.2]
    Rs: List[float] = [math.pi, 2 * math.pi, 4 * math.pi]
    ms: List[int] = [1, 2, 3]
    h_norms: List[float] = [0.2, 0.1, 0.05]
    h_direction: Vec3 = (1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0)


class OracleBlock(_Strict):
    photons: int = Field(1_000_000, ge=1)
    tally_n: int = Field(8, ge=1)
    min_count: int = Field(30, ge=1)
    subsamples: int = Field(16, ge=2)
    max_fraction_above_3: float = Field(0.01, ge=0, le=1)


class ReconstructBlock(_Strict):
    points: Optional[str] = None
    field: Optional[str] = None
    nu: float = Field(1.0, gt=0)


class RunConfig(_Strict):
    """Top-level document; every block has materialized defaults."""

    schema_version: Literal[1] = SCHEMA_VERSION
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    threads: Optional[int] = Field(None, ge=1)
    deterministic: bool = False
    domain: DomainBlock = DomainBlock()
    model: ModelBlock = ModelBlock()
    solver: SolverBlock = SolverBlock()
    outputs: OutputsBlock = OutputsBlock()
    compactlab: CompactlabBlock = CompactlabBlock()
    oracle: OracleBlock = OracleBlock()
    reconstruct: ReconstructBlock = ReconstructBlock()

    def mc_config(self) -> McConfig:
        return McConfig(photons=self.oracle.photons, seed=self.seed, tally_n=self.oracle.tally_n,
                        threads=self.threads or 1, min_count=self.oracle.min_count,
                        subsamples=self.oracle.subsamples)

    def effective(self) -> dict:
        return self.model_dump(mode="json")


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(str(exc)) from None


def load_config(path) -> RunConfig:
    """Read a TOML (default) or JSON (``.json``) document."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read config {p}: {exc}") from None
    try:
        if p.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomli.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigInvalid(f"cannot parse {p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid("configuration root must be a table")
    return parse_config(data)


def config_schema() -> dict:
    return RunConfig.model_json_schema()
