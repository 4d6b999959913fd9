"""
Pydantic models for run configuration and INI parsing / serialization
"""
import configparser
import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from services.lattice_service import HIGH_SYMMETRY_NAMES


def _split(value: Any, separator: str = ",") -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(separator) if part.strip()]
    return value


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.strip().replace(" ", ""))
    except ValueError:
        raise ValueError(f"Invalid complex literal: {text!r}")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def parse_A_terms(text: str) -> List[Tuple[int, int, List[complex]]]:
    """'m1 m2 v11 v12 v21 v22; ...' with complex literals."""
    terms = []
    for entry in _split(text, ";"):
        parts = entry.split()
        if len(parts) != 6:
            raise ValueError(f"A term needs 'm1 m2 v11 v12 v21 v22', got {entry!r}")
        terms.append((int(parts[0]), int(parts[1]), [_parse_complex(p) for p in parts[2:]]))
    return terms


def parse_a_terms(text: str) -> List[Tuple[int, int, complex]]:
    """'m1 m2 v; ...' with a complex literal."""
    terms = []
    for entry in _split(text, ";"):
        parts = entry.split()
        if len(parts) != 3:
            raise ValueError(f"a term needs 'm1 m2 v', got {entry!r}")
        terms.append((int(parts[0]), int(parts[1]), _parse_complex(parts[2])))
    return terms


class Section(BaseModel):
    """Base for INI sections: unknown keys are errors"""
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# MATERIAL AND DISCRETIZATION
# ============================================================================
class WeightSpec(Section):
    """Material weight selection"""
    kind: Literal["example", "identity", "low_contrast", "fourier"] = "example"
    epsilon: float = Field(0.05, gt=0.0, le=1.0)  # low_contrast: I + epsilon h I
    A_terms: Optional[str] = None
    a_terms: Optional[str] = None

    @field_validator("A_terms")
    @classmethod
    def validate_A_terms(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            parse_A_terms(v)
        return v

    @field_validator("a_terms")
    @classmethod
    def validate_a_terms(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            parse_a_terms(v)
        return v

    @model_validator(mode="after")
    def validate_fourier(self) -> "WeightSpec":
        if self.kind == "fourier" and not (self.A_terms and self.a_terms):
            raise ValueError("kind = fourier needs both A_terms and a_terms")
        return self


class PerturbationSpec(Section):
    kind: Literal["example", "none"] = "example"


class DiscretizationSection(Section):
    truncation: int = Field(10, ge=1, le=40)  # M
    quadrature: int = Field(64, ge=8, le=1024)
    shape: Literal["disk", "square"] = "disk"


class RunSection(Section):
    """Output handling and reproducibility"""
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0)
    label: str = "run"
    upload: bool = True  # only takes effect with R2_ENABLED


# ============================================================================
# SUBCOMMAND SECTIONS
# ============================================================================
class BandsSection(Section):
    mode: Literal["path", "surface"] = "path"
    path: List[str] = ["Gamma", "K", "M", "Gamma"]
    points_per_segment: int = Field(20, ge=2, le=400)
    count: int = Field(6, ge=1, le=50)
    extent: float = Field(1.0, gt=0.0, le=10.0)
    points: int = Field(9, ge=2, le=200)

    @field_validator("path", mode="before")
    @classmethod
    def split_path(cls, v):
        return _split(v)

    @field_validator("path")
    @classmethod
    def validate_path(cls, v: List[str]) -> List[str]:
        if len(v) < 2:
            raise ValueError("Band path needs at least two points")
        unknown = [name for name in v if name not in HIGH_SYMMETRY_NAMES]
        if unknown:
            raise ValueError(f"Unknown high-symmetry points {unknown}, expected {HIGH_SYMMETRY_NAMES}")
        return v


class DiracSection(Section):
    bands: int = Field(6, ge=2, le=50)
    radii: List[float] = [0.005, 0.01, 0.02]
    directions: int = Field(6, ge=3, le=72)
    fit: bool = True
    phase: complex = 1.0 + 0.0j  # unit scalar applied before phase fixing
    rho: float = Field(1.0, gt=0.0)  # Kerr strength in p1, p2

    @field_validator("radii", mode="before")
    @classmethod
    def split_radii(cls, v):
        return _split(v)

    @field_validator("radii")
    @classmethod
    def validate_radii(cls, v: List[float]) -> List[float]:
        if not v or any(r <= 0 or r > 0.5 for r in v):
            raise ValueError("Fit radii must lie in (0, 0.5]")
        return v

    @field_validator("phase", mode="before")
    @classmethod
    def parse_phase(cls, v):
        return _parse_complex(v) if isinstance(v, str) else v

    @field_validator("phase")
    @classmethod
    def validate_phase(cls, v: complex) -> complex:
        if abs(abs(v) - 1.0) > 1e-12:
            raise ValueError(f"Phase must have unit modulus, got {v}")
        return v


class GapSweepSection(Section):
    deltas: List[float] = [0.01, 0.02, 0.04, 0.06, 0.08, 0.1]

    @field_validator("deltas", mode="before")
    @classmethod
    def split_deltas(cls, v):
        return _split(v)

    @field_validator("deltas")
    @classmethod
    def validate_deltas(cls, v: List[float]) -> List[float]:
        if len(v) < 2 or any(d <= 0 for d in v):
            raise ValueError("Gap sweep needs at least two positive deltas")
        return v


class LowContrastSection(Section):
    epsilons: List[float] = [0.02, 0.01, 0.005]

    @field_validator("epsilons", mode="before")
    @classmethod
    def split_epsilons(cls, v):
        return _split(v)

    @field_validator("epsilons")
    @classmethod
    def validate_epsilons(cls, v: List[float]) -> List[float]:
        if len(v) < 2 or any(e <= 0 or e >= 0.5 for e in v):
            raise ValueError("Low-contrast sweep needs at least two epsilons in (0, 0.5)")
        return v


class MassSection(Section):
    """Shared mass-profile fields"""
    mass: Literal["straight_edge", "double_wall", "curved_edge"] = "double_wall"
    amplitude: float = 1.0
    steepness: float = Field(1.0, gt=0.0)
    orientation: Literal["horizontal", "vertical"] = "horizontal"
    preset: Literal["straight", "half_circle", "polyline"] = "straight"
    radius: float = Field(10.0, gt=0.0)
    vertices: Optional[List[Tuple[float, float]]] = None  # 't f; t f; ...'
    offset: float = 0.0

    @field_validator("vertices", mode="before")
    @classmethod
    def split_vertices(cls, v):
        if isinstance(v, str):
            return [tuple(float(x) for x in pair.split()) for pair in _split(v, ";")]
        return v


class GridFields(Section):
    lx1: float = Field(80.0 * math.pi, gt=0.0)
    lx2: float = Field(20.0 * math.pi, gt=0.0)
    n1: int = Field(256, ge=1, le=8192)
    n2: int = Field(128, ge=1, le=8192)

    @field_validator("n1", "n2")
    @classmethod
    def validate_power_of_two(cls, v: int) -> int:
        if not _is_power_of_two(v):
            raise ValueError(f"Grid sizes must be powers of two, got {v}")
        return v


class EvolveSection(GridFields, MassSection):
    dt: float = Field(0.05, gt=0.0)
    final_time: float = Field(10.0, ge=0.0)
    cadence: int = Field(10, ge=1)
    snapshot_cadence: int = Field(0, ge=0)
    linear_only: bool = False
    p1: Optional[float] = None  # from the Dirac point when unset
    p2: Optional[float] = None
    initial: Literal["edge_packet", "line_mode", "curved_edge", "modulated_mode"] = "edge_packet"
    center: Tuple[float, float] = (0.0, 0.0)
    width: float = Field(4.0, gt=0.0)
    xi: float = 0.0
    mu: float = -0.5  # modulated_mode
    noise: float = Field(0.0, ge=0.0)  # relative amplitude of seeded random noise
    tube_half_width: float = Field(5.0, gt=0.0)

    @field_validator("center", mode="before")
    @classmethod
    def split_center(cls, v):
        return _split(v)


class SolveModeSection(GridFields, MassSection):
    mode: Literal["line", "lump"] = "line"
    mus: List[float] = [-0.5]
    p1: Optional[float] = None
    p2: Optional[float] = None
    lump_width: float = Field(4.0, gt=0.0)
    tolerance: float = Field(1e-10, gt=0.0, lt=1.0)
    max_iterations: int = Field(200, ge=1, le=10000)
    cg_tolerance: float = Field(1e-2, gt=0.0, lt=1.0)
    preconditioner_shift: float = Field(2.0, gt=0.0)

    @field_validator("mus", mode="before")
    @classmethod
    def split_mus(cls, v):
        return _split(v)

    @field_validator("mus")
    @classmethod
    def validate_mus(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("At least one mu is required")
        return v


class CompareSection(Section):
    n1: int = Field(32, ge=1, le=4096)
    n2: int = Field(48, ge=3, le=4096)
    r1: int = Field(8, ge=2, le=64)
    r2: int = Field(8, ge=2, le=64)
    delta: float = Field(0.1, gt=0.0, le=1.0)
    final_time: float = Field(5.0, gt=0.0)
    samples: int = Field(20, ge=1, le=10000)
    tube_half_width: float = Field(1.0, gt=0.0)
    envelope_n1: int = Field(64, ge=2, le=8192)
    envelope_n2: int = Field(64, ge=2, le=8192)
    decay_tolerance: Optional[float] = Field(1.0, gt=0.0)
    refinement: Literal["none", "halve", "double"] = "halve"

    @model_validator(mode="after")
    def validate_halving(self) -> "CompareSection":
        if self.refinement == "halve" and (self.r1 % 2 or self.r2 % 2 or min(self.r1, self.r2) < 4):
            raise ValueError(f"refinement = halve needs even r1, r2 of at least 4, got {self.r1}x{self.r2}")
        return self

    @field_validator("n2")
    @classmethod
    def validate_n2(cls, v: int) -> int:
        if v % 3 != 0:
            raise ValueError(f"n2 must be a multiple of 3, got {v}")
        return v

    @field_validator("envelope_n1", "envelope_n2")
    @classmethod
    def validate_power_of_two(cls, v: int) -> int:
        if not _is_power_of_two(v):
            raise ValueError(f"Envelope grid sizes must be powers of two, got {v}")
        return v


class RenderSection(Section):
    input: str
    quantity: Literal["norm", "component"] = "norm"
    component: Optional[int] = Field(None, ge=0, le=2)
    output: str = "field.png"


# ============================================================================
# RUN CONFIG
# ============================================================================
SECTIONS: Dict[str, str] = {
    "run": "run",
    "weight": "weight",
    "perturbation": "perturbation",
    "discretization": "discretization",
    "bands": "bands",
    "dirac": "dirac",
    "gap-sweep": "gap_sweep",
    "low-contrast": "low_contrast",
    "evolve": "evolve",
    "solve-mode": "solve_mode",
    "compare": "compare",
    "render": "render",
}


class RunConfig(BaseModel):
    """A parsed configuration file; absent sections keep their defaults"""
    model_config = ConfigDict(extra="forbid")

    run: RunSection = RunSection()
    weight: WeightSpec = WeightSpec()
    perturbation: PerturbationSpec = PerturbationSpec()
    discretization: DiscretizationSection = DiscretizationSection()
    bands: BandsSection = BandsSection()
    dirac: DiracSection = DiracSection()
    gap_sweep: GapSweepSection = GapSweepSection()
    low_contrast: LowContrastSection = LowContrastSection()
    evolve: EvolveSection = EvolveSection()
    solve_mode: SolveModeSection = SolveModeSection()
    compare: CompareSection = CompareSection()
    render: Optional[RenderSection] = None


def parse_config(text: str) -> RunConfig:
    """
    Parse INI text into a validated RunConfig.

    Raises:
        ConfigError: on unknown sections or malformed INI
        ValidationError: on values outside their documented ranges
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Malformed config: {e}")
    data = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"Unknown config section [{name}], expected one of {list(SECTIONS)}")
        data[SECTIONS[name]] = dict(parser.items(name))
    return RunConfig.model_validate(data)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            return parse_config(f.read())
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return "; ".join(" ".join(_format_value(x) for x in pair) for pair in value)
        return ", ".join(_format_value(x) for x in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """INI text that parses back to an equal RunConfig."""
    lines: List[str] = []
    for name, attr in SECTIONS.items():
        section = getattr(config, attr)
        if section is None:
            continue
        lines.append(f"[{name}]")
        for key, value in section.model_dump().items():
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


__all__ = [
    "RunConfig",
    "ValidationError",
    "parse_config",
    "load_config",
    "serialize_config",
    "parse_A_terms",
    "parse_a_terms",
]
