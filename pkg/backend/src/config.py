"""
Run Configuration
Pydantic models for every qmle command, plus the environment overrides read
at start-up. A resolved model is embedded in each output so runs can be
reproduced from their own reports.
"""

import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

SEED_ENV = "QMLE_SEED"
LOG_LEVEL_ENV = "QMLE_LOG_LEVEL"
OUTPUT_DIR_ENV = "QMLE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "./qmle-output"


class DistributionKind(str, Enum):
    UNIFORM = "uniform"
    ZIPF = "zipf"
    RANDOM = "random"
    FILE = "file"


class FunctionalKind(str, Enum):
    TSALLIS = "tsallis"
    SHANNON = "shannon"
    RENYI = "renyi"


class Backend(str, Enum):
    BLOCK = "block"
    DENSE = "dense"


class Profile(str, Enum):
    IDEAL = "ideal"
    SMOOTH = "smooth"
    ADVERSARIAL = "adversarial"


class Purification(str, Enum):
    FIXED = "fixed"
    RANDOM = "random-seeded"


class PolyKind(str, Enum):
    NEG_POWER = "neg_power"
    POS_POWER = "pos_power"
    SQRT_LOG = "sqrt_log"


# Engine settings (frozen so they can key construction caches)
class PolynomialSettings(BaseModel):
    """Polynomial construction and certification knobs"""
    model_config = ConfigDict(frozen=True)

    grid_floor: int = Field(1024, ge=1024, description="Minimum certification grid size")
    grid_per_degree: int = Field(8, ge=8, description="Grid points per unit of degree")
    max_rounds: int = Field(6, ge=1, le=12, description="Degree-doubling rounds before giving up")
    max_explicit_degree: int = Field(2048, ge=0, description="Largest degree materialized as coefficients")
    degree_constant: float = Field(4.0, gt=0, description="Constant K of the degree law")
    cap_margin: float = Field(1e-6, gt=0, lt=1e-2, description="Headroom kept below |P| = 1")


class DiscriminatorSettings(BaseModel):
    """Flag profile and query-cost constants of the discriminators"""
    model_config = ConfigDict(frozen=True)

    profile: Profile = Field(Profile.SMOOTH, description="Transition-band behaviour")
    seed: int = Field(0, ge=0, description="Seed of the adversarial profile")
    c_bm: int = Field(1, ge=0, description="Cost constant of branch marking")
    c_gpe: int = Field(1, ge=0, description="Cost constant of gapped phase estimation")
    perturb_map: bool = Field(False, description="Inject a norm-eps1 block perturbation")


class AESettings(BaseModel):
    """Amplitude-estimation simulation knobs"""
    model_config = ConfigDict(frozen=True)

    boost_constant: float = Field(18.0, gt=0, description="R = ceil(boost_constant * ln(2/eta))")
    max_grid: int = Field(2 ** 16, ge=16, description="Largest grid whose pmf is materialized")
    window: int = Field(4096, ge=16, description="Exact-sampling half width around each peak")


# Request models
class DistributionConfig(BaseModel):
    """Where the probability vector comes from"""
    kind: DistributionKind = Field(DistributionKind.UNIFORM, description="Generator name")
    n: Optional[int] = Field(None, ge=1, description="Support size")
    s: float = Field(1.0, ge=0, description="Zipf exponent")
    path: Optional[str] = Field(None, description="Text file with one probability per line")

    @model_validator(mode="after")
    def check_source(self):
        if self.kind == DistributionKind.FILE:
            if not self.path:
                raise ValueError("distribution.path is required for kind 'file'")
        elif self.n is None:
            raise ValueError(f"distribution.n is required for kind '{self.kind.value}'")
        return self


class FunctionalConfig(BaseModel):
    """Which entropy-type functional to estimate"""
    kind: FunctionalKind = Field(FunctionalKind.TSALLIS, description="tsallis | shannon | renyi")
    q: Optional[float] = Field(None, gt=0, description="Tsallis order")
    alpha: Optional[float] = Field(None, gt=0, description="Renyi order")

    @model_validator(mode="after")
    def check_order(self):
        if self.kind == FunctionalKind.TSALLIS:
            if self.q is None:
                raise ValueError("functional.q is required for tsallis")
            if self.q == 1:
                raise ValueError("functional.q = 1 is Shannon entropy; use kind 'shannon'")
        if self.kind == FunctionalKind.RENYI:
            if self.alpha is None:
                raise ValueError("functional.alpha is required for renyi")
            if not 0 < self.alpha < 1:
                raise ValueError("functional.alpha must lie in (0, 1)")
        return self


class EngineConfig(BaseModel):
    """Settings shared by every command that builds plans"""
    discriminator: DiscriminatorSettings = Field(default_factory=DiscriminatorSettings)
    polynomials: PolynomialSettings = Field(default_factory=PolynomialSettings)
    ae: AESettings = Field(default_factory=AESettings)
    shannon_tail_factor: float = Field(1.0, gt=0, description="Scales the Shannon level-count rule")
    workers: int = Field(4, ge=1, le=64, description="Concurrent trial workers")
    seed: int = Field(0, ge=0, description="Master seed")


class EstimateConfig(EngineConfig):
    """Request model for the estimate command"""
    distribution: DistributionConfig
    functional: FunctionalConfig
    eps: float = Field(..., gt=0, lt=1, description="Target additive precision")
    trials: int = Field(50, ge=1, description="Independent seeded trials")
    backend: Backend = Field(Backend.BLOCK, description="block | dense")
    purification: Purification = Field(Purification.FIXED, description="Dense-backend purification")


class SweepConfig(EngineConfig):
    """Request model for the scale-sweep command"""
    q: float = Field(..., gt=0, description="Tsallis order held fixed over the sweep")
    eps_values: List[float] = Field(..., min_length=1, description="Precisions to sweep")
    n_values: List[int] = Field(..., min_length=1, description="Support sizes to sweep")
    distribution: DistributionKind = Field(DistributionKind.UNIFORM, description="uniform | zipf")
    s: float = Field(1.0, ge=0, description="Zipf exponent")
    trials: int = Field(3, ge=1, description="Trials per sweep point")

    @field_validator("q")
    @classmethod
    def q_not_one(cls, v):
        if v == 1:
            raise ValueError("q = 1 has no Tsallis planner")
        return v

    @field_validator("eps_values")
    @classmethod
    def eps_in_range(cls, v):
        if any(not 0 < e < 1 for e in v):
            raise ValueError("every eps must lie in (0, 1)")
        return sorted(set(v), reverse=True)

    @field_validator("n_values")
    @classmethod
    def n_positive(cls, v):
        if any(n < 2 for n in v):
            raise ValueError("every n must be at least 2")
        return sorted(set(v))

    @field_validator("distribution")
    @classmethod
    def generated_only(cls, v):
        if v not in (DistributionKind.UNIFORM, DistributionKind.ZIPF):
            raise ValueError("sweeps support uniform and zipf distributions only")
        return v


class VerifyConfig(EngineConfig):
    """Request model for the verify command"""
    q_values: List[float] = Field(default_factory=lambda: [0.25, 0.4, 0.5, 0.75, 1.25, 1.5, 2.0, 2.5, 3.3])
    eps_values: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    n_values: List[int] = Field(default_factory=lambda: [16, 256])
    include_shannon: bool = Field(True, description="Also check Shannon plans")
    profiles: List[Profile] = Field(default_factory=lambda: [Profile.IDEAL, Profile.SMOOTH, Profile.ADVERSARIAL])
    adversarial_seeds: int = Field(20, ge=1, description="Seeds tried for the adversarial profile")
    compare_count: int = Field(20, ge=0, description="Random distributions for backend comparison")
    sabotage_bounds: Optional[float] = Field(None, gt=0, description="Debug: scale every B_j")

    @field_validator("q_values")
    @classmethod
    def no_unit_q(cls, v):
        if any(q <= 0 or q == 1 for q in v):
            raise ValueError("q values must be positive and differ from 1")
        return v


class CertifyConfig(BaseModel):
    """Request model for the certify-poly command"""
    kind: PolyKind
    c: Optional[float] = Field(None, gt=0, description="Exponent of the power function")
    delta: Optional[float] = Field(None, gt=0, le=0.5, description="Left end of the neg-power interval")
    nu: Optional[float] = Field(None, gt=0, lt=1)
    beta: Optional[float] = Field(None, gt=0, lt=1)
    eps: float = Field(..., gt=0, lt=1, description="Approximation tolerance")
    j: Optional[int] = Field(None, ge=1, description="Shannon level")
    m: int = Field(1, ge=1, description="Level count used by the Shannon tolerance")
    polynomials: PolynomialSettings = Field(default_factory=PolynomialSettings)

    @model_validator(mode="after")
    def check_parameters(self):
        required = {
            PolyKind.NEG_POWER: ("c", "delta"),
            PolyKind.POS_POWER: ("c", "nu", "beta"),
            PolyKind.SQRT_LOG: ("j",),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} needs: {', '.join(missing)}")
        return self


class CompareConfig(EngineConfig):
    """Request model for the compare-backends command"""
    count: int = Field(20, ge=1, description="Random distributions to compare")
    max_n: int = Field(8, ge=1, le=8, description="Largest support size drawn")
    q: float = Field(2.0, gt=0, description="Tsallis order of the compared plans")
    eps: float = Field(0.1, gt=0, lt=0.5, description="Plan precision")
    tolerance: float = Field(1e-9, gt=0, description="Allowed per-level amplitude gap")

    @field_validator("q")
    @classmethod
    def q_not_one(cls, v):
        if v == 1:
            raise ValueError("q = 1 has no Tsallis planner")
        return v


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON config document; malformed files raise ValueError."""
    try:
        with open(path, "r") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read config {path}: {e}")
        raise ValueError(f"Cannot read config {path}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Config {path} must hold a JSON object")
    return data


def env_seed() -> Optional[int]:
    """Seed override from the environment, if set."""
    raw = os.getenv(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}")


def output_dir(explicit: Optional[str] = None) -> Path:
    return Path(explicit or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)
