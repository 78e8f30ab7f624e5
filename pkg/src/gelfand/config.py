"""Experiment configuration shared by the CLI and the HTTP service."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    """Raised for unreadable or invalid experiment configs (exit code 2)."""


class DomainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["disk", "annulus", "square", "square_with_hole", "mask"] = "disk"
    h: float = Field(1 / 64, gt=0, le=0.5)
    analytic: bool = True
    inner_radius: float | None = Field(None, gt=0, lt=1)
    hole: float = Field(0.3, gt=0, lt=1)
    mask_path: str | None = None
    origin: tuple[float, float] = (0.0, 0.0)

    def to_domain_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class PotentialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["admissible", "radial", "constant", "coefficients"] = "admissible"
    target: list[float] | None = None
    scale: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    c2: float = 0.0
    c0: float = 0.0
    value: float = 1.0
    coefficients: list[tuple[int, int, float]] | None = None


class MeshPolicy(BaseModel):
    """Graded-mesh knobs for the bubble-scale experiments."""
    model_config = ConfigDict(extra="forbid")

    cells: float = Field(6, gt=0)
    core: float = Field(20, gt=0)
    h_far: float = Field(1 / 48, gt=0)
    ratio: float = Field(1.08, gt=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: DomainSpec = DomainSpec()
    potential: PotentialSpec = PotentialSpec()
    N: int = Field(2, ge=2, le=6)
    alpha: float = 1.0
    eta0: tuple[float, float] | None = None
    rho: list[float] = Field(default_factory=lambda: [2e-3, 1e-3, 5e-4])
    p: float = Field(1.2, gt=1)
    mesh: MeshPolicy = MeshPolicy()
    seeds: list[tuple[float, float]] | None = None
    corrections: bool = True
    checks: list[Literal["w1", "kernel", "residual", "reduced", "linearized"]] = Field(
        default_factory=lambda: ["w1", "kernel", "residual", "reduced", "linearized"])
    control: bool = False
    tol: float = Field(1e-9, gt=0)
    seed: int = 0
    out: str | None = None

    @field_validator("rho")
    @classmethod
    def _rho_range(cls, v: list[float]) -> list[float]:
        if not v or any(not 0 < r < 0.1 for r in v):
            raise ValueError("rho values must lie in (0, 0.1)")
        return v

    def potential_dict(self) -> dict:
        return self.potential.model_dump(exclude_none=True)


def parse_config(data: dict | str | Path | None) -> ExperimentConfig:
    """Accept a dict, a JSON string, or a path; None gives the defaults."""
    try:
        if data is None:
            return ExperimentConfig()
        if isinstance(data, Path) or (isinstance(data, str) and not data.lstrip().startswith("{")):
            data = json.loads(Path(data).read_text())
        elif isinstance(data, str):
            data = json.loads(data)
        return ExperimentConfig.model_validate(data)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(str(exc)) from exc
