"""Run configuration schema (JSON files). Times are in microseconds, lengths in nm.

Unknown keys are rejected at every level; validation errors name the
offending key path, e.g. ``ensemble.n_configs``.

Example::

    {
      "seed": 7,
      "lattice": {"bath_radius": 10.0, "abundance": 0.0467},
      "ensemble": {"n_configs": 300, "orientation": "111"},
      "fit": {"float_n": false}
    }
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .couplings import DEFAULT_PAIR_CUTOFF, HyperfineParams
from .errors import ConfigError
from .fitting import DecayModel
from .lattice import DEFAULT_BATH_RADIUS, LatticeSpec
from .pairecho import PRINCIPAL_AXES, EnsembleSpec

Vector = List[float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeConfig(_Strict):
    lattice_constant: float = Field(0.5431, gt=0)
    bath_radius: float = Field(DEFAULT_BATH_RADIUS, gt=0)
    abundance: float = Field(0.0467, ge=0, le=1)


class Calibration(_Strict):
    r: Vector
    A: float

    @field_validator("r")
    @classmethod
    def _three(cls, v):
        if len(v) != 3:
            raise ValueError("r must have 3 components")
        return v


class HyperfineConfig(_Strict):
    a: float = Field(2.509, gt=0)
    b: float = Field(1.443, gt=0)
    k0_frac: float = Field(0.85, gt=0, lt=1)
    eta: float = 186.0
    calibration: Optional[Calibration] = None


class EnsembleConfig(_Strict):
    n_configs: int = Field(300, ge=1)
    # "100" | "110" | "111" | "sphere" | [x, y, z] | [[x, y, z], ...]
    orientation: Union[str, Vector, List[Vector]] = "100"
    tau_max_us: float = Field(100.0, gt=0)
    tau_steps: int = Field(50, ge=1)
    include_id: bool = True
    T_ID_us: float = Field(1200.0, gt=0)

    @field_validator("orientation")
    @classmethod
    def _orientation(cls, v):
        resolve_orientation(v)
        return v


class FitConfig(_Strict):
    n: float = Field(2.3, ge=1, le=4)
    float_n: bool = False
    float_S0: bool = False
    include_id: Optional[bool] = None
    T_ID_us: Optional[float] = Field(None, gt=0)
    min_signal: float = 0.02
    ci_method: Literal["linearized", "bootstrap"] = "linearized"
    n_boot: int = Field(1000, ge=10)
    log_params: bool = True


class ValidateConfig(_Strict):
    n_clusters: int = Field(200, ge=1)
    min_spins: int = Field(2, ge=1)
    max_spins: int = Field(8, ge=1)
    capacity: int = Field(12, ge=1)
    tau_max_us: float = Field(100.0, gt=0)
    tau_steps: int = Field(51, ge=2)
    A_max_kHz: float = Field(50.0, gt=0)
    max_pair_exponent: float = Field(0.01, gt=0)
    tolerance: float = Field(1e-3, gt=0)
    strong_clusters: int = Field(0, ge=0)


class SweepConfig(_Strict):
    axis: Literal["orientation", "abundance", "pair_cutoff"] = "orientation"
    values: list = Field(default_factory=lambda: ["100", "110", "111"])


class RunConfig(_Strict):
    seed: int = 0
    workers: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    svg: bool = False
    pair_cutoff: float = Field(DEFAULT_PAIR_CUTOFF, gt=0)
    lattice: LatticeConfig = LatticeConfig()
    hyperfine: HyperfineConfig = HyperfineConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    fit: FitConfig = FitConfig()
    validate_: ValidateConfig = Field(ValidateConfig(), alias="validate")
    sweep: SweepConfig = SweepConfig()

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # -- conversions to library objects --

    def lattice_spec(self) -> LatticeSpec:
        c = self.lattice
        return LatticeSpec(c.lattice_constant, c.bath_radius, c.abundance)

    def hyperfine_params(self) -> HyperfineParams:
        c = self.hyperfine
        cal = None if c.calibration is None else (tuple(c.calibration.r), c.calibration.A)
        return HyperfineParams(a=c.a, b=c.b, k0_frac=c.k0_frac, eta=c.eta,
                               lattice_constant=self.lattice.lattice_constant, A_nn_calibration=cal)

    def ensemble_spec(self) -> EnsembleSpec:
        c = self.ensemble
        return EnsembleSpec(n_configs=c.n_configs, base_seed=self.seed,
                            orientation=resolve_orientation(c.orientation),
                            tau_max=c.tau_max_us * 1e-6, tau_steps=c.tau_steps,
                            include_id=c.include_id, T_ID=c.T_ID_us * 1e-6)

    def decay_template(self) -> DecayModel:
        """Fit template for simulated curves: S0 = 1 unless floated, ID as simulated."""
        f = self.fit
        include_id = self.ensemble.include_id if f.include_id is None else f.include_id
        T_ID_us = f.T_ID_us if f.T_ID_us is not None else self.ensemble.T_ID_us
        free = ("S0",) if f.float_S0 else ()
        free = free + ("T_SD",) + (("n",) if f.float_n else ())
        return DecayModel(S0=1.0, T_ID=T_ID_us * 1e-6 if include_id else math.inf,
                          n=f.n, free=free)

    def dump(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def resolve_orientation(v):
    if isinstance(v, str):
        if v == "sphere":
            return "sphere"
        key = v.strip("[]<>")
        if key in PRINCIPAL_AXES:
            return PRINCIPAL_AXES[key]
        raise ValueError(f"unknown orientation {v!r}; use 100, 110, 111, sphere or a vector")
    if len(v) == 3 and all(isinstance(x, (int, float)) for x in v):
        if all(x == 0 for x in v):
            raise ValueError("orientation vector must be nonzero")
        return tuple(float(x) for x in v)
    axes = [resolve_orientation(x) for x in v]
    if any(isinstance(a, str) for a in axes):
        raise ValueError("axis lists cannot contain 'sphere'")
    return tuple(axes)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(data)
