"""Run configurations.

Each subcommand has a pydantic schema.  Values are merged as
defaults < config file (JSON) < command-line flags, then validated; unknown
keys are rejected and a missing required key is reported by name.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..params import ModelParams, ParameterError


class ConfigError(Exception):
    """Invalid or incomplete configuration (exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class InitialProfile(_Strict):
    """Initial temperature: linear between T0 and T1, or constant T0.

    Left unset, the profile interpolates the bath temperatures.
    """

    kind: Literal["linear", "constant"] = "linear"
    T0: Optional[float] = None
    T1: Optional[float] = None

    def resolve(self, T_L, T_R):
        T0 = T_L if self.T0 is None else self.T0
        if self.kind == "constant":
            return lambda u: T0 + 0.0 * u
        T1 = T_R if self.T1 is None else self.T1
        return lambda u: T0 + (T1 - T0) * u


class Common(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)
    out: str = "runs"
    tolerance_scale: float = Field(1.0, gt=0)


class _Baths(Common):
    T_L: float = Field(ge=0)
    T_R: float = Field(ge=0)
    gamma: float = Field(1.0, gt=0)
    gamma_tilde: float = Field(1.0, gt=0)
    initial: InitialProfile = InitialProfile()


class _Chain(_Baths):
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def _params_ok(self):
        self.params()
        return self

    def params(self) -> ModelParams:
        try:
            return ModelParams(self.n, self.gamma, self.gamma_tilde, self.T_L, self.T_R)
        except ParameterError as exc:
            raise ValueError(str(exc)) from exc


def _times_ok(times, t):
    if times is None:
        return
    if list(times) != sorted(times) or times[0] < 0 or times[-1] > t * (1 + 1e-12):
        raise ValueError("record_times must be sorted and lie in [0, t]")


class SimulateConfig(_Chain):
    m: int = Field(ge=1)
    t: float = Field(ge=0)
    record_times: Optional[list[float]] = None
    h: Optional[float] = Field(None, gt=0)
    block: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _times(self):
        _times_ok(self.record_times, self.t)
        return self


class CovarianceConfig(_Chain):
    t: float = Field(ge=0)
    record_times: Optional[list[float]] = None
    max_step: Optional[float] = Field(None, gt=0)
    fourier_report: bool = False

    @model_validator(mode="after")
    def _times(self):
        _times_ok(self.record_times, self.t)
        return self


class PDEConfig(_Baths):
    mode: Literal["stationary", "evolution"] = "stationary"
    N: int = Field(128, ge=8)
    t: float = Field(1.0, ge=0)
    record_times: Optional[list[float]] = None
    grid_points: int = Field(101, ge=2)
    kernel_table: Optional[str] = None

    @model_validator(mode="after")
    def _checks(self):
        if self.N % 2:
            raise ValueError("N must be even")
        _times_ok(self.record_times, self.t)
        return self

    def params(self) -> ModelParams:
        # the limiting equation does not depend on n; 1 is a placeholder
        return ModelParams(1, self.gamma, self.gamma_tilde, self.T_L, self.T_R)


class KernelsConfig(Common):
    u_points: int = Field(65, ge=2)
    rho_points: int = Field(33, ge=1)
    rho_min: float = Field(1e-2, gt=0)
    rho_max: float = Field(1e4, gt=0)
    g_points: int = Field(9, ge=2)
    n_box: int = Field(20, ge=2)

    @model_validator(mode="after")
    def _range(self):
        if self.rho_max < self.rho_min:
            raise ValueError("rho_max must be >= rho_min")
        return self


class ConvergeConfig(_Baths):
    T_L: float = Field(2.0, ge=0)
    T_R: float = Field(1.0, ge=0)
    n_list: list[int] = [32, 64, 128]
    t: float = Field(0.3, gt=0)
    N: int = Field(256, ge=8)
    bumps: list[tuple[float, float]] = [(0.3, 0.15), (0.5, 0.2), (0.7, 0.15)]
    current_spread: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def _checks(self):
        if len(self.n_list) < 3 or sorted(set(self.n_list)) != list(self.n_list):
            raise ValueError("n_list needs at least 3 increasing sizes")
        for c, r in self.bumps:
            if not (0 < c - r and c + r < 1):
                raise ValueError(f"bump ({c}, {r}) is not interior to (0, 1)")
        return self


class VerifyConfig(Common):
    level: Literal["quick", "full"] = "quick"
    tstar_constant: float = 2.0 * math.pi**2


SCHEMAS = {
    "simulate": SimulateConfig,
    "covariance": CovarianceConfig,
    "pde": PDEConfig,
    "kernels": KernelsConfig,
    "converge": ConvergeConfig,
    "verify": VerifyConfig,
}


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        key = ".".join(str(x) for x in e["loc"]) or "<config>"
        if e["type"] == "missing":
            lines.append(f"missing required key '{key}'")
        elif e["type"] == "extra_forbidden":
            lines.append(f"unknown key '{key}'")
        else:
            lines.append(f"{key}: {e['msg']}")
    return "; ".join(lines)


def load_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def resolve(command: str, file_values: dict | None = None, flags: dict | None = None):
    """Merge file values and flags over the schema defaults and validate."""
    schema = SCHEMAS[command]
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (flags or {}).items() if v is not None})
    try:
        return schema.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(f"{command}: {_format_validation(exc)}") from None


def config_hash(cfg: BaseModel) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
