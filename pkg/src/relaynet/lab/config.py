"""Experiment configuration: a JSON document validated with pydantic."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config", "config_from_dict", "config_hash"]

Positive = Annotated[float, Field(gt=0)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class WindowConfig(_Strict):
    lower: List[float] = [0.0]
    upper: List[float] = [1.0]

    @model_validator(mode="after")
    def _check(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower and upper must have the same nonzero length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("window must have nonempty interior")
        return self


class KernelConfig(_Strict):
    kind: Literal["constant", "csv"] = "constant"
    value: Annotated[float, Field(gt=0)] = 1.0
    path: Optional[str] = None
    grid_delta: Optional[Positive] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "csv" and (self.path is None or self.grid_delta is None):
            raise ValueError("csv kernels need 'path' and 'grid_delta'")
        return self


class IntensityConfig(_Strict):
    t_final: Positive = 1.0
    mass: Annotated[float, Field(ge=0)] = 1.0
    time_weights: Optional[List[Annotated[float, Field(ge=0)]]] = None
    choice_bins: Annotated[int, Field(ge=1)] = 1


class RelayRule(_Strict):
    rule: Literal["ratio", "count"] = "ratio"
    ratio: Annotated[float, Field(ge=0)] = 1.0
    count: Optional[Annotated[int, Field(ge=0)]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.rule == "count" and self.count is None:
            raise ValueError("rule 'count' needs 'count'")
        return self


class TransmitterRule(_Strict):
    rule: Literal["poisson", "count"] = "poisson"
    count: Optional[Annotated[int, Field(ge=0)]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.rule == "count" and self.count is None:
            raise ValueError("rule 'count' needs 'count'")
        return self


class ModelConfig(_Strict):
    window: WindowConfig = WindowConfig()
    delta: Optional[Positive] = None
    kernel: KernelConfig = KernelConfig()
    intensity: IntensityConfig = IntensityConfig()
    relays: RelayRule = RelayRule()
    transmitters: TransmitterRule = TransmitterRule()
    dynamics: Literal["threshold", "relay_choice"] = "threshold"


class EventConfig(_Strict):
    functional: Literal["frustrated", "busy"] = "frustrated"
    cell: Optional[Annotated[int, Field(ge=0)]] = None
    time: Optional[Annotated[float, Field(ge=0)]] = None
    threshold: float = 0.5
    units: Literal["mass", "count"] = "mass"
    comparison: Literal["ge", "le", "eq"] = "ge"


class RunConfig(_Strict):
    lam: List[Positive] = Field(default=[100.0], alias="lambda", min_length=1)
    replicas: Annotated[int, Field(ge=1)] = 1000
    seed: Annotated[int, Field(ge=0)] = 0
    block_size: Annotated[int, Field(ge=1)] = 65536
    event: EventConfig = EventConfig()


class SolverConfig(_Strict):
    tol: Positive = 1e-8
    time_steps: Annotated[int, Field(ge=1)] = 1000
    max_iter: Annotated[int, Field(ge=1)] = 10_000
    euler_delta: Positive = 0.1
    rate_states: Annotated[int, Field(ge=1)] = 400
    rate_time_steps: Annotated[int, Field(ge=1)] = 400


class LemmaConfig(_Strict):
    instances: Annotated[int, Field(ge=1)] = 50


class ExperimentConfig(_Strict):
    model: ModelConfig = ModelConfig()
    run: RunConfig = RunConfig()
    solver: SolverConfig = SolverConfig()
    lemmas: LemmaConfig = LemmaConfig()
    output: str = "out"
    base_dir: Optional[str] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _cross_checks(self):
        ev = self.run.event
        tf = self.model.intensity.t_final
        if ev.time is not None and ev.time > tf:
            raise ValueError(f"run.event.time {ev.time} exceeds t_final {tf}")
        tw = self.model.intensity.time_weights
        if tw is not None and not sum(tw) > 0:
            raise ValueError("model.intensity.time_weights must have positive sum")
        return self

    @property
    def kernel_path(self) -> Path | None:
        if self.model.kernel.path is None:
            return None
        p = Path(self.model.kernel.path)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True, exclude={"base_dir"})


def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def config_from_dict(data: dict, base_dir=None) -> ExperimentConfig:
    """Validate a parsed document; raises :class:`ConfigError` with field paths."""
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "configuration must be a JSON object")])
    try:
        cfg = ExperimentConfig.model_validate({**data, "base_dir": None if base_dir is None else str(base_dir)})
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            problems.append((_field_path(loc), err["msg"]))
        raise ConfigError(problems) from None
    path = cfg.kernel_path
    if path is not None and not path.is_file():
        raise ConfigError([("model.kernel.path", f"kernel file not found: {path}")])
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([("<file>", f"configuration file not found: {path}")])
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"invalid JSON: {exc}")]) from None
    return config_from_dict(data, base_dir=path.parent)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    text = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
