# services/orchestrator/config.py

import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from services.errors import ConfigError
from services.lattice.lattice_types import DEFAULT_MAX_VECTORS, DEFAULT_PRECISION, ToleranceConfig
from services.weyl.weyl_types import DiagonalFlow, LinearFunctional, ParabolicSubgroup

load_dotenv()

# -------------------- Logging --------------------
logger = logging.getLogger("orchestrator.config")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LOGGER_PREFIXES = ("bounds.", "lattice.", "coder.", "orchestrator.")

# exp(-7): deep enough that cusp witnesses with n >= 8 fall under the schedule's delta'.
DEFAULT_DELTA = math.exp(-7)

LatticeSpec = Union[str, Dict[str, Any]]


def parse_flow(value: Any) -> DiagonalFlow:
    if isinstance(value, DiagonalFlow):
        return value
    if isinstance(value, dict):
        return DiagonalFlow(**value)
    if isinstance(value, str):
        value = [p for p in value.split(",") if p.strip()]
    return DiagonalFlow.of(value)


def parse_delta(value: Any) -> float:
    """A float, or "exp(x)" for e^x."""
    if isinstance(value, str):
        text = value.strip().replace(" ", "")
        if text.startswith("exp(") and text.endswith(")"):
            return math.exp(float(text[4:-1]))
        return float(text)
    return float(value)


def parse_jumps(value: Any) -> Tuple[int, ...]:
    """Accepts "{1,3}", "1,3", "G", "" or a list of ints."""
    if isinstance(value, str):
        text = value.strip().strip("{}[]() ")
        if text.upper() == "G" or not text:
            return ()
        return tuple(int(p) for p in text.split(","))
    return tuple(int(j) for j in value)


# ---- Config models ----

class ToleranceBlock(BaseModel):
    """
    User-facing tolerance block. delta_prime and r default to the schedule
    delta' = exp(-|log delta|^(1/2)), r = (|log delta'| / |log delta|)^(1/(d+2)).
    """
    model_config = ConfigDict(extra="forbid")

    delta: float = Field(default=DEFAULT_DELTA, gt=0, lt=1)
    delta_prime: Optional[float] = Field(default=None, gt=0, lt=1)
    r: Optional[float] = Field(default=None, gt=0, le=1)
    eta0: float = Field(default=0.25, gt=0, lt=1)
    eps0: Optional[float] = Field(default=None, gt=0, lt=1)
    precision: int = Field(default=DEFAULT_PRECISION, ge=53)
    max_vectors: int = Field(default=DEFAULT_MAX_VECTORS, ge=1)
    root_tol: float = Field(default=1e-9, gt=0)
    strict: bool = True

    @field_validator("delta", "delta_prime", mode="before")
    @classmethod
    def _coerce_delta(cls, v: Any) -> Any:
        return None if v is None else parse_delta(v)

    def resolve(self, d: int, delta: Optional[float] = None) -> ToleranceConfig:
        delta = self.delta if delta is None else delta
        log_d = abs(math.log(delta))
        delta_prime = self.delta_prime if self.delta_prime is not None else math.exp(-math.sqrt(log_d))
        r = self.r if self.r is not None else (abs(math.log(delta_prime)) / log_d) ** (1.0 / (d + 2))
        cfg = ToleranceConfig(
            delta=delta,
            delta_prime=delta_prime,
            r=r,
            eta0=self.eta0,
            eps0=self.eps0,
            precision=self.precision,
            max_vectors=self.max_vectors,
            root_tol=self.root_tol,
            strict=self.strict,
        )
        cfg.check_dimension(d)
        return cfg


class WitnessSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    jumps: Tuple[int, ...]
    n: int = Field(ge=2)

    @field_validator("jumps", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> Tuple[int, ...]:
        return parse_jumps(v)


class SweepGrid(BaseModel):
    """Jobs are the product flows x lattices x deltas; N = ceil(N_factor |log delta|) unless N is fixed."""
    model_config = ConfigDict(extra="forbid")

    flows: List[DiagonalFlow] = Field(min_length=1)
    deltas: List[float] = Field(min_length=1)
    lattices: List[LatticeSpec] = Field(default_factory=lambda: ["identity"], min_length=1)
    N_factor: float = Field(default=10.0, gt=1)
    N: Optional[int] = Field(default=None, ge=1)

    @field_validator("flows", mode="before")
    @classmethod
    def _coerce_flows(cls, v: Any) -> List[DiagonalFlow]:
        return [parse_flow(f) for f in (v or [])]

    @field_validator("deltas", mode="before")
    @classmethod
    def _coerce_deltas(cls, v: Any) -> List[float]:
        return [parse_delta(x) for x in (v or [])]

    @field_validator("deltas")
    @classmethod
    def _check_deltas(cls, v: List[float]) -> List[float]:
        for delta in v:
            if not 0 < delta < 1:
                raise ValueError(f"delta {delta} outside (0, 1)")
        return v

    def size(self) -> int:
        return len(self.flows) * len(self.deltas) * len(self.lattices)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    command: Optional[str] = None
    flow: Optional[DiagonalFlow] = None
    tolerance: ToleranceBlock = Field(default_factory=ToleranceBlock)
    N: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    parabolic: Optional[Tuple[int, ...]] = None
    phi: Optional[LinearFunctional] = None
    scope: str = "cusp"
    optimize: bool = False
    closed_forms: bool = False
    lattices: List[LatticeSpec] = Field(default_factory=list)
    witness: Optional[WitnessSpec] = None
    sweep: Optional[SweepGrid] = None
    constants: Optional[str] = None
    out_dir: str = "out"
    no_meta: bool = False
    sorted: bool = False
    workers: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _root_weights(cls, data: Any) -> Any:
        """phi given as "psi:c_1,...,c_{d-1}" means sum c_i psi_i and needs the flow's d."""
        if isinstance(data, dict) and isinstance(data.get("phi"), str) and data["phi"].startswith("psi:"):
            if data.get("flow") is None:
                raise ValueError("phi in psi: form needs a flow")
            d = parse_flow(data["flow"]).d
            weights = [p for p in data["phi"][4:].split(",") if p.strip()]
            if len(weights) != d - 1:
                raise ValueError(f"psi: form needs {d - 1} weights, got {len(weights)}")
            data = {**data, "phi": LinearFunctional.from_roots(d, {i + 1: c for i, c in enumerate(weights)})}
        return data

    @field_validator("flow", mode="before")
    @classmethod
    def _coerce_flow(cls, v: Any) -> Optional[DiagonalFlow]:
        return None if v is None else parse_flow(v)

    @field_validator("phi", mode="before")
    @classmethod
    def _coerce_phi(cls, v: Any) -> Optional[LinearFunctional]:
        if v is None or isinstance(v, LinearFunctional):
            return v
        if isinstance(v, str):
            v = [p for p in v.split(",") if p.strip()]
        return LinearFunctional.of(v)

    @field_validator("parabolic", mode="before")
    @classmethod
    def _coerce_parabolic(cls, v: Any) -> Optional[Tuple[int, ...]]:
        return None if v is None else parse_jumps(v)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.flow is not None:
            d = self.flow.d
            if self.phi is not None and self.phi.d != d:
                raise ValueError(f"phi has d={self.phi.d}, flow has d={d}")
            if self.parabolic is not None:
                ParabolicSubgroup(d=d, jumps=self.parabolic)
            if self.witness is not None:
                ParabolicSubgroup(d=d, jumps=self.witness.jumps)
            if self.k is not None and not self.k <= d - 1:
                raise ValueError(f"k={self.k} outside 1..{d - 1}")
            self.tolerance.resolve(d)
        if self.sweep is not None:
            for flow in self.sweep.flows:
                for delta in self.sweep.deltas:
                    self.tolerance.resolve(flow.d, delta)
        if self.scope not in ("cusp", "all", "P"):
            raise ValueError(f"scope must be cusp, all or P, got {self.scope!r}")
        if self.scope == "P" and self.parabolic is None:
            raise ValueError("scope P needs a parabolic")
        return self

    @property
    def d(self) -> int:
        if self.flow is None:
            raise ConfigError("a flow is required (--flow or 'flow' in the config file)")
        return self.flow.d

    def tolerance_config(self, delta: Optional[float] = None, d: Optional[int] = None) -> ToleranceConfig:
        return _wrap(lambda: self.tolerance.resolve(d or self.d, delta))

    def parabolic_subgroup(self) -> Optional[ParabolicSubgroup]:
        return None if self.parabolic is None else ParabolicSubgroup(d=self.d, jumps=self.parabolic)


# ---- Loading ----

def _wrap(fn: Any) -> Any:
    try:
        return fn()
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def _line_of(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """1-based line of the YAML node at `loc`, or None when the path does not resolve."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((v for k, v in node.value if k.value == str(key)), None)
            if match is None:
                break
            node = match
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def format_validation_error(e: ValidationError, text: Optional[str] = None, source: str = "config") -> str:
    parts = []
    for item in e.errors():
        loc = tuple(p for p in item["loc"])
        path = ".".join(str(p) for p in loc) or "<root>"
        line = _line_of(text, loc) if text else None
        where = f"{source}:{line}: " if line else f"{source}: "
        parts.append(f"{where}{path}: {item['msg']}")
    return "; ".join(parts)


def read_config_file(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: {getattr(e, 'problem', None) or e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data, text


def _env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def apply_env(data: Dict[str, Any]) -> Dict[str, Any]:
    """CUSPLAB_PRECISION, CUSPLAB_MAX_VECTORS and CUSPLAB_WORKERS override file and flag values."""
    out = dict(data)
    tol = dict(out.get("tolerance") or {})
    precision = _env_int("CUSPLAB_PRECISION")
    if precision is not None:
        tol["precision"] = precision
    max_vectors = _env_int("CUSPLAB_MAX_VECTORS")
    if max_vectors is not None:
        tol["max_vectors"] = max_vectors
    if tol:
        out["tolerance"] = tol
    workers = _env_int("CUSPLAB_WORKERS")
    if workers is not None and out.get("workers") is None:
        out["workers"] = workers
    return out


def merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Flag values win over file values; nested mappings merge key by key; None never overrides."""
    out = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def load_run_config(overrides: Optional[Dict[str, Any]] = None, path: Optional[Union[str, Path]] = None) -> RunConfig:
    data: Dict[str, Any] = {}
    text = None
    source = "flags"
    if path is not None:
        data, text = read_config_file(path)
        source = str(path)
    data = apply_env(merge(data, overrides or {}))
    try:
        cfg = RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, text, source)) from e
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from e
    logger.debug(f"run config loaded from {source}")
    return cfg


def configure_logging(level: Optional[str] = None) -> str:
    """Applies CUSPLAB_LOG_LEVEL (or `level`) to every package logger."""
    name = (level or os.getenv("CUSPLAB_LOG_LEVEL") or "INFO").upper()
    value = logging.getLevelName(name)
    if not isinstance(value, int):
        raise ConfigError(f"unknown log level {name!r}")
    for logger_name in list(logging.root.manager.loggerDict):
        if logger_name.startswith(LOGGER_PREFIXES):
            logging.getLogger(logger_name).setLevel(value)
    return name


def default_workers(cfg: RunConfig) -> int:
    return cfg.workers or os.cpu_count() or 1
