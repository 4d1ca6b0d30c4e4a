"""Pydantic schemas for experiment configuration and run reports"""
import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from app.config import settings
from app.constants import (
    DEFAULT_CORRECTION_DEAD_TIME_S,
    DEFAULT_CORRECTION_PERIOD_S,
    DEFAULT_QBER_SLOPE_PER_MW,
    DEFAULT_QX_SLOPE_PER_MW,
    DEFAULT_SWITCHING_TIME_S,
    DEFAULT_TYPE2_PROBABILITY,
    FINITE_KEY_TOPOLOGY,
    FITTED_ATTEN_DB_PER_KM,
    FITTED_COUPLING_LOSS_DB,
    INTERFERENCE_VISIBILITY,
    OPERATING_POWER_MW,
    REFERENCE_EPS_EC,
    REFERENCE_EPS_PA,
    REFERENCE_EPS_TOT,
    REFERENCE_QBER,
    REFERENCE_QX,
    TEST_BLOCK_LENGTH,
    ZERO_LOSS_RATE_HZ,
    ZERO_POWER_QX,
)
from app.core.exceptions import ConfigurationError
from app.services.noise_model import (
    DepolarizingParams,
    OperationalNoise,
    SourceNoise,
    compose_noise,
    noise_from_power,
    qx_from_visibility,
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologyConfig(_Section):
    """Star network; Alice sits at the source unless ``alice_km`` > 0"""
    bob_km: List[float] = Field(default_factory=lambda: list(FINITE_KEY_TOPOLOGY), min_length=2)
    alice_km: float = Field(0.0, ge=0.0)
    atten_db_per_km: float = Field(FITTED_ATTEN_DB_PER_KM, ge=0.0)
    coupling_loss_db: float = Field(FITTED_COUPLING_LOSS_DB, ge=0.0)
    base_rate_hz: float = Field(ZERO_LOSS_RATE_HZ, gt=0.0)
    rate_hz: Optional[float] = Field(None, gt=0.0, description="Measured g_R overriding the loss model")

    @field_validator("bob_km")
    @classmethod
    def _non_negative(cls, value: List[float]) -> List[float]:
        if any(d < 0 for d in value):
            raise ValueError("fibre lengths must be >= 0")
        return value

    @property
    def n_parties(self) -> int:
        return len(self.bob_km) + 1


class NoiseConfig(_Section):
    """
    Noise source

    ``operational`` uses q_x / q_ab directly, ``power`` evaluates the
    linear pump-power trend, ``visibility`` derives Q_X from the
    interference visibility. Optional link depolarization is composed
    on top of any of them.
    """
    mode: Literal["operational", "power", "visibility"] = "operational"
    q_x: float = Field(REFERENCE_QX, ge=0.0, le=0.5)
    q_ab: Optional[List[float]] = None
    pump_power_mW: float = Field(OPERATING_POWER_MW, ge=0.0)
    qx_slope: float = Field(DEFAULT_QX_SLOPE_PER_MW, ge=0.0)
    qx_intercept: float = Field(ZERO_POWER_QX, ge=0.0, le=0.5)
    qber_slope: float = Field(DEFAULT_QBER_SLOPE_PER_MW, ge=0.0)
    visibility: float = Field(INTERFERENCE_VISIBILITY, ge=0.0, le=1.0)
    link_p_A: Optional[float] = Field(None, ge=0.0, le=1.0)
    link_p_B: Optional[List[float]] = None

    @field_validator("q_ab", "link_p_B")
    @classmethod
    def _probabilities(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(not 0.0 <= q <= 1.0 for q in value):
            raise ValueError("probabilities must lie in [0, 1]")
        return value

    def operational(self, n_bobs: int) -> OperationalNoise:
        if self.mode == "power":
            source = SourceNoise(
                qx_slope=self.qx_slope,
                qber_slope=self.qber_slope,
                qx_intercept=self.qx_intercept,
                pump_power_mW=self.pump_power_mW,
            )
            noise = noise_from_power(source, n_bobs)
        else:
            q_x = qx_from_visibility(self.visibility) if self.mode == "visibility" else self.q_x
            q_ab = self.q_ab if self.q_ab is not None else [REFERENCE_QBER] * n_bobs
            if len(q_ab) != n_bobs:
                raise ConfigurationError(
                    "noise.q_ab must list one value per Bob",
                    {"q_ab": q_ab, "bobs": n_bobs}
                )
            noise = OperationalNoise(q_x=q_x, q_ab=tuple(q_ab))

        if self.link_p_A is not None or self.link_p_B is not None:
            links = DepolarizingParams(
                p_A=self.link_p_A or 0.0,
                p_B=tuple(self.link_p_B) if self.link_p_B is not None else (0.0,) * n_bobs,
            )
            noise = compose_noise(noise, links)
        return noise


class SwitchingConfig(_Section):
    enabled: bool = True
    tau_s: float = Field(DEFAULT_SWITCHING_TIME_S, ge=0.0)


class DriftConfig(_Section):
    drift_rate: float = Field(0.0, ge=0.0, description="Added QBER per hour of active time")
    correction_period_s: float = Field(DEFAULT_CORRECTION_PERIOD_S, ge=0.0)
    correction_dead_time_s: float = Field(DEFAULT_CORRECTION_DEAD_TIME_S, ge=0.0)


class ProtocolConfig(_Section):
    """Session length (exactly one of rounds / duration_s) and distillation policy"""
    rounds: Optional[int] = Field(None, ge=1)
    duration_s: Optional[float] = Field(None, gt=0.0)
    p: float = Field(DEFAULT_TYPE2_PROBABILITY, gt=0.0, lt=1.0)
    deterministic_m: bool = False
    parties: Optional[List[str]] = None
    block_length: int = Field(TEST_BLOCK_LENGTH, ge=8)
    max_iterations: int = Field(50, ge=1)
    require_key_growing: bool = True
    rate_thresholds: Optional[Path] = None
    code_cache_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _one_length(self) -> "ProtocolConfig":
        if (self.rounds is None) == (self.duration_s is None):
            raise ValueError("set exactly one of protocol.rounds and protocol.duration_s")
        return self

    @field_validator("rate_thresholds")
    @classmethod
    def _exists(cls, value: Optional[Path]) -> Optional[Path]:
        if value is not None and not value.is_file():
            raise ValueError(f"file not found: {value}")
        return value

    @field_validator("parties")
    @classmethod
    def _unique(cls, value: Optional[List[str]]) -> Optional[List[str]]:
        if value is not None and len(set(value)) != len(value):
            raise ValueError("party names must be unique")
        return value


class BudgetConfig(_Section):
    eps_tot: float = Field(REFERENCE_EPS_TOT, gt=0.0, lt=1.0)
    eps_EC: float = Field(REFERENCE_EPS_EC, gt=0.0, lt=1.0)
    eps_PA: float = Field(REFERENCE_EPS_PA, gt=0.0, lt=1.0)
    x_share: float = Field(0.5, gt=0.0, lt=1.0)
    optimize: bool = False

    @model_validator(mode="after")
    def _room_for_estimation(self) -> "BudgetConfig":
        if self.eps_EC + self.eps_PA >= self.eps_tot:
            raise ValueError("eps_EC + eps_PA must be below eps_tot")
        return self


class SweepConfig(_Section):
    l_values: List[int] = Field(
        default_factory=lambda: [10**5, 3 * 10**5, 10**6, 3 * 10**6, 10**7]
    )
    realized: bool = True
    surface_c: List[float] = Field(default_factory=lambda: [0.3, 0.9, 1.5, 2.1])
    grid_step: float = Field(0.01, gt=0.0, le=0.5)

    @field_validator("l_values")
    @classmethod
    def _ascending(cls, value: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(value, value[1:])) or any(v < 1 for v in value):
            raise ValueError("sweep.l_values must be positive and strictly ascending")
        return value

    @field_validator("surface_c")
    @classmethod
    def _total_noise(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= c <= 3.0 for c in value):
            raise ValueError("surface_c values must lie in [0, 3]")
        return value


class OutputConfig(_Section):
    directory: Path = Field(default_factory=lambda: settings.output_dir)
    report_name: str = "report.json"
    gnuplot: bool = True


class ExperimentConfig(_Section):
    """One experiment: everything a CLI run needs"""
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    switching: SwitchingConfig = Field(default_factory=SwitchingConfig)
    drift: DriftConfig = Field(default_factory=DriftConfig)
    protocol: ProtocolConfig = Field(default_factory=lambda: ProtocolConfig(rounds=10**5))
    budget: BudgetConfig = Field(default_factory=BudgetConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0)

    @model_validator(mode="after")
    def _party_count(self) -> "ExperimentConfig":
        n = self.topology.n_parties
        if self.protocol.parties is not None and len(self.protocol.parties) != n:
            raise ValueError(f"protocol.parties must name {n} parties")
        if self.noise.link_p_B is not None and len(self.noise.link_p_B) != n - 1:
            raise ValueError("noise.link_p_B must list one value per Bob")
        return self

    @property
    def n_parties(self) -> int:
        return self.topology.n_parties

    def config_hash(self) -> str:
        """Stable short hash of the validated configuration"""
        canonical = self.model_dump_json(exclude={"output"})
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _parse_override_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply ``section.key=value`` overrides (values parsed as TOML literals)

    Raises:
        ConfigurationError: On a malformed override
    """
    for item in overrides:
        path, sep, raw = item.partition("=")
        if not sep or not path.strip():
            raise ConfigurationError(f"override must look like section.key=value: {item!r}")
        keys = [k.strip() for k in path.split(".")]
        node = data
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"override path crosses a value: {path}")
            node = child
        node[keys[-1]] = _parse_override_value(raw.strip())
    return data


def load_config(path: Optional[Path] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """
    Read and validate an experiment configuration

    Args:
        path: TOML file; None starts from the built-in defaults
        overrides: Dotted ``section.key=value`` overrides

    Raises:
        ConfigurationError: Missing/unreadable file or schema violation
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}", {"path": str(path)})
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigurationError(f"Cannot read config {path}: {e}", {"path": str(path)})

    apply_overrides(data, overrides)
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        errors = [
            {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
            for err in e.errors()
        ]
        raise ConfigurationError("Invalid experiment configuration", {"errors": errors})


class RunMetadata(BaseModel):
    command: str
    seed: int
    config_hash: str
    version: str
    parties: List[str] = Field(default_factory=list)


class Report(BaseModel):
    """
    Machine-readable run report

    Sections hold plain dicts produced by the services; ``timing`` is
    only filled when timing is requested so reports stay byte-identical
    across runs.
    """
    metadata: RunMetadata
    session: Optional[Dict[str, Any]] = None
    estimate: Optional[Dict[str, Any]] = None
    code: Optional[Dict[str, Any]] = None
    leakage: Optional[Dict[str, Any]] = None
    rates: Optional[Dict[str, Any]] = None
    key: Optional[Dict[str, Any]] = None
    results: Optional[Any] = None
    warnings: List[str] = Field(default_factory=list)
    timing: Optional[Dict[str, Any]] = None

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True)
