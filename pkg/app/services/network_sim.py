"""
Star-network simulator

Fibre loss to four-photon generation rate, the active-switching
penalty, a linear polarization-drift ramp with periodic correction,
and whole measurement sessions.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from app.constants import (
    DEFAULT_CORRECTION_DEAD_TIME_S,
    DEFAULT_CORRECTION_PERIOD_S,
    DEFAULT_SWITCHING_TIME_S,
    DEFAULT_TYPE2_PROBABILITY,
    FITTED_ATTEN_DB_PER_KM,
    FITTED_COUPLING_LOSS_DB,
    LOG_SESSION_COMPLETE,
    LOG_SESSION_START,
    SECONDS_PER_HOUR,
    ZERO_LOSS_RATE_HZ,
)
from app.core.exceptions import ValidationError
from app.models.rounds import RoundLedger
from app.services import protocol
from app.services.noise_model import OperationalNoise
from app.utils.logging import get_logger, log_execution_time
from app.utils.validation import validate_count, validate_probability

logger = get_logger(__name__)


@dataclass(frozen=True)
class Topology:
    """
    Star network, Alice's link first

    Coupling loss is charged once per spooled link (fibre length > 0);
    the patch cords of an unspooled link are part of ``base_rate_hz``.
    """
    fiber_km: Tuple[float, ...]
    atten_db_per_km: float = FITTED_ATTEN_DB_PER_KM
    coupling_loss_db: float = FITTED_COUPLING_LOSS_DB
    base_rate_hz: float = ZERO_LOSS_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "fiber_km", tuple(float(d) for d in self.fiber_km))
        if len(self.fiber_km) < 2:
            raise ValidationError("a star needs at least two users")
        if any(d < 0 for d in self.fiber_km):
            raise ValidationError("fibre lengths must be >= 0", {"fiber_km": self.fiber_km})
        if self.atten_db_per_km < 0 or self.coupling_loss_db < 0:
            raise ValidationError("loss coefficients must be >= 0")
        if self.base_rate_hz <= 0:
            raise ValidationError("base_rate_hz must be > 0", {"base_rate_hz": self.base_rate_hz})

    @property
    def n_parties(self) -> int:
        return len(self.fiber_km)

    @classmethod
    def from_bob_lengths(cls, bob_km: Sequence[float], **kwargs) -> "Topology":
        """Build from the {d1, d2, d3} notation (Alice on the server side)"""
        return cls(fiber_km=(0.0, *bob_km), **kwargs)


@dataclass(frozen=True)
class SwitchingModel:
    tau_s: float = DEFAULT_SWITCHING_TIME_S
    p_type2: float = DEFAULT_TYPE2_PROBABILITY

    def __post_init__(self):
        if self.tau_s < 0:
            raise ValidationError("tau_s must be >= 0", {"tau_s": self.tau_s})
        validate_probability(self.p_type2, "p_type2", open_low=True, open_high=True)


@dataclass(frozen=True)
class DriftModel:
    """
    Linear QBER ramp per link, reset by a correction every
    ``correction_period_s`` of active time. Each correction costs
    ``correction_dead_time_s`` of collection time.
    """
    drift_rate: float = 0.0
    correction_period_s: float = DEFAULT_CORRECTION_PERIOD_S
    correction_dead_time_s: float = DEFAULT_CORRECTION_DEAD_TIME_S

    def __post_init__(self):
        if min(self.drift_rate, self.correction_period_s, self.correction_dead_time_s) < 0:
            raise ValidationError("drift parameters must be >= 0")

    @property
    def enabled(self) -> bool:
        return self.drift_rate > 0 and self.correction_period_s > 0

    def inflation(self, active_time_s: np.ndarray) -> np.ndarray:
        """Added QBER at each active time (sawtooth)"""
        if not self.enabled:
            return np.zeros_like(np.asarray(active_time_s, dtype=float))
        phase = np.mod(active_time_s, self.correction_period_s)
        return self.drift_rate * phase / SECONDS_PER_HOUR

    def mean_inflation(self) -> float:
        """Average added QBER over one correction period"""
        if not self.enabled:
            return 0.0
        return self.drift_rate * (self.correction_period_s / SECONDS_PER_HOUR) / 2.0

    def corrections_in(self, duration_s: float) -> int:
        """Correction events that fit in a wall-clock duration"""
        if not self.enabled:
            return 0
        return int(duration_s // (self.correction_period_s + self.correction_dead_time_s))


@dataclass
class SessionResult:
    """Outcome of one simulated collection session"""
    ledger: Optional[RoundLedger]
    expected_rounds: float
    rate_hz: float
    duration_s: float
    effective_duration_s: float
    n_corrections: int
    seed: int
    metadata: Dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.ledger is None

    def summary(self) -> Dict:
        return {
            "rounds": 0 if self.ledger is None else self.ledger.L,
            "type2_rounds": 0 if self.ledger is None else self.ledger.schedule.m,
            "expected_rounds": self.expected_rounds,
            "rate_hz": self.rate_hz,
            "duration_s": self.duration_s,
            "effective_duration_s": self.effective_duration_s,
            "n_corrections": self.n_corrections,
            "empty": self.empty,
            **self.metadata,
        }


def link_loss_db(t: Topology) -> Tuple[float, ...]:
    return tuple(
        d * t.atten_db_per_km + (t.coupling_loss_db if d > 0 else 0.0)
        for d in t.fiber_km
    )


def total_loss_db(t: Topology) -> float:
    """Sum of per-link fibre and coupling loss"""
    return float(sum(link_loss_db(t)))


def rate_at_loss(loss_db: float, base_rate_hz: float = ZERO_LOSS_RATE_HZ) -> float:
    return base_rate_hz * 10.0 ** (-loss_db / 10.0)


def generation_rate(t: Topology) -> float:
    """Four-photon coincidence rate g_R"""
    return rate_at_loss(total_loss_db(t), t.base_rate_hz)


def adjusted_rate(g_r: float, s: SwitchingModel) -> float:
    """Lower bound on the actively switched rate, 1 / (tau_s p + (1-p)/g_r)"""
    if g_r <= 0:
        raise ValidationError("g_r must be > 0", {"g_r": g_r})
    return 1.0 / (s.tau_s * s.p_type2 + (1.0 - s.p_type2) / g_r)


def session_rate(g_r: float, s: Optional[SwitchingModel]) -> float:
    """Collection rate used for sessions, never above the passive rate"""
    if s is None:
        return g_r
    return min(g_r, adjusted_rate(g_r, s))


def simulate_switching_ratio(
    g_r: float,
    s: SwitchingModel,
    rounds: int,
    rng: np.random.Generator,
) -> float:
    """
    Monte-Carlo g'_R / g_R of an actively switched run

    Detections arrive as a Poisson process at ``g_r``. Entering the X
    basis from a Z round costs ``tau_s`` in place of an arrival wait;
    consecutive X rounds need no switch and wait for a normal arrival.
    ``tau_s`` covers the excursion into X and back, so the return to Z
    is not charged again. This is the accounting behind
    ``adjusted_rate``, which charges one ``tau_s`` per X round.
    """
    if g_r <= 0:
        raise ValidationError("g_r must be > 0", {"g_r": g_r})
    rounds = validate_count(rounds, "rounds")

    is_x = rng.random(rounds) < s.p_type2
    waits = rng.exponential(1.0 / g_r, size=rounds)
    previous_x = np.concatenate(([False], is_x[:-1]))
    switched = is_x & ~previous_x
    elapsed = float(np.sum(np.where(switched, s.tau_s, waits)))
    return (rounds / elapsed) / g_r


def required_duration(target_rounds: float, rate_hz: float) -> float:
    """Seconds of collection for an expected ``target_rounds``"""
    if rate_hz <= 0:
        raise ValidationError("rate_hz must be > 0", {"rate_hz": rate_hz})
    if target_rounds < 0:
        raise ValidationError("target_rounds must be >= 0")
    return target_rounds / rate_hz


def expected_rounds(
    t: Topology,
    s: Optional[SwitchingModel],
    d: DriftModel,
    duration_s: float,
    rate_hz: Optional[float] = None,
) -> Tuple[float, float, int]:
    """
    Poisson mean of the session length

    Returns:
        (expected rounds, effective duration s, correction count)
    """
    rate = rate_hz if rate_hz is not None else session_rate(generation_rate(t), s)
    n_corrections = d.corrections_in(duration_s)
    effective = max(0.0, duration_s - n_corrections * d.correction_dead_time_s)
    return rate * effective, effective, n_corrections


@log_execution_time(logger)
def run_session(
    t: Topology,
    s: SwitchingModel,
    d: DriftModel,
    duration_s: float,
    noise: OperationalNoise,
    rng: np.random.Generator,
    party_names: Optional[Sequence[str]] = None,
    rate_hz: Optional[float] = None,
    exact_rounds: Optional[int] = None,
    deterministic_m: bool = False,
) -> SessionResult:
    """
    Simulate one collection session

    Draws L ~ Poisson(rate * effective duration) (or uses
    ``exact_rounds``), builds the schedule with probability
    ``s.p_type2`` and samples outcomes with drift-inflated Q_AB_i.

    Args:
        t: Network topology
        s: Switching model (its p_type2 is the schedule probability)
        d: Drift model
        duration_s: Wall-clock duration of the session
        noise: Operational noise at the start of every correction period
        rng: Session random stream
        party_names: Optional party names
        rate_hz: Override of the modelled rate (e.g. a measured g_R)
        exact_rounds: Deterministic L instead of a Poisson draw
        deterministic_m: Place exactly round(p*L) type-2 rounds

    Returns:
        SessionResult; ``ledger`` is None for an empty session
    """
    if duration_s <= 0:
        raise ValidationError("duration_s must be > 0", {"duration_s": duration_s})
    if t.n_parties != noise.n_parties:
        raise ValidationError(
            "topology and noise disagree on party count",
            {"topology": t.n_parties, "noise": noise.n_parties}
        )

    mean_rounds, effective, n_corrections = expected_rounds(t, s, d, duration_s, rate_hz)
    rate = rate_hz if rate_hz is not None else session_rate(generation_rate(t), s)
    schedule_seed = int(rng.integers(0, 2**63 - 1))

    logger.info(
        LOG_SESSION_START,
        duration_s=duration_s,
        rate_hz=round(rate, 6),
        expected_rounds=round(mean_rounds, 2),
        corrections=n_corrections,
    )

    L = int(exact_rounds) if exact_rounds is not None else int(rng.poisson(mean_rounds))
    result = SessionResult(
        ledger=None,
        expected_rounds=mean_rounds,
        rate_hz=rate,
        duration_s=duration_s,
        effective_duration_s=effective,
        n_corrections=n_corrections,
        seed=schedule_seed,
    )
    if L <= 0:
        logger.warning("Empty session", expected_rounds=mean_rounds)
        return result

    schedule = protocol.make_schedule(L, s.p_type2, schedule_seed, deterministic_m=deterministic_m)

    q_ab_per_round = None
    if d.enabled:
        arrival_times = np.sort(rng.uniform(0.0, effective, size=L))
        inflation = d.inflation(arrival_times)
        q_ab_per_round = np.asarray(noise.q_ab, dtype=float)[:, None] + inflation[None, :]
        result.metadata["mean_qber_inflation"] = float(np.mean(inflation))

    result.ledger = protocol.build_ledger(schedule, noise, rng, party_names, q_ab_per_round)
    logger.info(LOG_SESSION_COMPLETE, rounds=L, type2_rounds=schedule.m)
    return result
