"""
N-BB84 round protocol

Schedule generation and compression, outcome bookkeeping, parameter
estimation on disclosed rounds and sifting of the raw key.
"""
from typing import List, Optional, Sequence, Union

import numpy as np

from app.constants import DEFAULT_PARTY_NAMES, LOG_ESTIMATE_COMPLETE
from app.core.exceptions import InsufficientRoundsError, ValidationError
from app.models.rounds import ParamEstimate, RawKey, RoundLedger, Schedule
from app.services.impl.arithmetic_codec import ArithmeticScheduleCodec
from app.services.interfaces.schedule_codec import CompressedSchedule, IScheduleCodec
from app.services.noise_model import OperationalNoise, sample_rounds
from app.utils.logging import get_logger
from app.utils.validation import validate_count, validate_probability

logger = get_logger(__name__)

_default_codec: IScheduleCodec = ArithmeticScheduleCodec()

RngLike = Union[int, np.random.Generator]


def _as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def default_party_names(n_parties: int) -> List[str]:
    if n_parties == len(DEFAULT_PARTY_NAMES):
        return list(DEFAULT_PARTY_NAMES)
    return ["Alice"] + [f"Bob{i}" for i in range(1, n_parties)]


def make_schedule(L: int, p: float, seed: int, deterministic_m: bool = False) -> Schedule:
    """
    Draw the round-type schedule

    Flags are i.i.d. Bernoulli(p). With ``deterministic_m`` exactly
    round(p*L) type-2 rounds are placed uniformly at random instead.
    A schedule with no type-2 round is returned and logged; estimation
    will refuse it.
    """
    L = validate_count(L, "L")
    p = validate_probability(p, "p", open_low=True, open_high=True)
    rng = np.random.default_rng(seed)

    if deterministic_m:
        flags = np.zeros(L, dtype=np.uint8)
        m = int(round(p * L))
        flags[rng.choice(L, size=m, replace=False)] = 1
    else:
        flags = (rng.random(L) < p).astype(np.uint8)

    schedule = Schedule(L=L, p=p, type_flags=flags, seed=int(seed))
    if not schedule.has_test_rounds:
        logger.warning("Schedule has no type-2 rounds", L=L, p=p, seed=int(seed))
    return schedule


def compress_schedule(s: Schedule, codec: Optional[IScheduleCodec] = None) -> CompressedSchedule:
    """Entropy-code the schedule; ``charged_bits`` is the pre-shared key cost"""
    return (codec or _default_codec).encode(s)


def decompress_schedule(
    data: Union[bytes, CompressedSchedule],
    L: Optional[int] = None,
    codec: Optional[IScheduleCodec] = None,
) -> Schedule:
    """Inverse of :func:`compress_schedule`; corrupt frames raise ScheduleDecodeError"""
    frame = data if isinstance(data, CompressedSchedule) else CompressedSchedule.from_bytes(data)
    return (codec or _default_codec).decode(frame, L)


def build_ledger(
    schedule: Schedule,
    noise: OperationalNoise,
    rng: np.random.Generator,
    party_names: Optional[Sequence[str]] = None,
    q_ab_per_round: Optional[np.ndarray] = None,
) -> RoundLedger:
    """Measure every round of ``schedule`` under ``noise``"""
    names = list(party_names) if party_names else default_party_names(noise.n_parties)
    if len(names) != noise.n_parties:
        raise ValidationError(
            "party list does not match the noise model",
            {"parties": len(names), "noise_parties": noise.n_parties}
        )
    outcomes, phase_errors = sample_rounds(noise, schedule.type_flags, rng, q_ab_per_round)
    return RoundLedger(
        schedule=schedule,
        outcomes=outcomes,
        party_names=names,
        phase_errors=phase_errors,
    )


def estimate_params(ledger: RoundLedger, rng: RngLike) -> ParamEstimate:
    """
    Estimate error rates from announced rounds

    A uniformly random m-subset of type-1 rounds is disclosed, drawn
    from ``rng`` (a public seed shared by all parties). Q_AB_i^m is
    Alice/Bob_i disagreement on that subset; Q_X^m is the fraction of
    type-2 rounds with odd N-party parity.
    """
    type1 = ledger.type1_indices()
    type2 = ledger.type2_indices()
    m = type2.size

    if m < 1:
        raise InsufficientRoundsError("no type-2 rounds to estimate Q_X", {"L": ledger.L})
    if type1.size < m:
        raise InsufficientRoundsError(
            "fewer type-1 rounds than type-2 rounds",
            {"type1": int(type1.size), "m": int(m)}
        )

    disclosed = np.sort(_as_generator(rng).choice(type1, size=m, replace=False))

    outcomes = ledger.outcomes
    alice = outcomes[0, disclosed]
    q_ab_m = tuple(
        float(np.count_nonzero(outcomes[i, disclosed] != alice)) / m
        for i in range(1, ledger.n_parties)
    )
    parity = np.bitwise_xor.reduce(outcomes[:, type2], axis=0)
    q_x_m = float(np.count_nonzero(parity)) / m

    estimate = ParamEstimate(
        q_ab_m=q_ab_m,
        q_x_m=q_x_m,
        qber_m=max(q_ab_m),
        m=int(m),
        n=ledger.L - 2 * int(m),
        disclosed_type1_indices=disclosed,
    )
    logger.info(LOG_ESTIMATE_COMPLETE, **estimate.summary())
    return estimate


def key_indices(ledger: RoundLedger, est: ParamEstimate) -> np.ndarray:
    """Type-1 rounds that were not disclosed, in round order"""
    return np.setdiff1d(ledger.type1_indices(), est.disclosed_type1_indices, assume_unique=True)


def sift(ledger: RoundLedger, est: ParamEstimate) -> RawKey:
    """Keep undisclosed type-1 outcomes for every party"""
    if est.L != ledger.L:
        raise ValidationError("estimate was not produced from this ledger", {"L": ledger.L, "est_L": est.L})
    indices = key_indices(ledger, est)
    return RawKey(
        bits=ledger.outcomes[:, indices],
        indices=indices,
        party_names=list(ledger.party_names),
    )


def key_phase_error_rate(ledger: RoundLedger, est: ParamEstimate) -> float:
    """
    Q_X^n on the key rounds (simulator-only ground truth)

    Raises:
        ValidationError: If the ledger carries no phase-error record
    """
    if ledger.phase_errors is None:
        raise ValidationError("ledger has no simulator phase-error record")
    indices = key_indices(ledger, est)
    if indices.size == 0:
        return 0.0
    return float(np.count_nonzero(ledger.phase_errors[indices])) / indices.size
