"""
Noise Model

Maps physical noise descriptions (link depolarization, interference
visibility, pump power) to the operational error probabilities the
protocol measures, and samples per-party outcomes with exactly those
statistics.

Outcome convention: bit 0 is the +1 eigenvalue ("+" in the X basis,
|0> in the Z basis), bit 1 is the -1 eigenvalue. An X-round has no
error when the N-party parity is even.
"""
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np

from app.constants import (
    DEFAULT_QBER_SLOPE_PER_MW,
    DEFAULT_QX_SLOPE_PER_MW,
    INTERFERENCE_VISIBILITY,
    OPERATING_POWER_MW,
    ZERO_POWER_QX,
)
from app.core.exceptions import ValidationError
from app.utils.validation import validate_probability


class RoundType(IntEnum):
    """Measurement basis of a round (also the schedule flag value)"""
    Z_ROUND = 0
    X_ROUND = 1


@dataclass(frozen=True)
class DepolarizingParams:
    """Per-link depolarizing strengths, Alice first"""
    p_A: float
    p_B: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p_B", tuple(float(p) for p in self.p_B))
        validate_probability(self.p_A, "p_A")
        if len(self.p_B) < 1:
            raise ValidationError("p_B needs at least one Bob")
        for i, p in enumerate(self.p_B):
            validate_probability(p, f"p_B[{i}]")

    @property
    def n_parties(self) -> int:
        return len(self.p_B) + 1

    @classmethod
    def identity(cls, n_bobs: int) -> "DepolarizingParams":
        return cls(p_A=0.0, p_B=(0.0,) * n_bobs)


@dataclass(frozen=True)
class SourceNoise:
    """
    Phenomenological source model

    ``t_interference`` is the effective two-photon interference
    visibility. Q_X grows affinely with pump power from
    ``qx_intercept``; QBER grows through the origin.
    """
    t_interference: float = INTERFERENCE_VISIBILITY
    qx_slope: float = DEFAULT_QX_SLOPE_PER_MW
    qber_slope: float = DEFAULT_QBER_SLOPE_PER_MW
    qx_intercept: float = ZERO_POWER_QX
    pump_power_mW: float = OPERATING_POWER_MW

    def __post_init__(self):
        validate_probability(self.t_interference, "t_interference")
        validate_probability(self.qx_intercept, "qx_intercept", high=0.5)
        if self.qx_slope < 0 or self.qber_slope < 0:
            raise ValidationError("power slopes must be >= 0")
        if self.pump_power_mW < 0:
            raise ValidationError("pump_power_mW must be >= 0")

    @property
    def visibility_qx(self) -> float:
        """Q_X implied by the interference visibility alone"""
        return qx_from_visibility(self.t_interference)


@dataclass(frozen=True)
class OperationalNoise:
    """Error probabilities the protocol observes: Q_X and Q_AB_i per Bob"""
    q_x: float
    q_ab: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "q_ab", tuple(float(q) for q in self.q_ab))
        validate_probability(self.q_x, "q_x", high=0.5)
        if not self.q_ab:
            raise ValidationError("q_ab needs at least one Bob")
        for i, q in enumerate(self.q_ab):
            validate_probability(q, f"q_ab[{i}]", high=0.5)

    def qber(self) -> float:
        return max(self.q_ab)

    @property
    def n_parties(self) -> int:
        return len(self.q_ab) + 1

    @classmethod
    def noiseless(cls, n_bobs: int) -> "OperationalNoise":
        return cls(q_x=0.0, q_ab=(0.0,) * n_bobs)


def _link_shrink(d: DepolarizingParams) -> float:
    """Product of Pauli-expectation shrink factors over all N links"""
    shrink = 1.0 - d.p_A
    for p in d.p_B:
        shrink *= 1.0 - p
    return shrink


def expected_qx_depol(d: DepolarizingParams) -> float:
    """
    Q_X of a GHZ state after independent depolarizing links

    Each link shrinks <X^{\\otimes N}> by (1 - p_i), so
    Q_X = (1 - (1 - p_A) * prod_i (1 - p_Bi)) / 2.
    """
    return (1.0 - _link_shrink(d)) / 2.0


def expected_qber_depol(d: DepolarizingParams, i: int) -> float:
    """Q_AB_i depends only on Alice's and Bob_i's links"""
    if not 0 <= i < len(d.p_B):
        raise ValidationError(f"Bob index {i} out of range", {"n_bobs": len(d.p_B)})
    return (1.0 - (1.0 - d.p_A) * (1.0 - d.p_B[i])) / 2.0


def qx_from_visibility(t: float) -> float:
    """Q_X of rho_o = t*rho_s + (1-t)*rho_f"""
    t = validate_probability(t, "t")
    return (1.0 - t) / 2.0


def noise_from_power(s: SourceNoise, n_bobs: int = 3) -> OperationalNoise:
    """Evaluate the linear power trend at ``s.pump_power_mW``"""
    power = s.pump_power_mW
    q_x = float(np.clip(s.qx_intercept + s.qx_slope * power, 0.0, 0.5))
    q_ab = float(np.clip(s.qber_slope * power, 0.0, 0.5))
    return OperationalNoise(q_x=q_x, q_ab=(q_ab,) * n_bobs)


def compose_noise(source: OperationalNoise, links: DepolarizingParams) -> OperationalNoise:
    """
    Serially compose source imperfection with link depolarization

    Uses (1 - 2 q_out) = (1 - 2 q_src) * prod(link shrink factors).
    """
    if len(source.q_ab) != len(links.p_B):
        raise ValidationError(
            "source and links disagree on party count",
            {"source_bobs": len(source.q_ab), "link_bobs": len(links.p_B)}
        )
    q_x = (1.0 - (1.0 - 2.0 * source.q_x) * _link_shrink(links)) / 2.0
    q_ab = tuple(
        (1.0 - (1.0 - 2.0 * q_src) * ((1.0 - links.p_A) * (1.0 - p_b))) / 2.0
        for q_src, p_b in zip(source.q_ab, links.p_B)
    )
    return OperationalNoise(q_x=q_x, q_ab=q_ab)


def qber_symmetric_minimum(c: float, n_bobs: int) -> float:
    """
    Smallest achievable max_i Q_AB_i when Bob links share total noise ``c``

    With p_A = 0, max_i p_Bi / 2 is minimized by the even split.
    """
    if n_bobs < 1:
        raise ValidationError("n_bobs must be >= 1")
    if not 0.0 <= c <= n_bobs:
        raise ValidationError(f"total noise c must be in [0, {n_bobs}]", {"c": c})
    return c / n_bobs / 2.0


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def depol_channel(rho: np.ndarray, p: float) -> np.ndarray:
    """Single-qubit depolarizing map (1 - 3p/4) rho + (p/4)(X rho X + Y rho Y + Z rho Z)"""
    p = validate_probability(p, "p")
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValidationError("rho must be a 2x2 density matrix", {"shape": rho.shape})
    twirl = sum(P @ rho @ P for P in (_PAULI_X, _PAULI_Y, _PAULI_Z))
    return (1.0 - 3.0 * p / 4.0) * rho + (p / 4.0) * twirl


def sample_round(
    noise: OperationalNoise,
    round_type: RoundType,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample one round's N outcome bits

    Z-round: Bob_i = Alice XOR Bernoulli(q_ab_i).
    X-round: uniform bits whose parity is Bernoulli(q_x).
    """
    n = noise.n_parties
    if round_type == RoundType.Z_ROUND:
        alice = rng.integers(0, 2, dtype=np.uint8)
        flips = (rng.random(n - 1) < np.asarray(noise.q_ab)).astype(np.uint8)
        return np.concatenate(([alice], alice ^ flips)).astype(np.uint8)

    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    odd = np.uint8(rng.random() < noise.q_x)
    bits[-1] = np.bitwise_xor.reduce(bits[:-1]) ^ odd
    return bits


def sample_rounds(
    noise: OperationalNoise,
    flags: np.ndarray,
    rng: np.random.Generator,
    q_ab_per_round: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized sampling of a whole schedule

    Args:
        noise: Operational noise
        flags: Length-L schedule flags (1 = X-round)
        rng: Random stream
        q_ab_per_round: Optional (N-1, L) per-round Z error probabilities
            (drift); defaults to ``noise.q_ab`` for every round

    Returns:
        (outcomes of shape (N, L), phase_errors of length L). The phase
        error on a Z-round is what an X measurement would have shown;
        it is simulator-only information.
    """
    flags = np.asarray(flags, dtype=np.uint8)
    L = flags.size
    n = noise.n_parties

    if q_ab_per_round is None:
        q_ab = np.asarray(noise.q_ab, dtype=float)[:, None]
    else:
        q_ab = np.clip(np.asarray(q_ab_per_round, dtype=float), 0.0, 0.5)
        if q_ab.shape != (n - 1, L):
            raise ValidationError("q_ab_per_round must have shape (N-1, L)", {"shape": q_ab.shape})

    alice = rng.integers(0, 2, size=L, dtype=np.uint8)
    z_flips = (rng.random((n - 1, L)) < q_ab).astype(np.uint8)
    x_bits = rng.integers(0, 2, size=(n, L), dtype=np.uint8)
    phase_errors = (rng.random(L) < noise.q_x).astype(np.uint8)

    z_outcomes = np.vstack([alice[None, :], alice[None, :] ^ z_flips])
    x_bits[-1] = np.bitwise_xor.reduce(x_bits[:-1], axis=0) ^ phase_errors

    outcomes = np.where(flags[None, :] == RoundType.X_ROUND, x_bits, z_outcomes).astype(np.uint8)
    return outcomes, phase_errors


def noise_for_parties(noise: OperationalNoise, party_names: Sequence[str]) -> None:
    """Check that a noise model matches a party list"""
    if noise.n_parties != len(party_names):
        raise ValidationError(
            "noise model and party list disagree",
            {"noise_parties": noise.n_parties, "party_names": list(party_names)}
        )
