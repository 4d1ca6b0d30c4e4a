"""
Conference Key Service

Runs one experiment end to end. Collaborators (classical channel,
code library, rate table) are injected; random streams are spawned
from the experiment seed so runs are reproducible.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from app.constants import LOG_ABORT
from app.core.exceptions import (
    ConferenceKeyError,
    InfeasibleKeyError,
    VerificationError,
)
from app.models.keys import ConferenceKey
from app.models.rounds import ParamEstimate, RoundLedger
from app.models.schemas import ExperimentConfig
from app.services import protocol
from app.services.impl.in_memory_channel import InMemoryChannel
from app.services.impl.toeplitz import ToeplitzSeed
from app.services.interfaces.channel import IClassicalChannel
from app.services.keyrate import (
    FiniteKeyResult,
    LeakageMode,
    RateInputs,
    SecurityBudget,
    akr,
    finite_key_length,
    optimize_budget,
)
from app.services.network_sim import (
    DriftModel,
    SessionResult,
    SwitchingModel,
    Topology,
    generation_rate,
    run_session,
    session_rate,
    total_loss_db,
)
from app.services.noise_model import OperationalNoise
from app.services.postprocess import (
    MIN_CHANNEL_CROSSOVER,
    CodeLibrary,
    CodeRateTable,
    CorrectionResult,
    VerificationResult,
    correct_all,
    default_rate_table,
    deduct_preshared,
    preshared_cost,
    privacy_amplify,
    verify,
)
from app.utils.logging import get_logger
from app.utils.work_pool import spawn_generators

logger = get_logger(__name__)

# Independent streams spawned from the experiment seed
_STREAMS = ("session", "estimate", "verify", "extract")


@dataclass
class DistillationResult:
    """Everything produced after the ledger exists"""
    estimate: ParamEstimate
    schedule_cost_bits: int
    deduction_bits: int
    bound: FiniteKeyResult
    realized: FiniteKeyResult
    code: Dict[str, Any]
    correction: CorrectionResult
    verification: VerificationResult
    key: ConferenceKey
    preshared_refill: np.ndarray
    leakage: Dict[str, Any]
    warnings: List[str] = field(default_factory=list)

    @property
    def key_growing(self) -> bool:
        return self.preshared_refill.size == self.deduction_bits

    def rates(self) -> Dict[str, Any]:
        return {
            "akr": akr(min(self.estimate.q_x_m, 0.5), min(self.estimate.qber_m, 0.5)),
            "bound": self.bound.to_dict(),
            "realized": self.realized.to_dict(),
        }

    def key_summary(self) -> Dict[str, Any]:
        return {
            "length": self.key.length,
            "privacy_amplified_bits": self.key.length + int(self.preshared_refill.size),
            "preshared_refill_bits": int(self.preshared_refill.size),
            "deduction_bits": self.deduction_bits,
            "schedule_cost_bits": self.schedule_cost_bits,
            "key_growing": self.key_growing,
            "consistent": self.key.consistent,
            "security_label": self.key.security_label,
        }


class ConferenceKeyService:
    """
    Service for conference key experiments

    Handles the complete workflow:
    1. Session simulation (network model, schedule, outcomes)
    2. Parameter estimation on disclosed rounds
    3. Sifting and the finite-key bound
    4. Code-rate selection and one-to-many error correction
    5. Verification
    6. Privacy amplification and pre-shared deduction
    """

    def __init__(
        self,
        config: ExperimentConfig,
        channel: Optional[IClassicalChannel] = None,
        codes: Optional[CodeLibrary] = None,
        rate_table: Optional[CodeRateTable] = None,
    ):
        """
        Initialize conference key service

        Args:
            config: Validated experiment configuration
            channel: Public channel (a fresh in-memory channel by default)
            codes: LDPC code library
            rate_table: Code-rate thresholds
        """
        self.config = config
        self.channel = channel or InMemoryChannel()
        self.codes = codes or CodeLibrary(cache_dir=config.protocol.code_cache_dir)
        if rate_table is None:
            path = config.protocol.rate_thresholds
            rate_table = CodeRateTable.load(path) if path else default_rate_table()
        self.rate_table = rate_table
        self.streams = dict(zip(_STREAMS, spawn_generators(config.seed, len(_STREAMS))))
        self.party_names = config.protocol.parties or protocol.default_party_names(config.n_parties)
        self._budget: Optional[SecurityBudget] = None
        self._optimal_p = config.protocol.p

        logger.set_context(seed=config.seed, config_hash=config.config_hash())
        logger.debug("ConferenceKeyService initialized", parties=self.party_names)

    # -- models built from the configuration ----------------------------

    def topology(self) -> Topology:
        t = self.config.topology
        return Topology(
            fiber_km=(t.alice_km, *t.bob_km),
            atten_db_per_km=t.atten_db_per_km,
            coupling_loss_db=t.coupling_loss_db,
            base_rate_hz=t.base_rate_hz,
        )

    def noise(self) -> OperationalNoise:
        return self.config.noise.operational(self.config.n_parties - 1)

    def type2_probability(self) -> float:
        """Configured p, or p* when the budget is optimized"""
        if self.config.budget.optimize:
            self.budget()
            return self._optimal_p
        return self.config.protocol.p

    def switching(self, p: Optional[float] = None) -> SwitchingModel:
        """Passive basis choice is modelled as a zero switching time"""
        tau = self.config.switching.tau_s if self.config.switching.enabled else 0.0
        return SwitchingModel(tau_s=tau, p_type2=self.type2_probability() if p is None else p)

    def collection_rate(self, p: Optional[float] = None) -> float:
        """Rate sessions are collected at (measured g_R if configured)"""
        g_r = self.config.topology.rate_hz or generation_rate(self.topology())
        return session_rate(g_r, self.switching(p))

    def drift(self) -> DriftModel:
        d = self.config.drift
        return DriftModel(
            drift_rate=d.drift_rate,
            correction_period_s=d.correction_period_s,
            correction_dead_time_s=d.correction_dead_time_s,
        )

    def budget(self) -> SecurityBudget:
        """Configured budget, or the optimized one when requested"""
        if self._budget is None:
            b = self.config.budget
            if b.optimize:
                noise = self.noise()
                optimum = optimize_budget(noise.q_x, noise.qber(), self._nominal_rounds(), self.config.n_parties, b.eps_tot)
                if optimum.budget is None:
                    raise InfeasibleKeyError("budget optimization found no positive key", optimum.to_dict())
                self._budget = optimum.budget
                self._optimal_p = optimum.p
            else:
                self._budget = SecurityBudget.compose(b.eps_tot, b.eps_EC, b.eps_PA, self.config.n_parties, b.x_share)
        return self._budget

    def _nominal_rounds(self) -> int:
        p = self.config.protocol
        if p.rounds is not None:
            return p.rounds
        return max(10, int(self.collection_rate(p.p) * p.duration_s))

    # -- pipeline steps -------------------------------------------------

    def simulate(self) -> SessionResult:
        """Step 1: collect one session"""
        p = self.config.protocol
        rate = self.collection_rate()
        duration = p.duration_s if p.duration_s is not None else p.rounds / rate

        session = run_session(
            self.topology(),
            self.switching(),
            self.drift(),
            duration,
            self.noise(),
            self.streams["session"],
            party_names=self.party_names,
            rate_hz=rate,
            exact_rounds=p.rounds,
            deterministic_m=p.deterministic_m,
        )
        session.metadata["total_loss_db"] = round(total_loss_db(self.topology()), 6)
        return session

    def estimate(self, ledger: RoundLedger) -> ParamEstimate:
        """Step 2: parameter estimation"""
        return protocol.estimate_params(ledger, self.streams["estimate"])

    def distill(self, ledger: RoundLedger, estimate: Optional[ParamEstimate] = None) -> DistillationResult:
        """
        Steps 2-6 on an existing ledger

        Raises:
            InsufficientRoundsError: No usable test rounds
            NoCodeAvailableError: Corrected QBER above every threshold
            DecodingError: A Bob failed to decode
            VerificationError: Tags differ after correction
            InfeasibleKeyError: Nothing to extract, or not key-growing
                while the policy requires it
        """
        try:
            return self._distill(ledger, estimate)
        except ConferenceKeyError as e:
            logger.warning(LOG_ABORT, error=type(e).__name__, reason=e.message, details=e.details)
            raise

    def _distill(self, ledger: RoundLedger, estimate: Optional[ParamEstimate]) -> DistillationResult:
        warnings: List[str] = []
        # Only this distillation's broadcasts count against the key.
        first_message = len(self.channel.messages())
        estimate = estimate or self.estimate(ledger)
        budget = self.budget()
        p = ledger.schedule.p
        N = ledger.n_parties

        schedule_cost = protocol.compress_schedule(ledger.schedule).charged_bits
        raw = protocol.sift(ledger, estimate)

        # 3. Bound from the same estimates, Shannon-limit leakage
        bound = finite_key_length(RateInputs.from_estimate(estimate, p, N), budget)

        # 4. Rate choice on the corrected QBER, then one syndrome broadcast
        qber_corrected = min(estimate.qber_m + 2.0 * bound.xi_z, 0.4999)
        choice = self.rate_table.select(qber_corrected)
        code = self.codes.get(choice.rate, self.config.protocol.block_length)
        correction = correct_all(
            raw.bits[0],
            list(raw.bits[1:]),
            code,
            crossover=max(qber_corrected, MIN_CHANNEL_CROSSOVER),
            channel=self.channel,
            max_iters=self.config.protocol.max_iterations,
            sender=self.party_names[0],
        )

        # 5. Verification
        verification = verify(
            correction.keys, budget.eps_EC, self.streams["verify"], self.channel, sender=self.party_names[0]
        )
        if not verification.passed:
            raise VerificationError("verification tags differ", {"tag_bits": verification.tag_bits})

        # 6. Realized length, extraction, deduction
        leaked = self.channel.leakage_bits(since=first_message)
        realized = finite_key_length(
            RateInputs.from_estimate(
                estimate, p, N, leakage_mode=LeakageMode.REALIZED, realized_leakage_bits=leaked
            ),
            budget,
        )
        l_out = realized.ell_before_deduction
        if l_out <= 0:
            raise InfeasibleKeyError(
                "no extractable key after leakage",
                {"raw_length": realized.raw_length_before_deduction, "leaked_bits": leaked}
            )

        seed = ToeplitzSeed.generate(raw.n, l_out, self.streams["extract"])
        amplified = np.vstack([privacy_amplify(row, l_out, seed) for row in correction.keys])

        cost = preshared_cost(ledger.L, p)
        if self.config.protocol.require_key_growing:
            deduct_preshared(l_out, ledger.L, p)
            refill, key_bits = amplified[0, :cost], amplified[:, cost:]
        elif l_out >= cost:
            refill, key_bits = amplified[0, :cost], amplified[:, cost:]
        else:
            refill, key_bits = amplified[0, :0], amplified
            warnings.append(
                f"not key-growing: {l_out} extracted bits < {cost} pre-shared bits consumed"
            )
            logger.warning("Protocol is not key-growing", extracted_bits=l_out, preshared_bits=cost)

        key = ConferenceKey(bits=key_bits, party_names=list(ledger.party_names), security_label=budget.eps_tot)
        if key.length == 0:
            raise InfeasibleKeyError("deduction leaves no key", {"extracted_bits": l_out, "deduction": cost})

        if schedule_cost > math.ceil(1.05 * cost) + 64:
            warnings.append(f"compressed schedule ({schedule_cost} bits) exceeds L*h(p) ({cost} bits)")

        leakage = {
            "by_topic": self.channel.bits_by_topic(since=first_message),
            "total_bits": leaked,
            "syndrome_bits": correction.leakage_bits,
            "verification_bits": verification.tag_bits,
            "subtracted_bits": realized.ec_bits,
        }
        code_info = {
            "rate": code.rate_label,
            "threshold": choice.max_qber,
            "qber_corrected": qber_corrected,
            "table_version": self.rate_table.version,
            "construction_id": code.construction_id,
            "block_length": code.block_j,
            **correction.summary(),
        }
        logger.info(
            "Conference key distilled",
            key_bits=key.length,
            extracted_bits=l_out,
            leaked_bits=leaked,
            rate=code.rate_label,
        )
        return DistillationResult(
            estimate=estimate,
            schedule_cost_bits=schedule_cost,
            deduction_bits=cost,
            bound=bound,
            realized=realized,
            code=code_info,
            correction=correction,
            verification=verification,
            key=key,
            preshared_refill=refill,
            leakage=leakage,
            warnings=warnings,
        )

    def run(self) -> "PipelineResult":
        """Simulate and distill"""
        session = self.simulate()
        if session.empty:
            raise InfeasibleKeyError("session collected no rounds", session.summary())
        return PipelineResult(session=session, distillation=self.distill(session.ledger))


@dataclass
class PipelineResult:
    session: SessionResult
    distillation: DistillationResult

    @property
    def key(self) -> ConferenceKey:
        return self.distillation.key
