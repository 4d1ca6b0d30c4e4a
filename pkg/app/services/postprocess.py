"""
Classical post-processing

One-to-many LDPC error correction by syndrome broadcast, key
verification, Toeplitz privacy amplification and the pre-shared key
deduction.
"""
import json
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.constants import LOG_EC_COMPLETE, LOG_PA_COMPLETE
from app.core.exceptions import (
    ConfigurationError,
    DecodingError,
    InfeasibleKeyError,
    NoCodeAvailableError,
    ValidationError,
)
from app.repositories.ldpc_matrix import AlistRepository
from app.services.impl.ldpc import (
    DecodeResult,
    LdpcCode,
    bp_decode,
    build_qc_ira_code,
    parse_rate,
    syndrome_of,
)
from app.services.impl.poly_hash import PolyHash
from app.services.impl.toeplitz import ToeplitzSeed, toeplitz_hash
from app.services.interfaces.channel import IClassicalChannel
from app.services.keyrate import entropy_h
from app.utils.logging import get_logger, log_execution_time
from app.utils.validation import validate_bits, validate_probability
from app.utils.work_pool import run_jobs

logger = get_logger(__name__)

MIN_CHANNEL_CROSSOVER = 1e-3


# -- code-rate selection -------------------------------------------------

@dataclass(frozen=True)
class RateThreshold:
    rate: Fraction
    max_qber: float


@dataclass(frozen=True)
class CodeRateTable:
    """Measured decoding thresholds, highest rate first"""
    thresholds: Tuple[RateThreshold, ...]
    margin: float = 0.0
    version: str = "unversioned"

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "CodeRateTable":
        path = Path(path or settings.rate_thresholds_path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            entries = [
                RateThreshold(rate=parse_rate(item["rate"]), max_qber=float(item["max_qber"]))
                for item in data["thresholds"]
            ]
        except (OSError, KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Cannot read rate thresholds from {path}: {e}", {"path": str(path)})
        entries.sort(key=lambda t: t.rate, reverse=True)
        return cls(
            thresholds=tuple(entries),
            margin=float(data.get("margin", 0.0)),
            version=str(data.get("version", "unversioned")),
        )

    def select(self, qber_corrected: float) -> RateThreshold:
        """Highest rate whose threshold covers ``qber_corrected`` plus margin"""
        validate_probability(qber_corrected, "qber_corrected", high=0.5, open_high=True)
        for entry in self.thresholds:
            if qber_corrected + self.margin <= entry.max_qber:
                return entry
        raise NoCodeAvailableError(
            "corrected QBER exceeds every code threshold",
            {
                "qber_corrected": qber_corrected,
                "largest_threshold": max((t.max_qber for t in self.thresholds), default=0.0),
            }
        )


_default_table: Optional[CodeRateTable] = None


def default_rate_table() -> CodeRateTable:
    global _default_table
    if _default_table is None:
        _default_table = CodeRateTable.load()
    return _default_table


def select_code_rate(qber_corrected: float, table: Optional[CodeRateTable] = None) -> Fraction:
    """Code rate for QBER^m + 2 xi_Z"""
    return (table or default_rate_table()).select(qber_corrected).rate


# -- code library --------------------------------------------------------

class CodeLibrary:
    """
    Builds and caches codes per (rate, block length)

    With a cache directory, constructed matrices are stored as alist
    files and reloaded on later runs.
    """

    def __init__(
        self,
        cache_dir: Optional[Path] = None,
        lift_size: Optional[int] = None,
        seed: Optional[int] = None,
    ):
        self.cache_dir = cache_dir if cache_dir is not None else settings.code_cache_dir
        self.lift_size = lift_size or settings.ldpc_lift_size
        self.seed = settings.ldpc_code_seed if seed is None else seed
        self._codes: Dict[Tuple[Fraction, int], LdpcCode] = {}
        self._lock = threading.Lock()

    def get(self, rate, block_length: int) -> LdpcCode:
        key = (parse_rate(rate), int(block_length))
        with self._lock:
            if key not in self._codes:
                self._codes[key] = self._load_or_build(*key)
            return self._codes[key]

    def register(self, code: LdpcCode) -> None:
        """Use an externally supplied matrix for its (rate, length)"""
        with self._lock:
            self._codes[(code.rate_r, code.block_j)] = code

    def _load_or_build(self, rate: Fraction, block_length: int) -> LdpcCode:
        repo = AlistRepository(self.cache_dir) if self.cache_dir else None
        name = f"qc_ira_{block_length}_{rate.numerator}_{rate.denominator}_z{self.lift_size}_s{self.seed}"
        if repo and repo.exists(name):
            H = repo.load(name)
            return LdpcCode(block_j=block_length, rate_r=rate, parity_check=H, construction_id=f"alist:{name}")

        code = build_qc_ira_code(block_length, rate, lift_size=self.lift_size, seed=self.seed)
        logger.info("LDPC code constructed", construction_id=code.construction_id, **code.degree_stats())
        if repo:
            repo.save(code.parity_check, name)
        return code


# -- error correction ----------------------------------------------------

def pad_to_blocks(bits: np.ndarray, block_length: int) -> Tuple[np.ndarray, int]:
    """Reshape into blocks, padding the last one with public zeros"""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.size) % block_length
    if pad:
        bits = np.concatenate((bits, np.zeros(pad, dtype=np.uint8)))
    return bits.reshape(-1, block_length), pad


def syndrome(code: LdpcCode, key_block: np.ndarray) -> np.ndarray:
    """Parity bits H x of one block (or a stack of blocks)"""
    return syndrome_of(code, key_block)


def decode(
    code: LdpcCode,
    bob_block: np.ndarray,
    alice_syndrome: np.ndarray,
    max_iters: Optional[int] = None,
    crossover: float = 0.02,
) -> DecodeResult:
    """Belief-propagation syndrome decoding of one Bob block"""
    validate_bits(bob_block, "bob_block", code.block_j)
    return bp_decode(
        code,
        bob_block,
        alice_syndrome,
        crossover=crossover,
        max_iters=max_iters or settings.ldpc_max_iterations,
    )


@dataclass
class CorrectionResult:
    """Outcome of one-to-many error correction"""
    keys: np.ndarray
    leakage_bits: int
    n_blocks: int
    pad_bits: int
    rate: str
    iterations: List[List[int]] = field(default_factory=list)

    def summary(self) -> Dict:
        flat = [i for row in self.iterations for i in row]
        return {
            "rate": self.rate,
            "n_blocks": self.n_blocks,
            "pad_bits": self.pad_bits,
            "syndrome_bits": self.leakage_bits,
            "max_iterations": max(flat, default=0),
            "mean_iterations": float(np.mean(flat)) if flat else 0.0,
        }


@log_execution_time(logger)
def correct_all(
    alice_key: np.ndarray,
    bob_keys: Sequence[np.ndarray],
    code: LdpcCode,
    crossover: float,
    channel: Optional[IClassicalChannel] = None,
    max_iters: Optional[int] = None,
    sender: str = "Alice",
) -> CorrectionResult:
    """
    Correct every Bob towards Alice with one syndrome broadcast

    Args:
        alice_key: Alice's raw key
        bob_keys: One raw key per Bob
        code: LDPC code used for every block
        crossover: BSC crossover assumed by the decoders
        channel: Public channel that records the syndrome broadcast
        max_iters: BP iteration limit
        sender: Name of the broadcasting party

    Returns:
        CorrectionResult whose ``keys`` row 0 is Alice and rows 1.. are
        the corrected Bob keys (padding stripped)

    Raises:
        DecodingError: If any Bob block fails to decode
    """
    alice_key = validate_bits(alice_key, "alice_key")
    n = alice_key.size
    for bob in bob_keys:
        validate_bits(bob, "bob_key", n)

    alice_blocks, pad = pad_to_blocks(alice_key, code.block_j)
    n_blocks = alice_blocks.shape[0]
    syndromes = syndrome_of(code, alice_blocks)
    leakage = n_blocks * code.n_checks
    if channel is not None:
        channel.broadcast(sender, "syndrome", leakage, payload=syndromes)

    bob_blocks = [pad_to_blocks(bob, code.block_j)[0] for bob in bob_keys]
    crossover = max(crossover, MIN_CHANNEL_CROSSOVER)
    jobs = [(b, blk) for b in range(len(bob_keys)) for blk in range(n_blocks)]

    def run(job: Tuple[int, int]) -> DecodeResult:
        b, blk = job
        return decode(code, bob_blocks[b][blk], syndromes[blk], max_iters, crossover)

    results = run_jobs(run, jobs)

    corrected = [alice_key]
    iterations: List[List[int]] = []
    for b in range(len(bob_keys)):
        blocks = []
        per_bob = []
        for blk in range(n_blocks):
            res = results[b * n_blocks + blk]
            if not res.success:
                logger.error("Decoding failed", bob=b + 1, block=blk, iterations=res.iterations)
                raise DecodingError(
                    f"Bob {b + 1} failed to decode block {blk}",
                    bob=b + 1, block=blk, iterations=res.iterations,
                )
            blocks.append(res.bits)
            per_bob.append(res.iterations)
        corrected.append(np.concatenate(blocks)[:n])
        iterations.append(per_bob)

    result = CorrectionResult(
        keys=np.vstack(corrected),
        leakage_bits=leakage,
        n_blocks=n_blocks,
        pad_bits=pad,
        rate=code.rate_label,
        iterations=iterations,
    )
    logger.info(LOG_EC_COMPLETE, **result.summary())
    return result


# -- verification --------------------------------------------------------

@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    tag_bits: int
    tags: Tuple[int, ...]

    @property
    def leakage_bits(self) -> int:
        return self.tag_bits


def verify(
    keys: np.ndarray,
    eps_ec: float,
    rng: np.random.Generator,
    channel: Optional[IClassicalChannel] = None,
    sender: str = "Alice",
) -> VerificationResult:
    """
    Compare a t-bit polynomial hash of every party's key

    Alice announces her tag (t = ceil(log2(1/eps_EC)) bits, counted as
    leakage); each Bob compares locally.
    """
    keys = np.atleast_2d(np.asarray(keys, dtype=np.uint8))
    hasher = PolyHash.for_epsilon(eps_ec, rng)
    tags = tuple(hasher.digest(row) for row in keys)
    if channel is not None:
        channel.broadcast(sender, "verification", hasher.tag_bits, payload=tags[0])
    passed = all(tag == tags[0] for tag in tags)
    if not passed:
        logger.warning("Verification mismatch", tag_bits=hasher.tag_bits)
    return VerificationResult(passed=passed, tag_bits=hasher.tag_bits, tags=tags)


# -- privacy amplification ----------------------------------------------

@log_execution_time(logger)
def privacy_amplify(key: np.ndarray, l_out: int, seed: ToeplitzSeed) -> np.ndarray:
    """Compress ``key`` to ``l_out`` bits with the Toeplitz matrix of ``seed``"""
    if l_out <= 0:
        raise InfeasibleKeyError("no extractable key", {"l_out": l_out})
    if seed.l_out != l_out:
        raise ValidationError("seed was drawn for a different output length", {"seed": seed.l_out, "l_out": l_out})
    out = toeplitz_hash(key, seed)
    logger.debug(LOG_PA_COMPLETE, n_in=seed.n_in, l_out=l_out)
    return out


def preshared_cost(L: int, p: float) -> int:
    """Bits of pre-shared key consumed by the schedule, ceil(L h(p))"""
    return math.ceil(L * entropy_h(p))


def deduct_preshared(l: int, L: int, p: float) -> int:
    """
    Net key-growing output l - ceil(L h(p))

    Raises:
        InfeasibleKeyError: If the result is negative
    """
    cost = preshared_cost(L, p)
    net = l - cost
    if net < 0:
        raise InfeasibleKeyError(
            "protocol is not key-growing at these parameters",
            {"l": l, "deduction": cost, "L": L, "p": p}
        )
    return net
