"""
Quasi-cyclic LDPC codes and syndrome belief propagation

Codes are irregular repeat-accumulate in the DVB-S2 manner: the
information part is built from Z x Z circulants (column weight 3,
row blocks chosen greedily by current degree, shifts chosen to avoid
4-cycles) and the parity part is a dual-diagonal staircase, which
makes H full rank by construction.

Decoding is sum-product on the Tanner graph with messages stored per
edge in CSR order of H. A syndrome bit of 1 flips the sign of every
message leaving that check.
"""
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Set, Tuple

import numpy as np
from scipy import sparse

from app.constants import DEFAULT_COLUMN_WEIGHT, DEFAULT_LIFT_SIZE, DEFAULT_MAX_BP_ITERATIONS
from app.core.exceptions import ValidationError

LLR_CLIP = 50.0
_TANH_FLOOR = 1e-12
_ATANH_CEIL = 1.0 - 1e-15


def parse_rate(rate) -> Fraction:
    """Accept Fraction, "3/4" or a float-exact value"""
    if isinstance(rate, Fraction):
        value = rate
    else:
        try:
            value = Fraction(rate).limit_denominator(1000)
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"invalid code rate {rate!r}") from e
    if not 0 < value < 1:
        raise ValidationError(f"code rate must lie in (0, 1), got {rate!r}")
    return value


@dataclass(eq=False)
class LdpcCode:
    """Binary LDPC code given by its (j-k) x j parity-check matrix"""
    block_j: int
    rate_r: Fraction
    parity_check: sparse.csr_matrix
    construction_id: str
    lift: int = 1
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.rate_r = parse_rate(self.rate_r)
        H = sparse.csr_matrix(self.parity_check, dtype=np.uint8)
        H.sum_duplicates()
        H.eliminate_zeros()
        H.sort_indices()
        self.parity_check = H
        if H.shape[1] != self.block_j:
            raise ValidationError("parity-check width must equal block_j", {"shape": H.shape})
        if Fraction(self.block_j - H.shape[0], self.block_j) != self.rate_r:
            raise ValidationError(
                "rate does not match matrix shape",
                {"shape": H.shape, "rate": str(self.rate_r)}
            )

    @property
    def k(self) -> int:
        return self.block_j - self.n_checks

    @property
    def n_checks(self) -> int:
        return int(self.parity_check.shape[0])

    @property
    def rate_label(self) -> str:
        return f"{self.rate_r.numerator}/{self.rate_r.denominator}"

    @cached_property
    def edge_check(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_checks), np.diff(self.parity_check.indptr))

    @cached_property
    def edge_var(self) -> np.ndarray:
        return self.parity_check.indices.astype(np.int64)

    @cached_property
    def row_starts(self) -> np.ndarray:
        starts = self.parity_check.indptr[:-1]
        if np.any(np.diff(self.parity_check.indptr) == 0):
            raise ValidationError("every check must involve at least one bit")
        return starts

    def degree_stats(self) -> Dict[str, int]:
        col_deg = np.diff(self.parity_check.tocsc().indptr)
        row_deg = np.diff(self.parity_check.indptr)
        return {
            "edges": int(self.parity_check.nnz),
            "min_col_degree": int(col_deg.min()),
            "max_col_degree": int(col_deg.max()),
            "min_row_degree": int(row_deg.min()),
            "max_row_degree": int(row_deg.max()),
        }


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray
    success: bool
    iterations: int


def lift_size_for(k: int, n_checks: int, max_lift: int = DEFAULT_LIFT_SIZE) -> int:
    """Largest divisor of gcd(k, j-k) not exceeding ``max_lift``"""
    g = math.gcd(k, n_checks)
    for z in range(min(g, max_lift), 0, -1):
        if g % z == 0:
            return z
    return 1


def build_qc_ira_code(
    block_j: int,
    rate,
    lift_size: int = DEFAULT_LIFT_SIZE,
    column_weight: int = DEFAULT_COLUMN_WEIGHT,
    seed: int = 0,
) -> LdpcCode:
    """
    Construct a QC-IRA code

    Args:
        block_j: Codeword length j
        rate: Code rate k/j
        lift_size: Upper bound on the circulant size Z
        column_weight: Degree of information bits
        seed: Construction seed (shifts and tie-breaks)

    Returns:
        LdpcCode whose construction_id records every parameter
    """
    r = parse_rate(rate)
    k_frac = block_j * r
    if k_frac.denominator != 1:
        raise ValidationError("block length not divisible by the rate", {"j": block_j, "rate": str(r)})
    k = int(k_frac)
    n_checks = block_j - k
    Z = lift_size_for(k, n_checks, lift_size)
    kb, mb = k // Z, n_checks // Z
    if mb < column_weight:
        raise ValidationError(
            "too few check row blocks for the column weight",
            {"row_blocks": mb, "column_weight": column_weight}
        )

    rng = np.random.default_rng([seed, block_j, r.numerator, r.denominator])
    row_degree = np.zeros(mb, dtype=np.int64)
    used_differences: Dict[Tuple[int, int], Set[int]] = defaultdict(set)
    offsets = np.arange(Z)
    rows, cols = [], []

    for cb in range(kb):
        order = rng.permutation(mb)
        chosen = sorted(order[np.argsort(row_degree[order], kind="stable")][:column_weight].tolist())
        shifts: Dict[int, int] = {}
        for rb in chosen:
            for _ in range(256):
                s = int(rng.integers(Z))
                if all((shifts[prev] - s) % Z not in used_differences[(prev, rb)] for prev in shifts):
                    break
            shifts[rb] = s
        for a_pos, a in enumerate(chosen):
            for b in chosen[a_pos + 1:]:
                used_differences[(a, b)].add((shifts[a] - shifts[b]) % Z)
        row_degree[chosen] += 1

        for rb, s in shifts.items():
            rows.append(rb * Z + (offsets + s) % Z)
            cols.append(cb * Z + offsets)

    # Dual-diagonal accumulator: parity bit i checks rows i and i+1
    parity = np.arange(n_checks)
    rows.append(parity)
    cols.append(k + parity)
    rows.append(parity[1:])
    cols.append(k + parity[:-1])

    row_idx = np.concatenate(rows)
    col_idx = np.concatenate(cols)
    H = sparse.csr_matrix(
        (np.ones(row_idx.size, dtype=np.uint8), (row_idx, col_idx)),
        shape=(n_checks, block_j),
    )
    construction_id = f"qc-ira-j{block_j}-r{r.numerator}_{r.denominator}-z{Z}-w{column_weight}-s{seed}"
    return LdpcCode(
        block_j=block_j,
        rate_r=r,
        parity_check=H,
        construction_id=construction_id,
        lift=Z,
        metadata={"info_row_degree_spread": int(row_degree.max() - row_degree.min())},
    )


def syndrome_of(code: LdpcCode, bits: np.ndarray) -> np.ndarray:
    """H x over GF(2)"""
    bits = np.asarray(bits)
    if bits.shape[-1] != code.block_j:
        raise ValidationError(
            "block length does not match the code",
            {"length": int(bits.shape[-1]), "block_j": code.block_j}
        )
    return (code.parity_check @ bits.astype(np.int64).T % 2).astype(np.uint8).T


def channel_llr(bits: np.ndarray, crossover: float) -> np.ndarray:
    """BSC prior log-likelihood ratios log P(0)/P(1)"""
    q = float(np.clip(crossover, 1e-6, 0.49))
    return (1.0 - 2.0 * bits.astype(np.float64)) * math.log((1.0 - q) / q)


def bp_decode(
    code: LdpcCode,
    received: np.ndarray,
    target_syndrome: np.ndarray,
    crossover: float,
    max_iters: int = DEFAULT_MAX_BP_ITERATIONS,
) -> DecodeResult:
    """
    Sum-product syndrome decoding

    Finds x close to ``received`` with H x = ``target_syndrome``.
    Success means the hard decision reproduces the target syndrome.
    A block that already satisfies it returns after 0 iterations.
    """
    y = np.asarray(received, dtype=np.uint8)
    s = np.asarray(target_syndrome, dtype=np.int64)
    if s.size != code.n_checks:
        raise ValidationError("syndrome length does not match the code", {"length": int(s.size)})
    if np.array_equal(syndrome_of(code, y), s):
        return DecodeResult(bits=y.copy(), success=True, iterations=0)

    edge_check, edge_var, starts = code.edge_check, code.edge_var, code.row_starts
    prior = channel_llr(y, crossover)
    to_check = prior[edge_var]
    hard = y

    for iteration in range(1, max_iters + 1):
        log_mag = np.log(np.tanh(np.maximum(np.abs(to_check), _TANH_FLOOR) / 2.0))
        negative = (to_check < 0).astype(np.int64)
        check_log = np.add.reduceat(log_mag, starts)
        check_sign = (np.add.reduceat(negative, starts) + s) & 1

        extrinsic = np.minimum(np.exp(check_log[edge_check] - log_mag), _ATANH_CEIL)
        sign = 1.0 - 2.0 * (check_sign[edge_check] ^ negative)
        to_var = sign * 2.0 * np.arctanh(extrinsic)

        total = prior + np.bincount(edge_var, weights=to_var, minlength=code.block_j)
        hard = (total < 0).astype(np.uint8)
        if np.array_equal(syndrome_of(code, hard), s):
            return DecodeResult(bits=hard, success=True, iterations=iteration)

        to_check = np.clip(total[edge_var] - to_var, -LLR_CLIP, LLR_CLIP)

    return DecodeResult(bits=hard, success=False, iterations=max_iters)


def gf2_rank(matrix: np.ndarray) -> int:
    """Rank over GF(2) of a small dense 0/1 matrix"""
    rows = np.packbits(np.asarray(matrix, dtype=np.uint8) & 1, axis=1)
    n_rows, n_cols = matrix.shape
    rank = 0
    for col in range(n_cols):
        byte, bit = divmod(col, 8)
        mask = np.uint8(0x80 >> bit)
        candidates = np.flatnonzero(rows[rank:, byte] & mask)
        if candidates.size == 0:
            continue
        pivot = rank + candidates[0]
        if pivot != rank:
            rows[[rank, pivot]] = rows[[pivot, rank]]
        others = np.flatnonzero(rows[:, byte] & mask)
        others = others[others != rank]
        rows[others] ^= rows[rank]
        rank += 1
        if rank == n_rows:
            break
    return rank


def code_from_matrix(H, construction_id: str = "external") -> LdpcCode:
    """Wrap an externally supplied parity-check matrix"""
    H = sparse.csr_matrix(H, dtype=np.uint8)
    m, j = H.shape
    return LdpcCode(
        block_j=j,
        rate_r=Fraction(j - m, j),
        parity_check=H,
        construction_id=construction_id,
    )
