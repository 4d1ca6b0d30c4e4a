"""
Key-rate mathematics

Binary entropy, asymptotic key rate, the finite-key length with
sampling corrections and epsilon composition, epsilon-budget
optimization and the pairwise (two-party keys) baseline.

All functions are pure.
"""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import entr

from app.core.exceptions import ValidationError
from app.utils.logging import get_logger, log_execution_time
from app.utils.validation import validate_count, validate_probability
from app.utils.work_pool import run_jobs

logger = get_logger(__name__)

LN2 = math.log(2.0)
COMPOSITION_RTOL = 1e-9


class LeakageMode(str, Enum):
    SHANNON = "shannon"
    REALIZED = "realized"


def entropy_h(x: float) -> float:
    """Binary Shannon entropy in bits, h(0) = h(1) = 0"""
    x = validate_probability(x, "x")
    return float((entr(x) + entr(1.0 - x)) / LN2)


def entropy_h_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`entropy_h` (values clipped to [0, 1])"""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return (entr(x) + entr(1.0 - x)) / LN2


def akr(q_x: float, qber: float) -> float:
    """Asymptotic key rate 1 - h(Q_X) - h(QBER); may be negative"""
    validate_probability(q_x, "q_x", high=0.5)
    validate_probability(qber, "qber", high=0.5)
    return 1.0 - entropy_h(q_x) - entropy_h(qber)


def xi(n: float, m: float, eps: float) -> float:
    """
    Sampling-without-replacement correction

    sqrt((n + m)(m + 1) / (8 n m^2) * ln(1 / eps))
    """
    if n < 1 or m < 1:
        raise ValidationError("n and m must be >= 1", {"n": n, "m": m})
    eps = validate_probability(eps, "eps", open_low=True)
    return math.sqrt((n + m) * (m + 1) / (8.0 * n * m * m) * math.log(1.0 / eps))


@dataclass(frozen=True)
class SecurityBudget:
    """
    Composable security budget

    eps_tot = eps_EC + eps_PA + 2 eps_PE with eps_PE^2 = (N-1) eps_Z + eps_X.
    """
    eps_tot: float
    eps_EC: float
    eps_PA: float
    eps_Z: float
    eps_X: float
    N: int

    def __post_init__(self):
        for name in ("eps_tot", "eps_EC", "eps_PA", "eps_Z", "eps_X"):
            validate_probability(getattr(self, name), name, open_low=True, open_high=True)
        if self.N < 2:
            raise ValidationError("N must be >= 2", {"N": self.N})
        composed = self.eps_EC + self.eps_PA + 2.0 * self.eps_PE
        if not math.isclose(composed, self.eps_tot, rel_tol=COMPOSITION_RTOL):
            raise ValidationError(
                "budget does not compose to eps_tot",
                {"eps_tot": self.eps_tot, "composed": composed}
            )

    @property
    def eps_PE(self) -> float:
        return math.sqrt((self.N - 1) * self.eps_Z + self.eps_X)

    @classmethod
    def compose(
        cls,
        eps_tot: float,
        eps_EC: float,
        eps_PA: float,
        N: int,
        x_share: float = 0.5,
    ) -> "SecurityBudget":
        """
        Fill eps_PE from the remainder and split eps_PE^2 between the
        X estimate (``x_share``) and the N-1 Z estimates
        """
        remainder = eps_tot - eps_EC - eps_PA
        if remainder <= 0:
            raise ValidationError(
                "eps_EC + eps_PA leave nothing for parameter estimation",
                {"eps_tot": eps_tot, "eps_EC": eps_EC, "eps_PA": eps_PA}
            )
        validate_probability(x_share, "x_share", open_low=True, open_high=True)
        eps_pe_sq = (remainder / 2.0) ** 2
        return cls(
            eps_tot=eps_tot,
            eps_EC=eps_EC,
            eps_PA=eps_PA,
            eps_Z=(1.0 - x_share) * eps_pe_sq / (N - 1),
            eps_X=x_share * eps_pe_sq,
            N=N,
        )

    def to_dict(self) -> Dict[str, float]:
        return {**asdict(self), "eps_PE": self.eps_PE}


@dataclass(frozen=True)
class RateInputs:
    L: int
    n: int
    m: int
    p: float
    q_x_m: float
    qber_m: float
    N: int
    leakage_mode: LeakageMode = LeakageMode.SHANNON
    realized_leakage_bits: Optional[int] = None

    def __post_init__(self):
        validate_count(self.L, "L")
        validate_count(self.m, "m")
        validate_count(self.n, "n")
        if self.n != self.L - 2 * self.m:
            raise ValidationError("n must equal L - 2m", {"L": self.L, "n": self.n, "m": self.m})
        validate_probability(self.p, "p", open_low=True, open_high=True)
        validate_probability(self.q_x_m, "q_x_m", high=0.5)
        validate_probability(self.qber_m, "qber_m", high=0.5)
        object.__setattr__(self, "leakage_mode", LeakageMode(self.leakage_mode))
        if self.leakage_mode == LeakageMode.REALIZED:
            if self.realized_leakage_bits is None or self.realized_leakage_bits < 0:
                raise ValidationError("realized mode needs realized_leakage_bits >= 0")

    @classmethod
    def from_estimate(cls, estimate, p: float, N: int, **kwargs) -> "RateInputs":
        return cls(
            L=estimate.L,
            n=estimate.n,
            m=estimate.m,
            p=p,
            q_x_m=min(estimate.q_x_m, 0.5),
            qber_m=min(estimate.qber_m, 0.5),
            N=N,
            **kwargs,
        )


@dataclass(frozen=True)
class FiniteKeyResult:
    """
    Finite-key length with every term exposed

    ``ell`` is net of the L*h(p) pre-shared deduction and
    ``ell_before_deduction`` is the privacy-amplification output length.
    Raw values are unfloored and may be negative.
    """
    ell: int
    ell_before_deduction: int
    raw_length: float
    raw_length_before_deduction: float
    deduction_bits: float
    xi_x: float
    xi_z: float
    phase_term: float
    ec_term: float
    ec_bits: float
    ec_log_term: float
    pa_log_term: float
    leakage_mode: LeakageMode
    L: int

    @property
    def feasible(self) -> bool:
        return self.ell > 0

    @property
    def feasible_before_deduction(self) -> bool:
        return self.ell_before_deduction > 0

    @property
    def skr(self) -> float:
        return self.ell / self.L

    @property
    def skr_before_deduction(self) -> float:
        return self.ell_before_deduction / self.L

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["leakage_mode"] = self.leakage_mode.value
        data.update(
            feasible=self.feasible,
            feasible_before_deduction=self.feasible_before_deduction,
            skr=self.skr,
            skr_before_deduction=self.skr_before_deduction,
        )
        return data


def _length_terms(
    L: float,
    n: float,
    m: float,
    p: float,
    q_x: float,
    qber: float,
    N: int,
    eps_EC: float,
    eps_PA: float,
    eps_PE: float,
    eps_X: float,
    eps_Z: float,
    ec_bits: Optional[float] = None,
) -> Dict[str, float]:
    """Key-length terms on real-valued counts (shared by the optimizer)"""
    xi_x = xi(n, m, eps_X)
    xi_z = xi(n, m, eps_Z)
    phase_term = entropy_h(min(q_x + 2.0 * xi_x, 0.5))
    if ec_bits is None:
        ec_term = entropy_h(min(qber + 2.0 * xi_z, 0.5))
        ec_bits = n * ec_term
    else:
        ec_term = ec_bits / n
    ec_log = math.log2(2.0 * (N - 1) / eps_EC)
    pa_arg = (1.0 - 2.0 * (N - 1) * eps_PE) / (2.0 * eps_PA)
    pa_log = 2.0 * math.log2(pa_arg) if pa_arg > 0 else math.inf
    before = n * (1.0 - phase_term - ec_term) - ec_log - pa_log
    deduction = L * entropy_h(p)
    return {
        "xi_x": xi_x,
        "xi_z": xi_z,
        "phase_term": phase_term,
        "ec_term": ec_term,
        "ec_bits": ec_bits,
        "ec_log_term": ec_log,
        "pa_log_term": pa_log,
        "raw_length_before_deduction": before,
        "deduction_bits": deduction,
        "raw_length": before - deduction,
    }


def finite_key_length(inputs: RateInputs, budget: SecurityBudget) -> FiniteKeyResult:
    """
    Finite-key length

    l = n [1 - h(Q_X^m + 2 xi_X) - EC] - log2(2(N-1)/eps_EC)
        - 2 log2((1 - 2(N-1) eps_PE) / (2 eps_PA)) - L h(p)

    EC is h(QBER^m + 2 xi_Z) in shannon mode and disclosed bits / n in
    realized mode. Negative lengths are reported as 0 (``feasible`` False).
    """
    if inputs.N != budget.N:
        raise ValidationError("inputs and budget disagree on N", {"inputs": inputs.N, "budget": budget.N})

    ec_bits = None
    if inputs.leakage_mode == LeakageMode.REALIZED:
        ec_bits = float(inputs.realized_leakage_bits)

    terms = _length_terms(
        inputs.L, inputs.n, inputs.m, inputs.p, inputs.q_x_m, inputs.qber_m, inputs.N,
        budget.eps_EC, budget.eps_PA, budget.eps_PE, budget.eps_X, budget.eps_Z,
        ec_bits=ec_bits,
    )
    return FiniteKeyResult(
        ell=max(0, math.floor(terms["raw_length"])),
        ell_before_deduction=max(0, math.floor(terms["raw_length_before_deduction"])),
        leakage_mode=inputs.leakage_mode,
        L=inputs.L,
        **terms,
    )


@dataclass
class BudgetOptimum:
    """Result of :func:`optimize_budget`"""
    p: float
    budget: Optional[SecurityBudget]
    ell: float
    feasible: bool
    evaluations: int
    restarts: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "p": self.p,
            "budget": None if self.budget is None else self.budget.to_dict(),
            "ell": self.ell,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
        }


# Search box: p, log10(eps_EC/eps_tot), log10(eps_PA/eps_tot), X share of eps_PE^2
_P_BOUNDS = (1e-4, 0.25)
_LOG_RATIO_BOUNDS = (-12.0, -0.01)
_SHARE_BOUNDS = (0.01, 0.99)
_BOUNDS = (_P_BOUNDS, _LOG_RATIO_BOUNDS, _LOG_RATIO_BOUNDS, _SHARE_BOUNDS)
_N_RESTARTS = 5
_MAX_SWEEPS = 40


def _budget_objective(
    x: Sequence[float],
    q_x: float,
    qber: float,
    L: float,
    N: int,
    eps_tot: float,
) -> float:
    """Expected key length (m = pL) for a point of the search box"""
    p, log_ec, log_pa, share = x
    eps_EC = eps_tot * 10.0 ** log_ec
    eps_PA = eps_tot * 10.0 ** log_pa
    remainder = eps_tot - eps_EC - eps_PA
    if remainder <= eps_tot * 1e-12:
        return -math.inf
    eps_pe = remainder / 2.0
    eps_X = share * eps_pe ** 2
    eps_Z = (1.0 - share) * eps_pe ** 2 / (N - 1)
    m = p * L
    n = L - 2.0 * m
    if m < 1 or n < 1:
        return -math.inf
    terms = _length_terms(L, n, m, p, q_x, qber, N, eps_EC, eps_PA, eps_pe, eps_X, eps_Z)
    return terms["raw_length"]


def _restart_points() -> List[np.ndarray]:
    points = [np.array([0.01, -5.0, -2.0, 0.5])]
    rng = np.random.default_rng(0)
    for _ in range(_N_RESTARTS - 1):
        points.append(np.array([rng.uniform(*bounds) for bounds in _BOUNDS]))
    return points


def _coordinate_search(start: np.ndarray, objective) -> Tuple[np.ndarray, float, int]:
    x = start.copy()
    best = objective(x)
    evaluations = 1
    for _ in range(_MAX_SWEEPS):
        previous = best
        for i, bounds in enumerate(_BOUNDS):
            def negated(v, i=i):
                trial = x.copy()
                trial[i] = v
                value = objective(trial)
                return -value if math.isfinite(value) else 1e300

            res = minimize_scalar(negated, bounds=bounds, method="bounded", options={"xatol": 1e-10})
            evaluations += int(res.nfev)
            if -res.fun > best:
                x[i] = res.x
                best = -res.fun
        if math.isfinite(previous) and best - previous <= 1e-9 * max(1.0, abs(best)):
            break
    return x, best, evaluations


@log_execution_time(logger)
def optimize_budget(
    prelim_qx: float,
    prelim_qber: float,
    L: int,
    N: int,
    eps_tot: float,
) -> BudgetOptimum:
    """
    Maximize the expected key length over (p, eps_EC, eps_PA, eps_Z, eps_X)

    The eps variables are searched as log10 fractions of eps_tot with
    eps_PE filling the remainder; coordinate descent with bounded
    golden-section/Brent line searches from fixed restart points.
    Deterministic for given inputs.
    """
    validate_probability(prelim_qx, "prelim_qx", high=0.5)
    validate_probability(prelim_qber, "prelim_qber", high=0.5)
    L = validate_count(L, "L", minimum=10)
    validate_probability(eps_tot, "eps_tot", open_low=True, open_high=True)
    if N < 2:
        raise ValidationError("N must be >= 2", {"N": N})

    def objective(x):
        return _budget_objective(x, prelim_qx, prelim_qber, float(L), N, eps_tot)

    runs = run_jobs(lambda start: _coordinate_search(start, objective), _restart_points())
    x_best, ell_best, _ = max(runs, key=lambda run: run[1])
    evaluations = sum(run[2] for run in runs)
    restarts = [{"x": run[0].tolist(), "ell": run[1]} for run in runs]

    if not math.isfinite(ell_best) or ell_best <= 0:
        logger.warning("No positive key in the search box", L=L, N=N, eps_tot=eps_tot)
        return BudgetOptimum(p=float(x_best[0]), budget=None, ell=max(ell_best, 0.0),
                             feasible=False, evaluations=evaluations, restarts=restarts)

    p, log_ec, log_pa, share = (float(v) for v in x_best)
    budget = SecurityBudget.compose(
        eps_tot, eps_tot * 10.0 ** log_ec, eps_tot * 10.0 ** log_pa, N, x_share=share
    )
    logger.info("Budget optimized", p=p, ell=round(ell_best, 1), eps_EC=budget.eps_EC, eps_PA=budget.eps_PA)
    return BudgetOptimum(p=p, budget=budget, ell=ell_best, feasible=True,
                         evaluations=evaluations, restarts=restarts)


def expected_key_length(
    q_x: float,
    qber: float,
    L: int,
    p: float,
    budget: SecurityBudget,
) -> float:
    """Raw expected key length with m = pL (objective used by the optimizer)"""
    x = (
        p,
        math.log10(budget.eps_EC / budget.eps_tot),
        math.log10(budget.eps_PA / budget.eps_tot),
        budget.eps_X / budget.eps_PE ** 2,
    )
    return _budget_objective(x, q_x, qber, float(L), budget.N, budget.eps_tot)


@dataclass(frozen=True)
class PairwiseBaseline:
    """Conference key from N-1 XOR-combined two-party keys"""
    pair_rounds: int
    pair_key: FiniteKeyResult
    conference_bits: int
    ghz_bits: int

    @property
    def advantage(self) -> float:
        """GHZ length over pairwise length (inf if pairwise yields nothing)"""
        if self.conference_bits == 0:
            return math.inf if self.ghz_bits > 0 else 1.0
        return self.ghz_bits / self.conference_bits

    def to_dict(self) -> Dict:
        return {
            "pair_rounds": self.pair_rounds,
            "pair_key": self.pair_key.to_dict(),
            "conference_bits": self.conference_bits,
            "ghz_bits": self.ghz_bits,
            "advantage": self.advantage,
        }


def pairwise_baseline(
    q_x: float,
    qber: float,
    L: int,
    p: float,
    budget: SecurityBudget,
) -> PairwiseBaseline:
    """
    Same network uses spent on N-1 two-party keys

    Each pair gets L/(N-1) rounds and must be distilled at eps/(N-1)
    so the XOR-combined conference key is eps-secure.
    """
    N = budget.N
    scale = 1.0 / (N - 1)
    pair_budget = SecurityBudget.compose(
        budget.eps_tot * scale,
        budget.eps_EC * scale,
        budget.eps_PA * scale,
        N=2,
        x_share=budget.eps_X / budget.eps_PE ** 2,
    )

    def length(rounds: int, n_parties: int, b: SecurityBudget) -> FiniteKeyResult:
        m = max(1, round(p * rounds))
        inputs = RateInputs(L=rounds, n=rounds - 2 * m, m=m, p=p, q_x_m=q_x, qber_m=qber, N=n_parties)
        return finite_key_length(inputs, b)

    pair_rounds = L // (N - 1)
    pair_key = length(pair_rounds, 2, pair_budget)
    ghz = length(L, N, budget)
    return PairwiseBaseline(
        pair_rounds=pair_rounds,
        pair_key=pair_key,
        conference_bits=pair_key.ell,
        ghz_bits=ghz.ell,
    )
