"""
Unit tests for key-rate mathematics
"""
import math
from decimal import Decimal, localcontext

import numpy as np
import pytest

from app.constants import (
    REFERENCE_EPS_TOT,
    REFERENCE_KEY_LENGTH,
    REFERENCE_QBER,
    REFERENCE_QX,
)
from app.core.exceptions import ValidationError
from app.services.keyrate import (
    LeakageMode,
    RateInputs,
    SecurityBudget,
    akr,
    entropy_h,
    entropy_h_array,
    expected_key_length,
    finite_key_length,
    optimize_budget,
    pairwise_baseline,
    xi,
)

REFERENCE_L = 4_140_200


def _inputs(L, p=0.012, q_x=REFERENCE_QX, qber=REFERENCE_QBER, **kwargs):
    m = max(1, round(p * L))
    return RateInputs(L=L, n=L - 2 * m, m=m, p=p, q_x_m=q_x, qber_m=qber, N=4, **kwargs)


class TestEntropy:
    """Test binary entropy and the asymptotic rate"""

    def test_endpoints(self):
        """Test h(0) = h(1) = 0 and h(1/2) = 1"""
        assert entropy_h(0.0) == 0.0
        assert entropy_h(1.0) == 0.0
        assert entropy_h(0.5) == pytest.approx(1.0)

    def test_known_value(self):
        """Test h(0.012)"""
        assert entropy_h(0.012) == pytest.approx(0.09378, abs=1e-5)

    def test_symmetry_and_vectorized(self):
        """Test h(x) = h(1-x) and the array form"""
        xs = np.linspace(0, 1, 11)

        values = entropy_h_array(xs)

        assert values == pytest.approx(values[::-1])
        assert values[3] == pytest.approx(entropy_h(0.3))

    def test_out_of_range(self):
        """Test that x outside [0, 1] is rejected"""
        with pytest.raises(ValidationError):
            entropy_h(1.1)

    def test_reference_akr(self):
        """Test the asymptotic rate at Q_X = 0.05, QBER = 0.0159"""
        assert akr(0.05, 0.0159) == pytest.approx(0.596, abs=1e-3)

    def test_noiseless_and_hopeless(self):
        """Test AKR at zero noise and at maximal noise"""
        assert akr(0.0, 0.0) == 1.0
        assert akr(0.5, 0.5) == pytest.approx(-1.0)

    def test_akr_rejects_qx_above_half(self):
        """Test that Q_X must lie in [0, 1/2]"""
        with pytest.raises(ValidationError):
            akr(0.6, 0.0)


class TestSamplingCorrection:
    """Test the xi correction"""

    def test_direct_evaluation(self):
        """Test xi at n = 4.04e6, m = 5.01e4, eps = 1e-8"""
        n, m, eps = 4.04e6, 5.01e4, 1e-8

        value = xi(n, m, eps)

        expected = math.sqrt((n + m) * (m + 1) / (8 * n * m * m) * math.log(1 / eps))
        assert value == pytest.approx(expected, rel=1e-14)
        assert value == pytest.approx(6.82e-3, rel=1e-3)

    def test_high_precision(self):
        """Test xi against 40-digit decimal arithmetic"""
        with localcontext() as ctx:
            ctx.prec = 40
            n, m, eps = Decimal(4_040_000), Decimal(50_100), Decimal("1e-8")
            exact = ((n + m) * (m + 1) / (8 * n * m * m) * (1 / eps).ln()).sqrt()

        assert xi(4_040_000, 50_100, 1e-8) == pytest.approx(float(exact), rel=1e-12)

    def test_eps_one(self):
        """Test that eps = 1 gives no correction"""
        assert xi(1000, 100, 1.0) == 0.0

    def test_invalid_counts(self):
        """Test that n, m >= 1 are required"""
        with pytest.raises(ValidationError):
            xi(0, 10, 1e-3)
        with pytest.raises(ValidationError):
            xi(10, 10, 0.0)


class TestSecurityBudget:
    """Test epsilon composition"""

    def test_composition(self, reference_budget):
        """Test eps_EC + eps_PA + 2 eps_PE = eps_tot"""
        b = reference_budget

        assert b.eps_EC + b.eps_PA + 2 * b.eps_PE == pytest.approx(REFERENCE_EPS_TOT, rel=1e-12)
        assert b.eps_PE ** 2 == pytest.approx(3 * b.eps_Z + b.eps_X, rel=1e-12)
        assert b.eps_X == pytest.approx(3 * b.eps_Z)

    def test_no_room_for_estimation(self):
        """Test that eps_EC + eps_PA >= eps_tot is rejected"""
        with pytest.raises(ValidationError):
            SecurityBudget.compose(1e-8, 6e-9, 5e-9, N=4)

    def test_inconsistent_budget(self):
        """Test that a hand-built budget must compose"""
        with pytest.raises(ValidationError):
            SecurityBudget(eps_tot=1e-8, eps_EC=1e-10, eps_PA=1e-10, eps_Z=1e-30, eps_X=1e-30, N=4)

    def test_to_dict(self, reference_budget):
        """Test the serialized budget"""
        data = reference_budget.to_dict()

        assert data["N"] == 4
        assert data["eps_PE"] == pytest.approx(reference_budget.eps_PE)


class TestFiniteKey:
    """Test the finite-key length"""

    def test_reference_point(self, reference_inputs, reference_budget):
        """Test the key length of the reference 177 h session"""
        result = finite_key_length(reference_inputs, reference_budget)

        assert result.xi_x == pytest.approx(9.766e-3, rel=1e-3)
        assert result.xi_z == pytest.approx(9.907e-3, rel=1e-3)
        assert result.ec_log_term == pytest.approx(45.77, abs=0.01)
        assert result.pa_log_term == pytest.approx(64.44, abs=0.01)
        assert result.deduction_bits == pytest.approx(388_272, rel=1e-3)
        assert result.feasible
        assert abs(result.ell - REFERENCE_KEY_LENGTH) / REFERENCE_KEY_LENGTH < 0.15

    def test_terms_add_up(self, reference_inputs, reference_budget):
        """Test that the reported terms reproduce the length"""
        r = finite_key_length(reference_inputs, reference_budget)

        n = reference_inputs.n
        before = n * (1 - r.phase_term - r.ec_term) - r.ec_log_term - r.pa_log_term
        assert r.raw_length_before_deduction == pytest.approx(before)
        assert r.raw_length == pytest.approx(before - r.deduction_bits)
        assert r.ell == math.floor(r.raw_length)
        assert r.ell_before_deduction >= r.ell

    def test_small_session_infeasible(self, reference_budget):
        """Test that 1e5 rounds give no key"""
        result = finite_key_length(_inputs(100_000), reference_budget)

        assert result.ell == 0
        assert not result.feasible
        assert result.raw_length < 0

    @pytest.mark.parametrize("L", [10**5, 10**6, 4_140_200, 10**8])
    def test_bounded_by_asymptotic(self, L, reference_budget):
        """Test l <= L * AKR"""
        result = finite_key_length(_inputs(L), reference_budget)

        assert result.ell <= L * akr(REFERENCE_QX, REFERENCE_QBER)

    def test_monotone_in_rounds(self, reference_budget):
        """Test that the key length never shrinks as L grows"""
        lengths = [finite_key_length(_inputs(int(L)), reference_budget).ell for L in np.geomspace(1e5, 1e10, 11)]

        assert all(b >= a for a, b in zip(lengths, lengths[1:]))

    def test_converges_to_asymptotic(self, reference_budget):
        """Test that l/L before deduction approaches (1 - 2p) AKR"""
        limit = (1 - 2 * 0.012) * akr(REFERENCE_QX, REFERENCE_QBER)
        gaps = [
            limit - finite_key_length(_inputs(int(L)), reference_budget).skr_before_deduction
            for L in (1e7, 1e9, 1e11, 1e12)
        ]

        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert 0 < gaps[-1] < 0.01 * limit

    def test_realized_leakage(self, reference_inputs, reference_budget):
        """Test that realized mode charges the disclosed bits"""
        shannon = finite_key_length(reference_inputs, reference_budget)
        leaked = int(shannon.ec_bits) + 100_000

        realized = finite_key_length(
            RateInputs(**{**reference_inputs.__dict__, "leakage_mode": "realized",
                          "realized_leakage_bits": leaked}),
            reference_budget,
        )

        assert realized.leakage_mode == LeakageMode.REALIZED
        assert realized.ec_bits == leaked
        assert shannon.raw_length - realized.raw_length == pytest.approx(leaked - shannon.ec_bits)

    def test_realized_needs_bits(self):
        """Test that realized mode requires the leakage count"""
        with pytest.raises(ValidationError):
            _inputs(10_000, leakage_mode="realized")

    def test_round_counts_checked(self):
        """Test n = L - 2m"""
        with pytest.raises(ValidationError):
            RateInputs(L=100, n=90, m=10, p=0.1, q_x_m=0.0, qber_m=0.0, N=4)

    def test_party_count_checked(self, reference_budget):
        """Test that inputs and budget must agree on N"""
        inputs = RateInputs(L=100, n=80, m=10, p=0.1, q_x_m=0.0, qber_m=0.0, N=3)

        with pytest.raises(ValidationError):
            finite_key_length(inputs, reference_budget)


class TestOptimization:
    """Test epsilon-budget optimization"""

    @pytest.fixture(scope="class")
    def optimum(self):
        return optimize_budget(REFERENCE_QX, REFERENCE_QBER, REFERENCE_L, 4, REFERENCE_EPS_TOT)

    def test_optimal_p(self, optimum):
        """Test that the optimal test fraction is near 1.2%"""
        assert optimum.feasible
        assert 0.008 <= optimum.p <= 0.016

    def test_budget_composes(self, optimum):
        """Test that the optimized budget composes to eps_tot"""
        b = optimum.budget

        assert b.eps_EC + b.eps_PA + 2 * b.eps_PE == pytest.approx(REFERENCE_EPS_TOT, rel=1e-9)

    def test_not_worse_than_grid(self, optimum):
        """Test the optimum against a coarse grid"""
        for p in (0.008, 0.012, 0.016):
            for eps_ec in (1e-14, 1e-13, 1e-12):
                for eps_pa in (1e-11, 1e-10, 1e-9):
                    budget = SecurityBudget.compose(REFERENCE_EPS_TOT, eps_ec, eps_pa, N=4)
                    assert expected_key_length(REFERENCE_QX, REFERENCE_QBER, REFERENCE_L, p, budget) <= optimum.ell + 1.0

    def test_reference_budget_near_optimal(self, optimum, reference_budget):
        """Test that the reference operating point is within 1% of the optimum"""
        value = expected_key_length(REFERENCE_QX, REFERENCE_QBER, REFERENCE_L, 0.012, reference_budget)

        assert 0.99 * optimum.ell <= value <= optimum.ell + 1.0

    def test_noiseless_limit(self):
        """Test that the optimal p vanishes for noiseless long sessions"""
        optimum = optimize_budget(0.0, 0.0, 10**12, 4, REFERENCE_EPS_TOT)

        assert optimum.p < 1e-3

    def test_infeasible(self):
        """Test that hopeless parameters report no key"""
        optimum = optimize_budget(0.3, 0.2, 1000, 4, REFERENCE_EPS_TOT)

        assert not optimum.feasible
        assert optimum.budget is None

    def test_deterministic(self, optimum):
        """Test that repeated optimization gives the same answer"""
        again = optimize_budget(REFERENCE_QX, REFERENCE_QBER, REFERENCE_L, 4, REFERENCE_EPS_TOT)

        assert again.p == optimum.p
        assert again.ell == optimum.ell


class TestPairwiseBaseline:
    """Test the two-party-keys comparison"""

    def test_conference_advantage(self, reference_budget):
        """Test that the GHZ protocol beats N-1 pairwise keys"""
        baseline = pairwise_baseline(REFERENCE_QX, REFERENCE_QBER, REFERENCE_L, 0.012, reference_budget)

        assert baseline.pair_rounds == REFERENCE_L // 3
        assert baseline.ghz_bits > baseline.conference_bits
        assert baseline.advantage > 1.0
        assert baseline.to_dict()["ghz_bits"] == baseline.ghz_bits

    def test_both_infeasible(self, reference_budget):
        """Test the advantage when neither scheme yields key"""
        baseline = pairwise_baseline(0.3, 0.3, 10_000, 0.012, reference_budget)

        assert baseline.conference_bits == 0
        assert baseline.advantage == 1.0
