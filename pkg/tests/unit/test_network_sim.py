"""
Unit tests for the star-network simulator
"""
import numpy as np
import pytest

from app.constants import MEASURED_TOPOLOGIES, ZERO_LOSS_RATE_HZ
from app.core.exceptions import ValidationError
from app.services.network_sim import (
    DriftModel,
    SwitchingModel,
    Topology,
    adjusted_rate,
    expected_rounds,
    generation_rate,
    link_loss_db,
    rate_at_loss,
    required_duration,
    run_session,
    session_rate,
    simulate_switching_ratio,
    total_loss_db,
)
from app.services.noise_model import OperationalNoise


class TestLossAndRate:
    """Test the loss model and the generation rate"""

    def test_zero_loss_rate(self):
        """Test that an unspooled star runs at the base rate"""
        t = Topology.from_bob_lengths([0, 0, 0])

        assert total_loss_db(t) == 0.0
        assert generation_rate(t) == pytest.approx(ZERO_LOSS_RATE_HZ)

    def test_rate_at_loss(self):
        """Test the rate at 4.84 dB"""
        assert rate_at_loss(4.84, 40.89) == pytest.approx(13.4, abs=0.05)

    def test_plain_attenuation(self):
        """Test 20 km at 0.2 dB/km without coupling loss"""
        t = Topology.from_bob_lengths([0, 0, 20], atten_db_per_km=0.2, coupling_loss_db=0.0)

        assert total_loss_db(t) == pytest.approx(4.0)

    def test_coupling_only_on_spooled_links(self):
        """Test that coupling loss is charged per spooled link"""
        t = Topology.from_bob_lengths([0, 10, 20], atten_db_per_km=0.0, coupling_loss_db=1.0)

        assert link_loss_db(t) == (0.0, 0.0, 1.0, 1.0)

    @pytest.mark.parametrize("bob_km,measured_loss,_rate", [m for m in MEASURED_TOPOLOGIES[1:]])
    def test_fitted_losses_close_to_measurement(self, bob_km, measured_loss, _rate):
        """Test that the fitted loss model is within 0.25 dB of each measurement"""
        t = Topology.from_bob_lengths(bob_km)

        assert total_loss_db(t) == pytest.approx(measured_loss, abs=0.25)

    @pytest.mark.parametrize("loss,measured,tolerance", [
        (4.84, 12.68, 0.20),
        (7.57, 6.31, 0.20),
        (11.77, 2.03, 0.35),
    ])
    def test_rates_from_measured_losses(self, loss, measured, tolerance):
        """Test that rates predicted from measured losses track the measured rates"""
        predicted = rate_at_loss(loss, ZERO_LOSS_RATE_HZ)

        assert abs(predicted - measured) / measured < tolerance

    def test_invalid_topology(self):
        """Test topology validation"""
        with pytest.raises(ValidationError):
            Topology(fiber_km=(0.0,))
        with pytest.raises(ValidationError):
            Topology(fiber_km=(0.0, -1.0, 2.0))
        with pytest.raises(ValidationError):
            Topology(fiber_km=(0.0, 1.0), base_rate_hz=0.0)


class TestSwitching:
    """Test the active-switching penalty"""

    def test_adjusted_rate(self):
        """Test the switched rate at 2.03 Hz, tau 2 s, p 0.012"""
        rate = adjusted_rate(2.03, SwitchingModel(tau_s=2.0, p_type2=0.012))

        assert rate == pytest.approx(1.9581, abs=1e-3)
        assert rate == pytest.approx(1.955, abs=5e-3)

    def test_zero_switching_time(self):
        """Test that a free switch leaves the rate unchanged"""
        assert adjusted_rate(5.0, SwitchingModel(tau_s=0.0, p_type2=0.3)) == pytest.approx(5.0)

    def test_session_rate_capped(self):
        """Test that a fast switch cannot raise the rate above g_R"""
        fast = SwitchingModel(tau_s=0.01, p_type2=0.5)

        assert adjusted_rate(10.0, fast) > 10.0
        assert session_rate(10.0, fast) == 10.0
        assert session_rate(10.0, None) == 10.0

    def test_nonpositive_rate_rejected(self):
        """Test that g_R must be positive"""
        with pytest.raises(ValidationError):
            adjusted_rate(0.0, SwitchingModel())

    def test_invalid_probability(self):
        """Test that p must lie strictly inside (0, 1)"""
        with pytest.raises(ValidationError):
            SwitchingModel(p_type2=0.0)

    def test_monte_carlo_bounded_by_analytic(self, rng):
        """Test that the simulated ratio is at least the analytic lower bound"""
        s = SwitchingModel(tau_s=2.0, p_type2=0.02)
        g_r = 2.03

        ratio = simulate_switching_ratio(g_r, s, 200_000, rng)

        bound = adjusted_rate(g_r, s) / g_r
        assert ratio >= bound - 0.01
        assert ratio < 1.0

    def test_switch_charged_on_entering_x_only(self, rng):
        """Test that only Z-to-X transitions cost tau_s"""
        s = SwitchingModel(tau_s=4.0, p_type2=0.5)
        g_r = 1.0

        ratio = simulate_switching_ratio(g_r, s, 200_000, rng)

        # A Z->X entry happens on a fraction p(1-p) of rounds.
        entries = s.p_type2 * (1 - s.p_type2)
        expected = 1.0 / (entries * s.tau_s + (1 - entries) / g_r) / g_r
        assert ratio == pytest.approx(expected, abs=0.01)
        assert ratio > adjusted_rate(g_r, s) / g_r


class TestDrift:
    """Test the drift ramp"""

    def test_disabled_by_default(self):
        """Test that the default model adds nothing"""
        d = DriftModel()

        assert not d.enabled
        assert d.mean_inflation() == 0.0
        assert d.corrections_in(10_000) == 0

    def test_sawtooth(self):
        """Test the ramp resets at each correction"""
        d = DriftModel(drift_rate=0.01, correction_period_s=3600.0, correction_dead_time_s=60.0)

        values = d.inflation(np.array([0.0, 1800.0, 3600.0, 5400.0]))

        assert values == pytest.approx([0.0, 0.005, 0.0, 0.005])
        assert d.mean_inflation() == pytest.approx(0.005)

    def test_corrections_reduce_effective_time(self):
        """Test that dead time is removed from the collection time"""
        t = Topology.from_bob_lengths([0, 0, 0])
        d = DriftModel(drift_rate=0.01, correction_period_s=1200.0, correction_dead_time_s=30.0)

        mean, effective, n_corr = expected_rounds(t, None, d, 12_300.0, rate_hz=1.0)

        assert n_corr == 10
        assert effective == pytest.approx(12_000.0)
        assert mean == pytest.approx(12_000.0)

    def test_negative_parameters_rejected(self):
        """Test drift validation"""
        with pytest.raises(ValidationError):
            DriftModel(drift_rate=-1.0)


class TestSession:
    """Test whole-session simulation"""

    def test_reference_round_count(self):
        """Test the expected rounds of 177 h at 6.5 Hz"""
        t = Topology.from_bob_lengths([5, 10, 20])

        mean, _, _ = expected_rounds(t, None, DriftModel(), 177 * 3600.0, rate_hz=6.5)

        assert mean == pytest.approx(4_141_800)

    def test_required_duration(self):
        """Test the inverse of the expected round count"""
        assert required_duration(4_141_800, 6.5) == pytest.approx(177 * 3600.0)
        with pytest.raises(ValidationError):
            required_duration(10, 0.0)

    def test_poisson_session(self, rng, reference_noise):
        """Test that L is Poisson around rate * duration"""
        t = Topology.from_bob_lengths([0, 0, 0])
        s = SwitchingModel(tau_s=0.0, p_type2=0.05)

        result = run_session(t, s, DriftModel(), 1000.0, reference_noise, rng, rate_hz=20.0)

        assert result.expected_rounds == pytest.approx(20_000)
        assert abs(result.ledger.L - 20_000) < 4 * np.sqrt(20_000)
        assert result.ledger.n_parties == 4

    def test_exact_rounds(self, rng, reference_noise):
        """Test a deterministic session length"""
        t = Topology.from_bob_lengths([0, 0, 0])

        result = run_session(
            t, SwitchingModel(p_type2=0.1), DriftModel(), 10.0, reference_noise, rng,
            exact_rounds=5000, deterministic_m=True,
        )

        assert result.ledger.L == 5000
        assert result.ledger.schedule.m == 500

    def test_empty_session(self, rng, reference_noise):
        """Test that a tiny session yields no ledger"""
        t = Topology.from_bob_lengths([20, 10, 20])

        result = run_session(t, SwitchingModel(), DriftModel(), 1e-6, reference_noise, rng)

        assert result.empty
        assert result.summary()["rounds"] == 0

    def test_drift_inflates_qber(self, rng):
        """Test that drift raises the observed Z disagreement"""
        noise = OperationalNoise(q_x=0.0, q_ab=(0.0, 0.0, 0.0))
        t = Topology.from_bob_lengths([0, 0, 0])
        d = DriftModel(drift_rate=0.1, correction_period_s=3600.0, correction_dead_time_s=0.0)

        result = run_session(
            t, SwitchingModel(p_type2=0.01), d, 7200.0, noise, rng, rate_hz=20.0
        )

        ledger = result.ledger
        z = ledger.type1_indices()
        disagreement = np.mean(ledger.outcomes[0, z] != ledger.outcomes[1, z])
        assert disagreement == pytest.approx(0.05, abs=0.01)
        assert result.metadata["mean_qber_inflation"] == pytest.approx(0.05, abs=0.005)

    def test_party_mismatch(self, rng):
        """Test that topology and noise must agree on N"""
        t = Topology.from_bob_lengths([0, 0])

        with pytest.raises(ValidationError):
            run_session(t, SwitchingModel(), DriftModel(), 10.0, OperationalNoise.noiseless(3), rng)

    @pytest.mark.slow
    def test_round_count_concentration(self):
        """Test that 1000 sessions concentrate around the Poisson mean"""
        t = Topology.from_bob_lengths([0, 0, 0])
        noise = OperationalNoise.noiseless(3)
        counts = []
        for i in range(1000):
            rng = np.random.default_rng(i)
            result = run_session(
                t, SwitchingModel(p_type2=0.05), DriftModel(), 100.0, noise, rng, rate_hz=10.0
            )
            counts.append(result.ledger.L)

        assert np.mean(counts) == pytest.approx(1000.0, abs=4 * np.sqrt(1000.0 / 1000))
