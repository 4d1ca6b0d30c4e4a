"""
Unit tests for the noise model
"""
import numpy as np
import pytest

from app.core.exceptions import ValidationError
from app.services.noise_model import (
    DepolarizingParams,
    OperationalNoise,
    RoundType,
    SourceNoise,
    compose_noise,
    depol_channel,
    expected_qber_depol,
    expected_qx_depol,
    noise_for_parties,
    noise_from_power,
    qber_symmetric_minimum,
    qx_from_visibility,
    sample_round,
    sample_rounds,
)


class TestClosedForms:
    """Test the closed-form noise maps"""

    def test_qx_three_equal_bob_links(self):
        """Test Q_X for p_A = 0 and three Bob links at 0.1"""
        d = DepolarizingParams(p_A=0.0, p_B=(0.1, 0.1, 0.1))

        assert expected_qx_depol(d) == pytest.approx(0.1355, abs=1e-12)

    def test_noiseless_links(self):
        """Test that identity links give zero error"""
        d = DepolarizingParams.identity(3)

        assert expected_qx_depol(d) == 0.0
        assert all(expected_qber_depol(d, i) == 0.0 for i in range(3))

    def test_qber_depends_on_own_link_only(self):
        """Test Q_AB_i for p_Bi = 0.2 regardless of other Bobs"""
        d = DepolarizingParams(p_A=0.0, p_B=(0.2, 0.9, 0.0))

        assert expected_qber_depol(d, 0) == pytest.approx(0.1)
        assert expected_qber_depol(d, 2) == 0.0

    def test_qber_bob_index_out_of_range(self):
        """Test that a bad Bob index is rejected"""
        with pytest.raises(ValidationError):
            expected_qber_depol(DepolarizingParams.identity(3), 3)

    def test_visibility(self):
        """Test Q_X from visibility"""
        assert qx_from_visibility(0.9) == pytest.approx(0.05)
        assert qx_from_visibility(1.0) == 0.0

    def test_visibility_out_of_range(self):
        """Test that t > 1 is rejected"""
        with pytest.raises(ValidationError):
            qx_from_visibility(1.2)

    def test_probability_out_of_range(self):
        """Test that link strengths outside [0, 1] are rejected"""
        with pytest.raises(ValidationError):
            DepolarizingParams(p_A=-0.1, p_B=(0.1,))
        with pytest.raises(ValidationError):
            DepolarizingParams(p_A=0.0, p_B=(1.5,))

    def test_compose_matches_depolarizing_form(self):
        """Test that composing with a noiseless source equals the link formula"""
        d = DepolarizingParams(p_A=0.05, p_B=(0.1, 0.2, 0.3))

        composed = compose_noise(OperationalNoise.noiseless(3), d)

        assert composed.q_x == pytest.approx(expected_qx_depol(d))
        for i in range(3):
            assert composed.q_ab[i] == pytest.approx(expected_qber_depol(d, i))

    def test_compose_source_and_links(self):
        """Test serial composition of a noisy source with noisy links"""
        source = OperationalNoise(q_x=0.05, q_ab=(0.0, 0.0, 0.0))
        links = DepolarizingParams(p_A=0.0, p_B=(0.1, 0.1, 0.1))

        composed = compose_noise(source, links)

        assert composed.q_x == pytest.approx(0.17195, abs=1e-12)

    def test_compose_party_mismatch(self):
        """Test that composition checks party counts"""
        with pytest.raises(ValidationError):
            compose_noise(OperationalNoise.noiseless(2), DepolarizingParams.identity(3))

    def test_noise_from_power_operating_point(self):
        """Test that the default trend reproduces the 100 mW point"""
        noise = noise_from_power(SourceNoise())

        assert noise.q_x == pytest.approx(0.05)
        assert noise.qber() == pytest.approx(0.0159)
        assert noise.n_parties == 4

    def test_noise_from_power_zero_power(self):
        """Test that the intercept comes from the visibility"""
        source = SourceNoise(pump_power_mW=0.0)

        noise = noise_from_power(source)

        assert noise.q_x == pytest.approx(source.visibility_qx)
        assert noise.qber() == 0.0

    def test_zero_power_floor(self):
        """Test that the default source bottoms out at Q_X = 0.05"""
        source = SourceNoise(pump_power_mW=0.0)

        assert source.visibility_qx == pytest.approx(0.05)
        assert noise_from_power(source).q_x == pytest.approx(0.05)

    def test_symmetric_qber_minimum(self):
        """Test the even-split QBER minimum"""
        assert qber_symmetric_minimum(1.5, 3) == pytest.approx(0.25)
        with pytest.raises(ValidationError):
            qber_symmetric_minimum(3.5, 3)

    def test_operational_noise_rejects_empty_bobs(self):
        """Test that at least one Bob is required"""
        with pytest.raises(ValidationError):
            OperationalNoise(q_x=0.1)

    def test_noise_for_parties(self):
        """Test the party-count consistency check"""
        noise = OperationalNoise.noiseless(3)

        noise_for_parties(noise, ["A", "B", "C", "D"])
        with pytest.raises(ValidationError):
            noise_for_parties(noise, ["A", "B", "C"])


class TestDepolChannel:
    """Test the single-qubit depolarizing map"""

    def test_full_depolarization(self):
        """Test that p = 1 yields the maximally mixed state"""
        rho = np.array([[1, 0], [0, 0]], dtype=complex)

        out = depol_channel(rho, 1.0)

        assert np.allclose(out, np.eye(2) / 2)

    def test_bloch_shrink(self):
        """Test that the Bloch vector shrinks by 1 - p"""
        plus = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)

        out = depol_channel(plus, 0.3)

        assert np.trace(out).real == pytest.approx(1.0)
        assert 2 * out[0, 1].real == pytest.approx(0.7)

    def test_bad_shape(self):
        """Test that only 2x2 matrices are accepted"""
        with pytest.raises(ValidationError):
            depol_channel(np.eye(4), 0.1)


class TestSampling:
    """Test outcome sampling"""

    def test_noiseless_z_rounds_agree(self, rng):
        """Test that noiseless Z rounds give identical bits"""
        noise = OperationalNoise.noiseless(3)
        flags = np.zeros(2000, dtype=np.uint8)

        outcomes, _ = sample_rounds(noise, flags, rng)

        assert outcomes.shape == (4, 2000)
        assert np.all(outcomes == outcomes[0])

    def test_noiseless_x_rounds_even_parity(self, rng):
        """Test that noiseless X rounds have even parity"""
        noise = OperationalNoise.noiseless(3)
        flags = np.ones(2000, dtype=np.uint8)

        outcomes, _ = sample_rounds(noise, flags, rng)

        assert not np.any(np.bitwise_xor.reduce(outcomes, axis=0))

    def test_empirical_rates(self, rng, reference_noise):
        """Test that sampled error rates match the model within 4 sigma"""
        L = 200_000
        flags = (rng.random(L) < 0.5).astype(np.uint8)

        outcomes, _ = sample_rounds(reference_noise, flags, rng)

        x = flags == 1
        parity = np.bitwise_xor.reduce(outcomes[:, x], axis=0)
        n_x = int(x.sum())
        sigma = np.sqrt(0.05 * 0.95 / n_x)
        assert abs(parity.mean() - 0.05) < 4 * sigma

        z = ~x
        n_z = int(z.sum())
        sigma = np.sqrt(0.0159 * (1 - 0.0159) / n_z)
        for i in range(1, 4):
            rate = np.mean(outcomes[0, z] != outcomes[i, z])
            assert abs(rate - 0.0159) < 4 * sigma

    def test_x_marginals_uniform(self, rng, reference_noise):
        """Test that individual X outcomes are unbiased"""
        flags = np.ones(50_000, dtype=np.uint8)

        outcomes, _ = sample_rounds(reference_noise, flags, rng)

        sigma = np.sqrt(0.25 / 50_000)
        for row in outcomes:
            assert abs(row.mean() - 0.5) < 4 * sigma

    def test_phase_errors_match_x_parity(self, rng, reference_noise):
        """Test that on X rounds the recorded phase error is the parity"""
        flags = np.ones(5000, dtype=np.uint8)

        outcomes, phase = sample_rounds(reference_noise, flags, rng)

        assert np.array_equal(np.bitwise_xor.reduce(outcomes, axis=0), phase)

    def test_per_round_qab_shape_checked(self, rng, reference_noise):
        """Test that a drift array of the wrong shape is rejected"""
        flags = np.zeros(10, dtype=np.uint8)

        with pytest.raises(ValidationError):
            sample_rounds(reference_noise, flags, rng, q_ab_per_round=np.zeros((2, 10)))

    def test_single_round(self, rng):
        """Test single-round sampling in both bases"""
        noise = OperationalNoise.noiseless(3)

        z = sample_round(noise, RoundType.Z_ROUND, rng)
        x = sample_round(noise, RoundType.X_ROUND, rng)

        assert z.shape == (4,) and np.all(z == z[0])
        assert np.bitwise_xor.reduce(x) == 0
