"""
Unit tests for studies, writers and the one-time pad
"""
import csv
import json
import math

import numpy as np
import pytest

from app.constants import ZERO_LOSS_RATE_HZ
from app.core.exceptions import KeyExhaustedError, KeyReuseError, RecordFormatError, ValidationError
from app.models.keys import ConferenceKey
from app.services.analysis import (
    AKR_COLUMNS,
    AKR_PLOT,
    KeyUsageLedger,
    decrypt_image,
    encrypt_image,
    fit_power_trend,
    otp_decrypt,
    otp_encrypt,
    placeholder_image,
    run_akr_study,
    sanitize,
    surface_gradient,
    surface_value,
    topology_noise_surface,
    write_csv,
    write_json,
    write_table,
)
from app.services.network_sim import SwitchingModel


def _key(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return ConferenceKey(bits=np.tile(bits, (4, 1)), party_names=["A", "B", "C", "D"], security_label=1e-8)


class TestAkrStudy:
    """Test the AKR-versus-loss table"""

    def test_rows(self):
        """Test the zero-loss row and the constant AKR"""
        rows = run_akr_study()

        assert len(rows) == 4
        assert rows[0].g_r_hz == pytest.approx(ZERO_LOSS_RATE_HZ)
        assert rows[0].loss_db == 0.0
        assert all(r.akr == pytest.approx(0.596, abs=1e-3) for r in rows)

    def test_switched_rate(self):
        """Test the switched rate of the lossiest topology"""
        rows = run_akr_study(switching=SwitchingModel(tau_s=2.0, p_type2=0.012))

        last = rows[-1]
        assert last.g_r_hz == pytest.approx(2.03)
        assert last.switched_rate_hz == pytest.approx(1.958, abs=1e-3)
        assert last.key_rate_hz == pytest.approx(last.akr * 2.03)

    def test_model_fills_gaps(self):
        """Test that unmeasured topologies use the loss model"""
        rows = run_akr_study(topologies=[((0.0, 0.0, 20.0), None, None)])

        assert rows[0].loss_db == pytest.approx(rows[0].model_loss_db)
        assert rows[0].g_r_hz == pytest.approx(rows[0].model_g_r_hz)

    def test_visibility_sets_qx(self):
        """Test Q_X derived from visibility"""
        rows = run_akr_study(visibility=0.9)

        assert rows[0].q_x == pytest.approx(0.05)


class TestNoiseSurface:
    """Test the topology noise surface"""

    @pytest.mark.parametrize("c", [0.3, 0.9, 1.5, 2.1])
    def test_symmetric_minimum(self, c):
        """Test that Q_X is minimized by the even split"""
        surface = topology_noise_surface(c, grid_step=0.01)

        assert surface.argmin[0] == pytest.approx(c / 3, abs=0.01 + 1e-9)
        assert surface.argmin[1] == pytest.approx(c / 3, abs=0.01 + 1e-9)
        assert surface.qber_minimum == pytest.approx(c / 6)

    def test_zero_noise(self):
        """Test that c = 0 leaves a single feasible point"""
        surface = topology_noise_surface(0.0, grid_step=0.1)

        assert np.isfinite(surface.values).sum() == 1
        assert surface.minimum == 0.0
        assert surface.argmin == (0.0, 0.0)

    def test_infeasible_points_masked(self):
        """Test that p3 outside [0, 1] is NaN"""
        surface = topology_noise_surface(0.5, grid_step=0.1)

        assert np.isnan(surface.values[-1, -1])
        assert all(0.0 <= row["p3"] <= 1.0 + 1e-9 for row in surface.rows())

    def test_gradient_matches_finite_differences(self):
        """Test analytic gradients against central differences"""
        rng = np.random.default_rng(4)
        h = 1e-5
        for _ in range(20):
            c = rng.uniform(0.5, 2.5)
            p1, p2 = rng.uniform(0.1, 0.9, size=2)
            d1, d2 = surface_gradient(p1, p2, c)
            fd1 = (surface_value(p1 + h, p2, c) - surface_value(p1 - h, p2, c)) / (2 * h)
            fd2 = (surface_value(p1, p2 + h, c) - surface_value(p1, p2 - h, c)) / (2 * h)
            assert d1 == pytest.approx(fd1, abs=1e-6)
            assert d2 == pytest.approx(fd2, abs=1e-6)

    def test_invalid_inputs(self):
        """Test range checks on c and the grid step"""
        with pytest.raises(ValidationError):
            topology_noise_surface(3.5)
        with pytest.raises(ValidationError):
            topology_noise_surface(1.0, grid_step=0.0)


class TestPowerTrend:
    """Test the power-trend fit"""

    def test_exact_line(self):
        """Test recovery of noiseless linear data"""
        power = np.linspace(10, 100, 10)
        samples = np.column_stack((power, 0.0352 + 1.48e-4 * power, 1.59e-4 * power))

        fit = fit_power_trend(samples)

        assert fit.qx_slope == pytest.approx(1.48e-4, abs=1e-12)
        assert fit.qx_intercept == pytest.approx(0.0352, abs=1e-12)
        assert fit.qber_slope == pytest.approx(1.59e-4, abs=1e-12)
        assert fit.n_samples == 10

    def test_noisy_intercept(self):
        """Test that the intercept is recovered within its standard error"""
        rng = np.random.default_rng(6)
        sigma = 1e-3
        power = np.repeat(np.linspace(20, 100, 5), 10)
        q_x = 0.05 + 1e-4 * power + rng.normal(0, sigma, power.size)
        samples = np.column_stack((power, q_x, 1.59e-4 * power))

        fit = fit_power_trend(samples)

        sxx = np.sum((power - power.mean()) ** 2)
        std_err = sigma * np.sqrt(1 / power.size + power.mean() ** 2 / sxx)
        assert abs(fit.qx_intercept - 0.05) < 5 * std_err
        assert fit.qx_residual_std == pytest.approx(sigma, rel=0.5)

    def test_single_power_rejected(self):
        """Test that one distinct power cannot be fitted"""
        with pytest.raises(ValidationError):
            fit_power_trend([(100.0, 0.05, 0.0159), (100.0, 0.051, 0.016)])

    def test_bad_shape(self):
        """Test that samples must be triples"""
        with pytest.raises(ValidationError):
            fit_power_trend([(1.0, 2.0)])


class TestOneTimePad:
    """Test one-time-pad encryption"""

    def test_round_trip(self, rng):
        """Test that decryption inverts encryption"""
        key = _key(rng.integers(0, 2, 4096))
        usage = KeyUsageLedger(key.length)
        message = b"conference key demo"

        cipher, offset = otp_encrypt(message, key, usage)

        assert cipher != message
        assert otp_decrypt(cipher, key, offset) == message

    def test_empty_message(self, rng):
        """Test that an empty message uses no key"""
        key = _key(rng.integers(0, 2, 64))
        usage = KeyUsageLedger(key.length)

        cipher, offset = otp_encrypt(b"", key, usage)

        assert cipher == b""
        assert usage.next_offset == 0

    def test_sequential_ranges(self, rng):
        """Test that consecutive messages use disjoint key ranges"""
        key = _key(rng.integers(0, 2, 1024))
        usage = KeyUsageLedger(key.length)

        _, first = otp_encrypt(b"a" * 10, key, usage)
        _, second = otp_encrypt(b"b" * 10, key, usage)

        assert (first, second) == (0, 80)
        assert usage.remaining == 1024 - 160

    def test_reuse_rejected(self, rng):
        """Test that spent key bits cannot be used again"""
        key = _key(rng.integers(0, 2, 1024))
        usage = KeyUsageLedger(key.length)
        otp_encrypt(b"x" * 10, key, usage)

        with pytest.raises(KeyReuseError):
            otp_encrypt(b"y", key, usage, offset=0)

    def test_exhausted(self, rng):
        """Test that a message longer than the key is refused"""
        key = _key(rng.integers(0, 2, 64))
        usage = KeyUsageLedger(key.length)

        with pytest.raises(KeyExhaustedError):
            otp_encrypt(b"123456789", key, usage)
        with pytest.raises(KeyExhaustedError):
            otp_decrypt(b"123456789", key, 0)

    def test_ledger_persists(self, tmp_path, rng):
        """Test that spent ranges survive a reload"""
        key = _key(rng.integers(0, 2, 1024))
        key_path = tmp_path / "conference.ckky"
        otp_encrypt(b"z" * 16, key, KeyUsageLedger.for_key_file(key_path, key.length))

        reloaded = KeyUsageLedger.for_key_file(key_path, key.length)

        assert (tmp_path / "conference.usage.json").exists()
        assert reloaded.next_offset == 128
        with pytest.raises(KeyReuseError):
            reloaded.reserve(8, offset=64)

    def test_corrupt_ledger(self, tmp_path):
        """Test that overlapping ranges are rejected"""
        path = tmp_path / "k.usage.json"
        path.write_text(json.dumps({"key_bits": 100, "spent": [[0, 50], [40, 60]]}))

        with pytest.raises(RecordFormatError):
            KeyUsageLedger(100, path)

    def test_image_round_trip(self, rng):
        """Test the 211 x 211 placeholder image under a reference-size key"""
        key = _key(rng.integers(0, 2, 1_150_000))
        usage = KeyUsageLedger(key.length)
        image = placeholder_image()

        cipher, offset = encrypt_image(image, key, usage)

        assert image.size == (211, 211)
        assert usage.next_offset == 211 * 211 * 3 * 8
        assert cipher.tobytes() != image.tobytes()
        assert decrypt_image(cipher, key, offset).tobytes() == image.tobytes()


class TestWriters:
    """Test table and report writers"""

    def test_csv_columns(self, tmp_path):
        """Test column order and NaN formatting"""
        rows = run_akr_study()

        path = write_csv(rows, AKR_COLUMNS, tmp_path / "akr.csv")

        with path.open() as handle:
            table = list(csv.reader(handle))
        assert tuple(table[0]) == AKR_COLUMNS
        assert len(table) == 5

    def test_gnuplot_script(self, tmp_path):
        """Test that a plot script is written next to the table"""
        written = write_table(run_akr_study(), AKR_COLUMNS, tmp_path / "akr.csv", AKR_PLOT)

        script = written[1].read_text()
        assert written[1].suffix == ".gp"
        assert "'akr.csv' using" in script
        assert "akr.png" in script

    def test_json_sanitized(self, tmp_path):
        """Test that non-finite values become null"""
        path = write_json({"a": math.inf, "b": np.float64(1.5), "c": [math.nan]}, tmp_path / "r.json")

        assert json.loads(path.read_text()) == {"a": None, "b": 1.5, "c": [None]}
        assert sanitize((1, 2)) == [1, 2]
