import math

import numpy as np
import pytest
from scipy.special import ive

from amble.errors import AmbleError
from amble.gait import (GaitClock, advance, leg_stance_expectations,
                        phase_expectation, swing_progress)


def vm_quadrature(phi, rho, kappa, n=100_001):
    """Independent oracle: Simpson integration of the Von Mises density over
    the swing arc [0, 2*pi*rho), distribution centred at 2*pi*phi."""
    theta = np.linspace(0.0, 2.0 * math.pi * rho, n)
    dens = np.exp(kappa * (np.cos(theta - 2.0 * math.pi * phi) - 1.0)) \
        / (2.0 * math.pi * ive(0, kappa))
    h = theta[1] - theta[0]
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.sum(w * dens) * h / 3.0)


def make_clock(phase=0.0, rho=0.45, kappa=50.0, theta_l=0.0, theta_r=0.5):
    return GaitClock(phase=phase, period=0.7, swing_ratio=rho,
                     theta_left=theta_l, theta_right=theta_r, kappa=kappa)


class TestAdvance:
    def test_wraps(self):
        clock = GaitClock(phase=0.9, period=1.0, swing_ratio=0.5)
        assert advance(clock, 0.2).phase == pytest.approx(0.1, abs=1e-12)

    def test_full_cycle_identity(self):
        clock = make_clock(phase=0.37)
        assert advance(clock, clock.period).phase == pytest.approx(0.37, abs=1e-12)

    def test_thousand_small_steps_return(self):
        clock = make_clock(phase=0.2)
        for _ in range(1000):
            clock = advance(clock, clock.period / 1000.0)
        assert clock.phase == pytest.approx(0.2, abs=1e-9)

    def test_other_fields_unchanged(self):
        clock = make_clock(phase=0.1)
        out = advance(clock, 0.05)
        assert (out.period, out.swing_ratio, out.kappa) == \
            (clock.period, clock.swing_ratio, clock.kappa)

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(AmbleError):
            advance(make_clock(), 0.0)


class TestPhaseExpectation:
    def test_mid_swing_saturates(self):
        pe = phase_expectation(0.25, 0.5, 50.0)
        assert pe.swing >= 0.99
        assert pe.swing == pytest.approx(vm_quadrature(0.25, 0.5, 50.0), abs=1e-6)

    def test_mid_stance_saturates(self):
        pe = phase_expectation(0.75, 0.5, 400.0)
        assert pe.stance >= 0.99

    def test_partition_random(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            pe = phase_expectation(rng.uniform(), rng.uniform(0.05, 0.95),
                                   rng.uniform(0.5, 500.0))
            assert abs(pe.swing + pe.stance - 1.0) < 1e-9
            assert 0.0 <= pe.swing <= 1.0

    def test_quadrature_oracle_grid(self):
        for rho, kappa in ((0.45, 50.0), (0.3, 8.0), (0.6, 200.0)):
            for phi in np.linspace(0.0, 1.0, 100, endpoint=False):
                expected = vm_quadrature(phi, rho, kappa)
                assert phase_expectation(phi, rho, kappa).swing == \
                    pytest.approx(expected, abs=1e-6)

    def test_hard_indicator_limit(self):
        # kappa -> infinity converges to 1[phi in (0, rho)] away from the edges
        kappa, rho, margin = 1e3, 0.45, 0.05
        for phi in np.linspace(0.0, 1.0, 200, endpoint=False):
            dist = min(abs(phi - 0.0), abs(phi - rho), abs(phi - 1.0))
            if dist < margin:
                continue
            hard = 1.0 if 0.0 < phi < rho else 0.0
            assert phase_expectation(phi, rho, kappa).swing == \
                pytest.approx(hard, abs=0.05)

    def test_smoothness_lipschitz(self):
        delta = 1e-4
        for kappa in (5.0, 50.0, 500.0):
            peak = 1.0 / float(ive(0, kappa))          # 2*pi*f_max
            bound = 1.05 * peak * delta + 1e-12
            for phi in np.linspace(0.0, 1.0, 500, endpoint=False):
                a = phase_expectation(phi, 0.45, kappa).swing
                b = phase_expectation((phi + delta) % 1.0, 0.45, kappa).swing
                assert abs(b - a) <= bound

    def test_domain_errors(self):
        with pytest.raises(AmbleError):
            phase_expectation(0.2, 1.0, 50.0)
        with pytest.raises(AmbleError):
            phase_expectation(0.2, 0.5, 0.0)


class TestLegExpectations:
    def test_equal_offsets_equal_legs(self):
        for phi in np.linspace(0, 1, 17, endpoint=False):
            clock = make_clock(phase=phi, theta_l=0.3, theta_r=0.3)
            q1, q2 = leg_stance_expectations(clock)
            assert q1 == q2

    def test_antiphase_walking(self):
        # left mid-swing, right mid-stance (quadrature oracle confirms)
        clock = make_clock(phase=0.25, rho=0.5, kappa=200.0)
        q1, q2 = leg_stance_expectations(clock)
        assert q1 == pytest.approx(1.0 - vm_quadrature(0.25, 0.5, 200.0), abs=1e-4)
        assert q1 < 0.01 and q2 > 0.99

    def test_periodic_in_phase(self):
        # binary-exact wrap for phase 0.5; fp-level wrap error otherwise
        assert leg_stance_expectations(make_clock(phase=0.5)) == \
            leg_stance_expectations(make_clock(phase=1.5))
        a = leg_stance_expectations(make_clock(phase=0.4))
        b = leg_stance_expectations(make_clock(phase=1.4))
        assert a == pytest.approx(b, abs=1e-10)

    def test_matches_phase_expectation(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            clock = make_clock(phase=rng.uniform(), rho=rng.uniform(0.2, 0.8),
                               kappa=rng.uniform(5, 300))
            q1, q2 = leg_stance_expectations(clock)
            e1 = phase_expectation((clock.phase + clock.theta_left) % 1.0,
                                   clock.swing_ratio, clock.kappa).stance
            e2 = phase_expectation((clock.phase + clock.theta_right) % 1.0,
                                   clock.swing_ratio, clock.kappa).stance
            assert q1 == pytest.approx(e1, abs=1e-5)
            assert q2 == pytest.approx(e2, abs=1e-5)


class TestSwingProgress:
    def test_cycle_start(self):
        assert swing_progress(0.0, 0.0, 0.4) == 0.0

    def test_swing_end(self):
        assert swing_progress(0.4, 0.0, 0.4) == pytest.approx(1.0, abs=1e-12)

    def test_midpoint(self):
        assert swing_progress(0.2, 0.0, 0.4) == pytest.approx(0.5, abs=1e-12)

    def test_offset_wraps(self):
        assert swing_progress(0.9, 0.3, 0.4) == pytest.approx(0.5, abs=1e-12)


class TestClockInvariants:
    def test_bad_parameters_rejected(self):
        with pytest.raises(AmbleError):
            GaitClock(phase=0.0, period=0.7, swing_ratio=0.0)
        with pytest.raises(AmbleError):
            GaitClock(phase=0.0, period=0.0, swing_ratio=0.5)
        with pytest.raises(AmbleError):
            GaitClock(phase=0.0, period=0.7, swing_ratio=0.5, kappa=-1.0)

    def test_phase_wrapped_on_construction(self):
        assert GaitClock(phase=1.75, period=1.0, swing_ratio=0.5).phase == \
            pytest.approx(0.75, abs=1e-12)
