import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubitid.bloch import (
    EXCITED,
    GROUND,
    ControlSpec,
    Parameters,
    generator,
    ideal_pulse,
    in_ball,
    propagate,
    pulse,
    readout_probability,
    relax_closed_form,
)
from qubitid.errors import ValidationError

rates = st.floats(1e-4, 0.05)
freqs = st.floats(0.1, 10.0)
parameters = st.builds(Parameters, gamma1=rates, kappa=st.floats(1e-3, 0.1), gamma2=rates,
                       omega=freqs)


def ball_vectors():
    return st.tuples(*(st.floats(-1, 1) for _ in range(3))).map(
        lambda v: np.array(v) / max(1.0, np.linalg.norm(v)))


class TestParameters:
    def test_round_trip(self, theta_star):
        assert Parameters.from_array(theta_star.as_array()) == theta_star
        assert Parameters.from_dict(theta_star.as_dict()) == theta_star

    @pytest.mark.parametrize("field", ["gamma1", "kappa", "gamma2", "omega"])
    def test_rejects_non_positive(self, theta_star, field):
        d = theta_star.as_dict()
        d[field] = 0.0
        with pytest.raises(ValidationError):
            Parameters.from_dict(d)

    def test_control_spec(self):
        assert ControlSpec(u=1.0, u_max=1e5).epsilon == pytest.approx(1e-5)
        with pytest.raises(ValidationError):
            ControlSpec(u=2.0, u_max=1.0)


class TestGenerator:
    def test_table_values(self, theta_star):
        A, b = generator(theta_star, 0.0)
        np.testing.assert_allclose(A, [[-0.007, -2, 0], [2, -0.007, 0], [0, 0, -0.002]], atol=1e-15)
        np.testing.assert_allclose(b, [0, 0, 0.002])

    def test_control_entries(self, theta_star):
        A, _ = generator(theta_star, 1.0)
        assert A[1, 2] == pytest.approx(-0.015)
        assert A[2, 1] == pytest.approx(0.015)


class TestPropagate:
    def test_ground_is_equilibrium(self, theta_star):
        np.testing.assert_allclose(propagate(GROUND, 0.0, 123.0, theta_star), GROUND, atol=1e-14)

    def test_relaxation_of_excited(self, theta_star):
        v = propagate(EXCITED, 0.0, 530.0, theta_star)
        np.testing.assert_allclose(v, [0, 0, 1 - 2 * math.exp(-1.06)], atol=1e-12)
        assert readout_probability(v) == pytest.approx(0.34646, abs=1e-5)

    def test_zero_duration_is_identity(self, theta_star):
        v0 = np.array([0.1, -0.2, 0.3])
        np.testing.assert_array_equal(propagate(v0, 5.0, 0.0, theta_star), v0)

    def test_negative_duration(self, theta_star):
        with pytest.raises(ValidationError):
            propagate(EXCITED, 0.0, -1.0, theta_star)
        with pytest.raises(ValidationError):
            relax_closed_form(EXCITED, -1.0, theta_star)

    def test_bad_shape(self, theta_star):
        with pytest.raises(ValidationError):
            propagate([1, 0], 0.0, 1.0, theta_star)

    @settings(max_examples=60, deadline=None)
    @given(parameters, ball_vectors(), st.floats(-1e3, 1e3), st.floats(0, 50))
    def test_stays_in_ball(self, theta, v0, u, t):
        assert in_ball(propagate(v0, u, t, theta))

    @settings(max_examples=60, deadline=None)
    @given(parameters, ball_vectors(), st.floats(0, 20), st.floats(0, 20))
    def test_semigroup(self, theta, v0, s, t):
        once = propagate(v0, 0.3, s + t, theta)
        twice = propagate(propagate(v0, 0.3, s, theta), 0.3, t, theta)
        np.testing.assert_allclose(once, twice, atol=1e-11)


class TestRelaxClosedForm:
    def test_example(self, theta_star):
        t = 0.62832
        v = relax_closed_form([1, 0, 0], t, theta_star)
        damp = math.exp(-0.0043982)
        # the z drift 1 - exp(-gamma1 t) is small but not zero
        expected = [damp * math.cos(2 * t), damp * math.sin(2 * t), -math.expm1(-0.002 * t)]
        np.testing.assert_allclose(v, expected, atol=1e-7)
        np.testing.assert_allclose(v[:2], [0.30766, 0.94688], atol=1e-5)

    def test_long_time_reaches_ground(self, theta_star):
        np.testing.assert_allclose(relax_closed_form(EXCITED, 1e5, theta_star), GROUND, atol=1e-12)

    def test_axis_preserved(self, theta_star):
        v = relax_closed_form([0, 0, 0.4], 17.0, theta_star)
        assert v[0] == 0 and v[1] == 0

    @settings(max_examples=80, deadline=None)
    @given(parameters, ball_vectors(), st.floats(0, 1000))
    def test_matches_propagate(self, theta, v0, t):
        np.testing.assert_allclose(relax_closed_form(v0, t, theta), propagate(v0, 0.0, t, theta),
                                   atol=1e-10)


class TestPulses:
    def test_ideal_example(self):
        np.testing.assert_allclose(ideal_pulse(EXCITED, 1, 0.94248), [0, 0.80902, -0.58779], atol=1e-5)

    def test_ideal_pi_and_zero(self):
        np.testing.assert_allclose(ideal_pulse(EXCITED, 1, math.pi), GROUND, atol=1e-15)
        v = np.array([0.2, 0.3, -0.4])
        np.testing.assert_array_equal(ideal_pulse(v, -1, 0.0), v)

    @given(ball_vectors(), st.floats(0, 2 * math.pi))
    def test_ideal_inverse(self, v, a):
        np.testing.assert_allclose(ideal_pulse(ideal_pulse(v, 1, a), -1, a), v, atol=1e-12)

    def test_saturated_close_to_ideal(self, theta_star):
        finite = pulse(EXCITED, 1, 62.832, 1e5, theta_star)
        ideal = ideal_pulse(EXCITED, 1, theta_star.kappa * 62.832)
        assert np.max(np.abs(finite - ideal)) < 1.26e-3

    def test_pulse_validation(self, theta_star):
        with pytest.raises(ValidationError):
            pulse(EXCITED, 0, 1.0, 1e5, theta_star)
        with pytest.raises(ValidationError):
            pulse(EXCITED, 1, -1.0, 1e5, theta_star)


class TestReadout:
    def test_poles(self):
        assert readout_probability(GROUND) == 0.0
        assert readout_probability(EXCITED) == 1.0

    def test_outside_ball(self):
        with pytest.raises(ValidationError):
            readout_probability([0, 0, 1.01])
