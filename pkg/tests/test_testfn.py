import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from degentrace import TestFunction
from degentrace.errors import DecayError


def test_hat_examples(tf):
    assert tf.eval_hat(2.0) == 0.0
    assert tf.eval_hat(1.0) == 0.0
    assert tf.eval_hat(0.0) == pytest.approx(math.exp(-1), rel=1e-15)
    t = np.linspace(-1.2, 1.2, 101)
    np.testing.assert_array_equal(tf.eval_hat(t), tf.eval_hat(-t))


def test_phi_at_zero_is_mean_of_hat(tf):
    ref, _ = quad(tf.eval_hat, -1, 1, epsabs=1e-14, epsrel=1e-12)
    assert tf.eval_phi(0.0) == pytest.approx(ref / (2 * math.pi), rel=1e-12)
    assert tf.eval_phi(0.0) > 0


def test_phi_is_even(tf):
    s = np.linspace(0, 60, 241)
    np.testing.assert_allclose(tf.eval_phi(s), tf.eval_phi(-s), rtol=0, atol=1e-12)


@pytest.mark.parametrize("s", [10.0, 3.3, 47.0])
def test_phi_matches_adaptive_oracle(tf, s):
    # QUADPACK's Fourier-weighted rule is independent of the tanh-type rule used internally
    ref, _ = quad(tf.eval_hat, -1, 1, weight="cos", wvar=s, epsabs=1e-13, epsrel=1e-11, limit=400)
    assert tf.eval_phi(s, check=True) == pytest.approx(ref / (2 * math.pi), abs=1e-10)


def test_band_radius_rescaling():
    a, b = TestFunction(T=1.0), TestFunction(T=0.5)
    s = np.array([0.0, 1.0, 7.5])
    np.testing.assert_allclose(b.eval_phi(s), 0.5 * a.eval_phi(0.5 * s), rtol=1e-11, atol=1e-15)


def test_tail_cutoff_examples(tf):
    sup = abs(tf.eval_phi(0.0))
    assert tf.tail_cutoff(sup) == 0.0
    c8, c10, c12 = (tf.tail_cutoff(t) for t in (1e-8, 1e-10, 1e-12))
    assert c8 <= c10 <= c12
    assert np.isfinite(c12)
    assert c12 == pytest.approx(486.5, rel=0.02)
    s = np.linspace(c12, 2 * c12, 2001)
    assert np.max(np.abs(tf.eval_phi(s))) <= 1e-12


def test_tail_cutoff_rejects_noise_level(tf):
    with pytest.raises(DecayError):
        tf.tail_cutoff(1e-30)
    with pytest.raises(ValueError):
        tf.tail_cutoff(0.0)


def test_plancherel(tf):
    lhs, _ = quad(lambda t: tf.eval_hat(t) ** 2, -1, 1, epsabs=1e-16, epsrel=1e-13)
    lhs /= 2 * math.pi
    s_max = tf.tail_cutoff(1e-14)
    # phi is entire with band-limited transform, so the trapezoid rule with step < pi/T is exact
    # up to the truncation at s_max
    step = 0.5
    s = np.arange(0.0, s_max + step, step)
    vals = tf.eval_phi(s) ** 2
    rhs = step * (2 * np.sum(vals) - vals[0])
    assert rhs == pytest.approx(lhs, rel=1e-8)


def test_band_limit_by_fft(tf):
    step = 0.25
    s = step * np.arange(-8192, 8192)
    vals = tf.eval_phi(s)
    amp = np.abs(np.fft.fftshift(np.fft.fft(np.fft.ifftshift(vals)))) * step
    omega = np.fft.fftshift(np.fft.fftfreq(s.size, d=step)) * 2 * math.pi
    outside = np.abs(omega) > 1.0 + 2 * math.pi / (s.size * step)
    total = np.sum(amp)
    assert np.sum(amp[outside]) / total < 1e-8
    inside = ~outside
    np.testing.assert_allclose(amp[inside], tf.eval_hat(omega[inside]), atol=1e-10)


def test_profiles():
    t2 = TestFunction(profile="bump-t2")
    assert t2.hat0 == 0.0
    ac = TestFunction(profile="autocorrelation")
    s = np.linspace(0, 40, 81)
    assert np.all(ac.eval_phi(s) >= 0)
    with pytest.raises(ValueError):
        TestFunction(profile="gaussian")
    with pytest.raises(ValueError):
        TestFunction(T=0.0)


def test_derivative_matches_finite_difference(tf):
    s = np.array([0.3, 2.0, 11.0])
    d = 1e-5
    fd = (tf.eval_phi(s + d) - tf.eval_phi(s - d)) / (2 * d)
    np.testing.assert_allclose(tf.eval_dphi(s), fd, atol=1e-9)


def test_table_matches_direct_evaluation(tf):
    tab = tf.table(50.0)
    s = np.linspace(0, 50, 333)
    np.testing.assert_allclose(tab(s), tf.eval_phi(s), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(-200.0, 200.0), T=st.floats(0.3, 3.0))
def test_even_and_bounded_by_value_at_zero(s, T):
    # phi_hat >= 0 gives |phi(s)| <= phi(0)
    tf = TestFunction(T=T)
    v = float(tf.eval_phi(s))
    assert v == pytest.approx(float(tf.eval_phi(-s)), abs=1e-15)
    assert abs(v) <= float(tf.eval_phi(0.0)) * (1 + 1e-12)
