import json
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from degentrace import PRESETS, TestFunction
from degentrace.acceptance import phi_moment
from degentrace.errors import ConditioningError, PreconditionError
from degentrace.asympt import (LeadingTermRegressor, exponent, fit_leading, lattice_exponents,
                               leading_coefficient_phase_space, leading_coefficient_polar, liouville_volume,
                               phase_volume, prediction_report, regular_level_prediction, weyl_scaling_check,
                               write_fit_csv, write_prediction_json)
from degentrace.model import preset_model

LAMBDA00 = {"quartic-1d": 0.07965192766, "sextic-1d": 0.0764245049, "witten-1d": 0.0481444212,
            "radial-quartic-2d": 0.0508304617}


def test_exponent_table():
    assert exponent(1, 4) == Fraction(-1, 4)
    assert exponent(1, 6) == Fraction(-1, 3)
    assert exponent(2, 4) == Fraction(-1, 2)
    assert exponent(2, 6) == Fraction(-2, 3)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("k", [4, 6, 8, 10])
def test_degenerate_exponent_less_singular_than_regular(n, k):
    assert exponent(n, k) > 1 - n


def _quadrant_oracle(tf, k, n=1):
    """``int int_{R+^2} phi(u^2 + v^k) u^(n-1) v^(n-1)`` through the Beta reduction."""
    a, b = n / 2, n / k
    return beta_fn(a, b) / (2 * k) * phi_moment(tf, a + b)


@pytest.mark.parametrize("name,k", [("quartic-1d", 4), ("sextic-1d", 6)])
def test_polar_coefficient_matches_beta_oracle(tf, name, k):
    pol = leading_coefficient_polar(preset_model(name), tf)
    ref = 4 / (2 * math.pi) * _quadrant_oracle(tf, k)
    assert pol.lambda00 == pytest.approx(ref, rel=1e-8)
    assert pol.lambda00 == pytest.approx(LAMBDA00[name], rel=1e-9)


def test_witten_coefficient_formula(tf):
    pol = leading_coefficient_polar(preset_model("witten-1d"), tf)
    ref = 4 / (2 * math.pi) * 2 ** (-2 / 3) * _quadrant_oracle(tf, 6)
    assert pol.lambda00 == pytest.approx(ref, rel=1e-8)


def test_radial_coefficient(tf):
    pol = leading_coefficient_polar(preset_model("radial-quartic-2d"), tf)
    ref = 2 * math.pi / (2 * math.pi) ** 2 * 2 * math.pi * _quadrant_oracle(tf, 4, n=2)
    assert pol.lambda00 == pytest.approx(ref, rel=1e-8)
    assert pol.lambda00 == pytest.approx(LAMBDA00["radial-quartic-2d"], rel=1e-9)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_two_routes_agree(tf, name):
    m = preset_model(name)
    a = leading_coefficient_polar(m, tf).lambda00
    b = leading_coefficient_phase_space(m, tf).lambda00
    assert a == pytest.approx(b, rel=1e-6)


def test_zero_test_function_gives_zero(quartic):
    assert leading_coefficient_phase_space(quartic, TestFunction(c=0.0)).lambda00 == 0.0


def test_dilation_of_test_function(quartic, tf):
    # phi(s / mu) is mu times the test function of band radius 1 / mu
    mu = 2.0
    base = leading_coefficient_phase_space(quartic, tf).lambda00
    dil = mu * leading_coefficient_phase_space(quartic, TestFunction(T=1 / mu)).lambda00
    assert dil == pytest.approx(mu**0.75 * base, rel=1e-8)


def test_weyl_identity(quartic, radial, tf):
    lhs, rhs, rel = weyl_scaling_check(quartic, tf, 0.1)
    assert rel < 1e-9
    lhs, rhs, rel = weyl_scaling_check(quartic, tf, 1.0)
    assert rel < 1e-12
    lhs, rhs, rel = weyl_scaling_check(radial, tf, 0.01)
    assert rel < 1e-8


def test_liouville_volume(quartic):
    a, _ = liouville_volume(quartic, 1.0, 1e-3)
    b, _ = liouville_volume(quartic, 1.0, 5e-4)
    assert a == pytest.approx(b, rel=1e-6)
    # the volume below E scales as E^(3/4) for x^4
    assert a == pytest.approx(0.75 * phase_volume(quartic, 1.0), rel=1e-8)
    area, _ = quad(lambda x: 2 * math.sqrt(1 - x**4), -1, 1, epsrel=1e-13)
    assert phase_volume(quartic, 1.0) == pytest.approx(area, rel=1e-10)


def test_regular_level_prediction(quartic, tf):
    pred = regular_level_prediction(quartic, 1.0, tf, 1e-3)
    # n = 1: the (2 pi h)^(1-n) prefactor is 1
    assert pred.stated_value == pytest.approx(tf.hat0 * pred.lvol, rel=1e-15)
    assert pred.value == pytest.approx(pred.stated_value / (2 * math.pi), rel=1e-15)
    assert pred.period > tf.T
    zero = regular_level_prediction(quartic, 1.0, TestFunction(profile="bump-t2"), 1e-3)
    assert zero.value == 0.0
    with pytest.raises(PreconditionError, match="period"):
        regular_level_prediction(quartic, 1.0, TestFunction(T=10.0), 1e-3)


def test_lattice_exponents():
    assert lattice_exponents(4, 2) == [Fraction(1, 4), Fraction(1, 2)]
    assert lattice_exponents(6, 3) == [Fraction(1, 6), Fraction(1, 3), Fraction(1, 2)]


def test_fit_recovers_synthetic_coefficients():
    h = np.geomspace(1e-2, 1e-8, 13)
    A, B1, B2 = 0.0796, -0.31, 0.52
    g = h**-0.25 * (A + B1 * h**0.25 + B2 * h**0.5)
    fit = fit_leading(h, g, Fraction(-1, 4), 4, 2)
    assert fit.A == pytest.approx(A, rel=1e-10)
    assert fit.corrections == pytest.approx([B1, B2], rel=1e-10)
    assert fit.residual_norm < 1e-10
    free = fit_leading(h, h**-0.25 * A, Fraction(-1, 4), 4, 2, free_exponent=True)
    assert free.slope == pytest.approx(-0.25, abs=1e-12)


def test_narrow_range_is_ill_conditioned():
    h = np.linspace(1e-3, 1.0001e-3, 6)
    with pytest.raises(ConditioningError) as info:
        fit_leading(h, h**-0.25, Fraction(-1, 4), 4, 2)
    assert info.value.condition_number > 1e8


def test_regressor():
    h = np.geomspace(1e-2, 1e-7, 10)
    g = h**-0.25 * (0.08 + 0.3 * h**0.25 - 0.1 * h**0.5)
    reg = LeadingTermRegressor(n=1, k=4).fit(h[:, None], g)
    assert reg.coef_ == pytest.approx([0.08, 0.3, -0.1], rel=1e-9)
    np.testing.assert_allclose(reg.predict(h[:, None]), g, rtol=1e-12)
    assert reg.score(h[:, None], g) == pytest.approx(1.0)


def test_reports(tmp_path, quartic, tf):
    rep = prediction_report(quartic, tf)
    write_prediction_json(tmp_path / "p.json", rep)
    back = json.loads((tmp_path / "p.json").read_text())
    assert set(back) >= {"n", "k", "exponent", "lambda00_polar", "lambda00_phase_space", "quadrature_error"}
    assert back["exponent"] == -0.25
    h = np.geomspace(1e-2, 1e-6, 6)
    fit = fit_leading(h, h**-0.25 * 0.08, Fraction(-1, 4), 4, 2)
    write_fit_csv(tmp_path / "fit.csv", fit, h, h**-0.25 * 0.08)
    assert (tmp_path / "fit.csv").read_text().startswith("h,gamma,fit,rel_residual")
