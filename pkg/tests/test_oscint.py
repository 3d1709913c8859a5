import csv
from dataclasses import replace

import numpy as np
import pytest

from degentrace.errors import PreconditionError, UnsupportedPathError
from degentrace.oscint import (BumpFactor, GeneralAmplitude, ModelIntegral, TaylorFactor, brute_force_3d,
                               coefficient_oracle, expansion_exponent, fit_coefficient, residual_order,
                               standard_integral, write_oscint_csv)


@pytest.fixture(scope="module")
def p4():
    return standard_integral(4)


def test_zero_amplitude():
    p = ModelIntegral(a1=BumpFactor(1.0, 0.5, 0.0))
    assert p.direct_value(30.0).value == 0
    assert p.expansion_value(30.0, 1, 1) == 0


def test_even_real_y0_factor_gives_real_value():
    p = ModelIntegral(a1=BumpFactor(0.0, 0.7))
    for lam in (5.0, 50.0, 500.0):
        v = p.direct_value(lam).value
        assert abs(v.imag) <= 1e-12 * abs(v)


@pytest.mark.slow
def test_direct_value_matches_brute_force(p4):
    lam = 50.0
    direct = p4.direct_value(lam)
    brute = brute_force_3d(p4, lam)
    assert abs(direct.value - brute) <= 1e-8 * direct.scale


@pytest.mark.parametrize("k", [4, 6])
@pytest.mark.parametrize("jl", [(0, 0), (1, 0), (0, 1), (2, 1)])
def test_coefficients_match_oracle(k, jl):
    p = standard_integral(k)
    c = p.expansion_coefficient(*jl)
    ref = coefficient_oracle(p, *jl)
    assert abs(c - ref) <= 1e-8 * abs(ref)


def test_vanishing_taylor_coefficient():
    p = ModelIntegral(a2=TaylorFactor((0.0, 1.0), 0.0, 1.0))
    for l in range(4):
        assert p.expansion_coefficient(0, l) == 0
    assert p.expansion_coefficient(1, 0) != 0


def test_flat_amplitude_has_zero_expansion():
    p = ModelIntegral(a2=TaylorFactor((1.0,), 2.0, 1.0), a3=TaylorFactor((1.0,), 2.0, 1.0))
    assert p.expansion_value(1e3, 3, 3) == 0
    # the absolute integral bounds |I| and decays faster than any power
    d10, d100 = (p.direct_value(lam, rtol=1e-3) for lam in (10.0, 100.0))
    assert abs(d100.value) <= d100.scale
    assert d100.scale <= 1e-5 * d10.scale


def test_exponents():
    assert expansion_exponent(0, 0, 4) == pytest.approx(0.75)
    assert expansion_exponent(1, 2, 6) == pytest.approx(1.5)


def test_residual_decreases_and_matches_next_exponent(p4):
    lam = np.geomspace(1e2, 1e5, 10)
    fit = residual_order(p4, 0, 0, lam)
    assert np.all(np.diff(fit.residual) < 0)
    assert fit.slope <= fit.predicted + 0.1
    assert abs(fit.slope - fit.predicted) <= 0.1


def test_residual_slope_is_scale_invariant(p4):
    lam = np.geomspace(1e2, 1e5, 10)
    a = residual_order(p4, 1, 0, lam).slope
    b = residual_order(p4, 1, 0, 2 * lam).slope
    assert abs(a - b) <= 0.02


def test_adding_a_row_changes_sum_by_next_order(p4):
    k = 4
    lams = np.array([1e3, 1e4])
    diffs = [abs(p4.expansion_value(lam, 1, 0) - p4.expansion_value(lam, 0, 0)) for lam in lams]
    slope = np.log(diffs[1] / diffs[0]) / np.log(10)
    assert slope == pytest.approx(-(2 / 2 + 1 / k), abs=1e-9)


def test_indefinite_mode():
    p = standard_integral(4, mode="indefinite")
    with pytest.raises(UnsupportedPathError):
        p.expansion_coefficient(0, 0)
    fit = residual_order(p, 0, 0, np.geomspace(1e2, 1e4, 6))
    assert fit.slope is not None and fit.predicted is None


def test_conjugation():
    p = ModelIntegral(k=6, a1=BumpFactor(0.8, 0.4, 0.3 + 0.7j), a2=TaylorFactor((1.0, 0.5j), 0.2, 1.0))
    q = p.conjugate()
    for lam in (20.0, 400.0):
        a, b = p.direct_value(lam).value, q.direct_value(lam).value
        assert abs(b - np.conj(a)) <= 1e-12 * abs(a)


def test_linearity_of_coefficients():
    base = standard_integral(4)
    pa = replace(base, a2=TaylorFactor((1.0, 0.0, 0.0), 0.2, 1.0), _coef_cache={})
    pb = replace(base, a2=TaylorFactor((0.0, 1.0, 2.0), 0.2, 1.0), _coef_cache={})
    pc = replace(base, a2=TaylorFactor((2.0, -3.0, -6.0), 0.2, 1.0), _coef_cache={})
    for jl in [(0, 0), (1, 1), (2, 0)]:
        lhs = pc.expansion_coefficient(*jl)
        rhs = 2 * pa.expansion_coefficient(*jl) - 3 * pb.expansion_coefficient(*jl)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1e-300)


def test_full_domain_coefficients(p4):
    full = standard_integral(4, domain="full")
    assert full.expansion_coefficient(1, 0) == 0
    assert full.expansion_coefficient(0, 1) == 0
    assert abs(full.expansion_coefficient(0, 0) - 4 * p4.expansion_coefficient(0, 0)) <= 1e-14


def test_general_amplitude_matches_separable(p4):
    a1, a2, a3 = p4.a1, p4.a2, p4.a3
    gen = GeneralAmplitude(lambda y0, y1, y2: a1(y0) * a2(y1) * a3(y2), a1.support, (-0.8, 1.3), 1.0)
    pg = ModelIntegral(k=4, general=gen)
    for lam in (10.0, 30.0):
        a, b = p4.direct_value(lam).value, pg.direct_value(lam).value
        assert abs(a - b) <= 1e-9 * abs(a)
    for jl in [(0, 0), (1, 0), (0, 1)]:
        a, b = p4.expansion_coefficient(*jl), pg.expansion_coefficient(*jl)
        assert abs(a - b) <= 1e-6 * abs(a)


def test_factorial_normalization_is_certified():
    p = ModelIntegral(k=4, a1=BumpFactor(1.0, 0.5), a2=TaylorFactor((0.0, 1.0), 0.0, 1.0),
                      a3=TaylorFactor((1.0,), 0.3, 1.0))
    fitted, _ = fit_coefficient(p, 1, np.geomspace(1e2, 1e4, 8))
    formula = p.expansion_coefficient(1, 0)
    assert abs(fitted - formula) <= 0.01 * abs(formula)


def test_fit_requires_vanishing_slower_terms(p4):
    with pytest.raises(PreconditionError):
        fit_coefficient(p4, 1, np.geomspace(1e2, 1e4, 8))


def test_validation():
    with pytest.raises(PreconditionError):
        ModelIntegral(k=5)
    with pytest.raises(ValueError):
        ModelIntegral(mode="saddle")
    with pytest.raises(ValueError):
        standard_integral(4).direct_value(-1.0)
    with pytest.raises(ValueError):
        residual_order(standard_integral(4), 0, 0, [1e2, 1e3, 1e4])


def test_csv(tmp_path, p4):
    fit = residual_order(p4, 0, 0, np.geomspace(1e2, 1e3, 6))
    path = tmp_path / "oscint.csv"
    write_oscint_csv(path, fit.rows())
    rows = list(csv.reader(path.open()))
    assert rows[0][:6] == ["lambda", "direct_re", "direct_im", "partial_sum", "residual", "mode"]
    assert len(rows) == 7
    assert complex(rows[1][3]) == pytest.approx(fit.partial[0], rel=1e-15)
