import math

import pytest

from degentrace import PRESETS, parse_potential, validate_hypotheses
from degentrace.errors import DefinitenessError, StructureError
from degentrace.model import (HomogeneousForm, PotentialModel, eval_potential, format_potential,
                              load_potential, sphere_area, sphere_integral)


def _model(text):
    return parse_potential(text, allow_low_degree=True)


def test_quartic_passes_all_hypotheses(quartic):
    rep = validate_hypotheses(quartic, 0.5, 2.0)
    assert rep.passed
    assert [c.name for c in rep.checks] == ["critical_point", "degenerate_hessian", "even_order",
                                            "definite_germ", "confinement", "isolated_critical_point"]


def test_harmonic_fails_degenerate_hessian():
    rep = validate_hypotheses(_model("n = 1\nV 2 : 1.0"), 0.5, 2.0)
    assert not rep["degenerate_hessian"].passed
    assert not rep.passed


def test_negative_sextic_correction_fails_confinement_or_isolation():
    # x^4 - x^6 has further critical points at |x| = sqrt(2/3), where V = 4/27, and is negative beyond 1
    rep = validate_hypotheses(parse_potential("n = 1\nV 4 : 1.0\nV 6 : -1.0"), 0.5, 2.0)
    assert rep["definite_germ"].passed
    assert not rep["confinement"].passed
    assert not rep["isolated_critical_point"].passed
    assert abs(rep["isolated_critical_point"].witness[0]) == pytest.approx(math.sqrt(2 / 3), abs=1e-6)
    # with a window below 4/27 those points no longer matter
    low = validate_hypotheses(parse_potential("n = 1\nV 4 : 1.0\nV 6 : -1.0"), 0.1, 2.0)
    assert low["isolated_critical_point"].passed


def test_indefinite_germ_is_reported():
    m = parse_potential("n = 2\nV 4 0 : 1.0\nV 0 4 : -1.0")
    rep = validate_hypotheses(m, 0.5, 1.0)
    assert not rep["definite_germ"].passed
    assert rep["definite_germ"].witness is not None


def test_validation_is_deterministic(radial):
    a = validate_hypotheses(radial, 0.5, 2.0).to_dict()
    b = validate_hypotheses(radial, 0.5, 2.0).to_dict()
    assert a == b


def test_eval_potential_values():
    m = parse_potential("n = 2\nE_c = 0.5\nV 4 0 : 1.0\nV 2 2 : 2.0\nV 0 4 : 1.0\nW 2 0 : 3.0")
    # (1^2 + 2^2)^2 ... with x = (1, 1): 1 + 2 + 1 = 4, plus E_c
    assert eval_potential(m, [1.0, 1.0]) == pytest.approx(4.5, abs=1e-14)
    assert eval_potential(m, [1.0, 1.0], h=0.1) == pytest.approx(4.5 - 0.3, abs=1e-14)
    w = parse_potential("n = 1\nx0 = 1.0\nV 4 : 1.0\nV 6 : 5.0")
    assert eval_potential(w, 2.0) == pytest.approx(6.0, abs=1e-14)
    assert eval_potential(w, 1.5) == pytest.approx(0.0625 + 5 * 0.015625, abs=1e-14)


def test_sphere_integral_examples():
    q = HomogeneousForm(1, 4, {(4,): 1.0})
    assert sphere_integral(q, -0.25) == pytest.approx(2.0, rel=1e-14)
    r = HomogeneousForm.radial_power(2, 4)
    assert sphere_integral(r, -0.5) == pytest.approx(2 * math.pi, rel=1e-12)
    w = HomogeneousForm(1, 6, {(6,): 16.0})
    assert sphere_integral(w, -1 / 6) == pytest.approx(2 ** (1 / 3), rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sphere_integral_exponent_zero_is_area(n):
    form = HomogeneousForm.radial_power(n, 4)
    assert sphere_integral(form, 0.0) == pytest.approx(sphere_area(n), rel=1e-10)


def test_sphere_integral_scaling_covariance():
    form = HomogeneousForm(2, 4, {(4, 0): 1.0, (2, 2): 0.5, (0, 4): 2.0})
    c = 3.7
    a = sphere_integral(form, -0.5)
    b = sphere_integral(form.scaled(c), -0.5)
    assert b == pytest.approx(c ** -0.5 * a, rel=1e-10)


def test_sphere_integral_rejects_indefinite():
    with pytest.raises(DefinitenessError):
        sphere_integral(HomogeneousForm(2, 4, {(4, 0): 1.0, (0, 4): -1.0}), -0.5)


def test_form_invariants_hold_on_random_samples():
    form = HomogeneousForm(3, 4, {(4, 0, 0): 1.0, (0, 4, 0): 2.0, (0, 0, 4): 1.0, (2, 2, 0): 0.3})
    assert form.check_invariants(n_samples=1000) == []
    assert HomogeneousForm(1, 3, {(3,): 1.0}).check_invariants() != []


def test_structural_errors():
    with pytest.raises(StructureError):
        HomogeneousForm(1, 4, {(3,): 1.0})
    with pytest.raises(StructureError):
        parse_potential("n = 1\nV 2 : 1.0")
    with pytest.raises(StructureError):
        parse_potential("n = 1\nV 0 : 1.0", allow_low_degree=True)
    with pytest.raises(StructureError, match="line 2"):
        parse_potential("n = 2\nV 4 : 1.0")
    with pytest.raises(StructureError):
        PotentialModel(4)


def test_parse_format_round_trip(tmp_path):
    for preset in PRESETS.values():
        m = preset.model
        text = format_potential(m)
        back = parse_potential(text)
        assert back.germ_terms == m.germ_terms
        assert back.E_c == m.E_c and back.x0 == m.x0 and back.name == m.name
        assert (back.W is None) == (m.W is None)
    p = tmp_path / "witten.pot"
    p.write_text(format_potential(PRESETS["witten-1d"].model))
    assert load_potential(p).W.as_dict() == {(2,): 12.0}


def test_comments_and_blank_lines():
    m = parse_potential("# header\n\nn = 1  # dimension\nV 4 : 2.0\n")
    assert m.k == 4 and m.V_k.as_dict() == {(4,): 2.0}


def test_radial_detection(radial, quartic):
    assert radial.radial
    assert not parse_potential("n = 2\nV 4 0 : 1.0\nV 0 4 : 1.0").radial
    assert quartic.scale_invariant and quartic.homogeneous
    assert not PRESETS["perturbed-quartic"].model.scale_invariant


def test_all_presets_validate():
    for name, p in PRESETS.items():
        rep = validate_hypotheses(p.model, p.eps, p.box)
        assert rep.passed, (name, [c.to_dict() for c in rep.checks if not c.passed])
