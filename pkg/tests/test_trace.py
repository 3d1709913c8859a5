import csv
import math

import numpy as np
import pytest

from degentrace import TestFunction
from degentrace.spectral import EigenvalueWindow, solve_window
from degentrace.trace import SpectralTrace, spectral_side, trace_curve, write_trace_csv

QUARTIC_GAMMA_1E4 = 0.7963225898555478


class _Combination:
    """``c1 phi1 + c2 phi2`` exposing the evaluation interface used by the trace."""

    def __init__(self, c1, f1, c2, f2):
        self.parts = ((c1, f1), (c2, f2))

    def eval_phi(self, s):
        return sum(c * f.eval_phi(s) for c, f in self.parts)

    def eval_dphi(self, s):
        return sum(c * f.eval_dphi(s) for c, f in self.parts)

    def tail_cutoff(self, tol):
        return max(f.tail_cutoff(tol / (2 * abs(c))) for c, f in self.parts)

    def envelope(self, s):
        return sum(abs(c) * f.envelope(s) for c, f in self.parts)


def test_empty_window(tf):
    win = EigenvalueWindow(0.0, 0.5, [], [], "direct", [])
    smp = spectral_side(win, 0.0, 1e-2, tf)
    assert smp.gamma == 0.0 and smp.n_terms == 0 and smp.truncation_residual == 0.0


def test_single_eigenvalue_at_critical_energy(tf):
    win = EigenvalueWindow(0.3, 0.5, [0.3], [2], "direct", [0.0])
    smp = spectral_side(win, 0.3, 1e-3, tf)
    assert smp.gamma == pytest.approx(2 * tf.eval_phi(0.0), rel=1e-15)
    assert smp.n_terms == 2


def test_quartic_regression_value(quartic, tf):
    curve = trace_curve(quartic, tf, 0.0, 0.5, [1e-4], "rescaled")
    assert curve.complete
    assert curve.gamma[0] == pytest.approx(QUARTIC_GAMMA_1E4, rel=1e-9)


def test_dual_paths_agree(quartic, tf):
    curve = trace_curve(quartic, tf, 0.0, 0.5, [1e-2, 3e-3, 1e-3], "both")
    assert len(curve.pairs) == 3
    for resc, direct in curve.pairs:
        assert resc.method == "rescaled" and direct.method == "direct"
        assert abs(resc.gamma - direct.gamma) <= 1e-5 * abs(direct.gamma)


def test_positive_profile_gives_positive_sum(quartic):
    ac = TestFunction(profile="autocorrelation")
    curve = trace_curve(quartic, ac, 0.0, 0.5, [1e-2, 1e-3], "rescaled")
    assert np.all(curve.gamma > 0)


def test_window_doubling(quartic, tf):
    h = 1e-2
    small = solve_window(quartic, h, 0.25)
    big = solve_window(quartic, h, 0.5)
    a = spectral_side(small, 0.0, h, tf)
    b = spectral_side(big, 0.0, h, tf)
    added = big.eigenvalues[np.abs(big.eigenvalues) > 0.25]
    exact = math.fsum(np.abs(tf.eval_phi(added / h)).tolist())
    assert abs(b.gamma - a.gamma) <= exact * (1 + 1e-9) + 1e-300
    assert abs(b.gamma - a.gamma) <= added.size * tf.envelope(0.25 / h)


def test_linearity_in_test_function(quartic):
    f1, f2 = TestFunction(), TestFunction(profile="bump-t2", T=0.8)
    win = solve_window(quartic, 1e-2, 0.5)
    g1 = spectral_side(win, 0.0, 1e-2, f1).gamma
    g2 = spectral_side(win, 0.0, 1e-2, f2).gamma
    g = spectral_side(win, 0.0, 1e-2, _Combination(2.5, f1, -1.5, f2)).gamma
    assert g == pytest.approx(2.5 * g1 - 1.5 * g2, rel=1e-12, abs=1e-12)
    g3 = spectral_side(win, 0.0, 1e-2, TestFunction(c=3.0)).gamma
    assert g3 == pytest.approx(3 * g1, rel=1e-12)


def test_partial_curves_keep_failures(quartic, tf):
    from degentrace.spectral import ModelSpectrum

    cache = ModelSpectrum(quartic, 2000.0)
    curve = trace_curve(quartic, tf, 0.0, 0.5, [1e-2, 1e-6], "rescaled", cache=cache)
    assert len(curve.samples) == 1 and 1e-6 in curve.failures
    assert not curve.complete


def test_schedule_must_decrease(quartic, tf):
    with pytest.raises(ValueError):
        trace_curve(quartic, tf, 0.0, 0.5, [1e-3, 1e-2])


def test_estimator(quartic):
    est = SpectralTrace(preset="quartic-1d").fit()
    out = est.transform([[1e-4], [1e-3], [1e-4]])
    assert out.shape == (3, 2)
    assert out[0, 0] == pytest.approx(QUARTIC_GAMMA_1E4, rel=1e-9)
    assert out[0, 0] == out[2, 0]


def test_trace_csv(tmp_path, quartic, tf):
    curve = trace_curve(quartic, tf, 0.0, 0.5, [1e-2, 1e-3], "rescaled")
    p = tmp_path / "trace.csv"
    write_trace_csv(p, curve.samples)
    rows = list(csv.reader(p.open()))
    assert rows[0][:5] == ["h", "gamma", "n_terms", "truncation_residual", "method"]
    assert float(rows[1][1]) == curve.samples[0].gamma
    assert all(r[4] == "rescaled" for r in rows[1:])
