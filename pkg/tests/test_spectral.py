import csv

import numpy as np
import pytest
from scipy.linalg import eigvalsh_tridiagonal

from degentrace.errors import CacheRangeError, ConfigurationError
from degentrace.model import HomogeneousForm, PotentialModel, preset_model
from degentrace.spectral import (EdgeCollisionWarning, ModelSpectrum, bisect_eigenvalues, boundary_half_width,
                                 discretize_1d, discretize_radial, eigenvalues_in_window, radial_channels,
                                 rescaled_spectrum_homogeneous, rescaling_exponent, solve_window, sturm_count,
                                 tensor_grid_count, write_spectrum_csv)


def _lowest(op, count):
    return eigvalsh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(0, count - 1))


def test_harmonic_oscillator_levels(harmonic):
    expected = 2 * np.arange(11) + 1.0
    # fourth-order stencil on the stated grid
    op4 = discretize_1d(harmonic, 1.0, 10.0, 2000, scheme=4)
    win = eigenvalues_in_window(op4, 11.0, 10.5)
    np.testing.assert_allclose(win.eigenvalues, expected, atol=1e-3)
    # second-order stencil with the Richardson step used by the direct solver
    win2 = solve_window(harmonic, 1.0, 10.5, E_c=11.0, L=11.0, floor=2000)
    np.testing.assert_allclose(win2.eigenvalues, expected, atol=1e-3)


def test_matrix_structure(quartic):
    op = discretize_1d(quartic, 0.1, 1.5, 100)
    A = op.dense()
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_allclose(op.offdiag, -0.01 / op.dx**2, rtol=1e-15)


def test_second_order_convergence(quartic):
    h, L = 1.0, 5.0
    vals = [_lowest(discretize_1d(quartic, h, L, N), 10) for N in (399, 799, 1599)]
    d1, d2 = vals[1] - vals[0], vals[2] - vals[1]
    order = np.log2(np.abs(d1 / d2))
    assert np.all(np.abs(order - 2.0) < 0.1)


def test_wall_rule_is_enforced(quartic):
    with pytest.raises(ConfigurationError, match="use L >="):
        discretize_1d(quartic, 0.1, 1.0, 100, E_c=0.0, eps=0.5)
    L = boundary_half_width(quartic, 0.0, 0.5)
    assert L**4 == pytest.approx(5.0, rel=1e-8)


def test_window_below_ground_state_is_empty(quartic):
    op = discretize_1d(quartic, 0.1, 2.0, 2000)
    win = eigenvalues_in_window(op, -1.0, 0.5)
    assert len(win) == 0 and win.count == 0


def test_harmonic_window(harmonic):
    h = 0.05
    op = discretize_1d(harmonic, h, 3.0, 4000, E_c=0.1, eps=0.055)
    win = eigenvalues_in_window(op, 0.1, 0.055)
    assert win.count == 2
    np.testing.assert_allclose(win.eigenvalues, [0.05, 0.15], atol=2e-6)


def test_count_monotone_in_eps(quartic):
    op = discretize_1d(quartic, 0.02, 2.0, 3000)
    counts = [eigenvalues_in_window(op, 0.0, e).count for e in (0.1, 0.2, 0.3, 0.5, 0.8)]
    assert counts == sorted(counts)


def test_sturm_count_equals_bisection(quartic):
    op = discretize_1d(quartic, 0.05, 2.0, 500)
    vals = bisect_eigenvalues(op.diag, op.offdiag, -1.0, 1.0, 1e-12)
    for E in np.linspace(-0.5, 1.0, 31):
        assert sturm_count(op.diag, op.offdiag, E) == int(np.sum(vals < E))
    lap = eigenvalues_in_window(op, 0.25, 0.5)
    bis = eigenvalues_in_window(op, 0.25, 0.5, solver="bisect")
    np.testing.assert_allclose(lap.eigenvalues, bis.eigenvalues, atol=1e-11)


def test_box_enlargement_invariance(quartic):
    h, dx = 0.05, 1e-3
    # half-widths on the dx lattice so both grids share the same nodes
    m = int(np.ceil(boundary_half_width(quartic, 0.0, 0.5, h) / dx))
    a = eigenvalues_in_window(discretize_1d(quartic, h, m * dx, 2 * m - 1), 0.0, 0.5)
    m2 = 3 * m // 2
    b = eigenvalues_in_window(discretize_1d(quartic, h, m2 * dx, 2 * m2 - 1), 0.0, 0.5)
    assert a.count == b.count
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)


def test_radial_channel_symmetry_and_monotonicity(radial):
    h, L, N = 0.1, 2.0, 800
    lows = [_lowest(discretize_radial(radial, h, L, N, m), 3) for m in range(6)]
    # the channel operator depends on m only through m^2
    np.testing.assert_array_equal(discretize_radial(radial, h, L, N, 3).diag,
                                  discretize_radial(radial, h, L, N, -3).diag)
    assert all(lows[i][0] < lows[i + 1][0] for i in range(5))
    win = radial_channels(radial, 0.1, 0.5)
    for m in np.unique(win.channels):
        assert np.all(win.multiplicities[win.channels == m] == (1 if m == 0 else 2))


def test_radial_count_matches_tensor_grid(radial):
    h, eps = 0.05, 0.5
    win = radial_channels(radial, h, eps)
    grid = tensor_grid_count(radial, h, eps, win.metadata["L"], 150)
    assert abs(grid - win.count) <= 0.02 * win.count


def test_tensor_grid_harmonic_oracle():
    m = PotentialModel(2, germ_terms=(HomogeneousForm.radial_power(2, 2),))
    # levels 2, 4, 4, 6, 6, 6 of -Laplacian + |x|^2
    assert tensor_grid_count(m, 1.0, 5.0, 8.0, 120) == 3


def test_rescaling_exponents():
    assert rescaling_exponent(4) == pytest.approx(4 / 3)
    assert rescaling_exponent(6) == pytest.approx(3 / 2)


def test_direct_and_rescaled_paths_agree(quartic):
    h, eps = 1e-3, 0.5
    direct = solve_window(quartic, h, eps)
    resc = rescaled_spectrum_homogeneous(quartic, h, eps)
    np.testing.assert_allclose(direct.eigenvalues[:20], resc.eigenvalues[:20], rtol=1e-6)
    assert direct.count == resc.count
    err = np.maximum(direct.est_error, resc.est_error)
    assert np.all(np.abs(direct.eigenvalues - resc.eigenvalues) <= 10 * err + 1e-12)


def test_witten_correction_shift_bound():
    witten = preset_model("witten-1d")
    pure = witten.with_terms(W=None)
    h, eps = 1e-2, 0.5
    a = solve_window(witten, h, eps)
    b = solve_window(pure, h, eps)
    # classically allowed region 16 x^6 <= eps (plus margin)
    r = (eps / 16) ** (1 / 6) * 1.05
    bound = h * 12 * r**2
    n = min(a.count, b.count) - 2
    assert n > 5
    assert np.max(np.abs(a.eigenvalues[:n] - b.eigenvalues[:n])) <= bound


def test_cache_range_error(quartic):
    cache = ModelSpectrum(quartic, 100.0)
    cache.window(1e-1, 0.5)
    with pytest.raises(CacheRangeError):
        cache.window(1e-3, 0.5)


def test_edge_collision_warning(harmonic):
    op = discretize_1d(harmonic, 1.0, 10.0, 400)
    ev = _lowest(op, 2)
    with pytest.warns(EdgeCollisionWarning):
        win = eigenvalues_in_window(op, 0.5 * (ev[0] + ev[1]), 0.5 * (ev[1] - ev[0]))
    # both edges hit an eigenvalue and both are kept
    assert win.count == 2 and win.metadata["edge_collisions"] == 2


def test_window_invariants(quartic):
    win = solve_window(quartic, 1e-2, 0.5)
    assert np.all(np.diff(win.eigenvalues) >= 0)
    assert np.all(np.abs(win.eigenvalues) <= 0.5)
    assert np.all(win.multiplicities >= 1)


def test_spectrum_csv(tmp_path, quartic):
    win = solve_window(quartic, 1e-2, 0.5)
    p = tmp_path / "spectrum.csv"
    write_spectrum_csv(p, [win])
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["method", "h", "m", "j", "lambda", "est_error"]
    assert len(rows) == 1 + win.count
    assert float(rows[1][4]) == win.eigenvalues[0]
