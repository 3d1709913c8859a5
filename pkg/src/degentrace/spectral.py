"""Finite-difference spectra of ``-h^2 Laplacian + V`` near the critical energy.

Eigenvalues in a window are located by Sturm counts plus bisection (the
LAPACK ``stebz`` driver); our own scalar Sturm count certifies that the
number returned equals the count difference at the window edges.  The
default scheme is second order with Richardson extrapolation between a
grid and its exact halving.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eig_banded, eigvalsh_tridiagonal
from scipy.optimize import brentq

from .errors import CacheRangeError, ConfigurationError, IncompletenessError, PreconditionError, UnsupportedPathError
from .model import PotentialModel

log = logging.getLogger(__name__)

NODES_PER_WAVELENGTH = 10
MIN_NODES = 2000
BOUNDARY_FACTOR = 10.0
FULL_SPECTRUM_FRACTION = 0.05


class EdgeCollisionWarning(UserWarning):
    """An eigenvalue sits within the bisection tolerance of a window edge."""


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Banded symmetric matrix approximating ``-h^2 d^2/dx^2 + V - h W``.

    Attributes
    ----------
    h : float
    a, b : float
        Interval endpoints; Dirichlet conditions hold at both.
    N : int
        Number of interior nodes.
    dx : float
    scheme : int
        Finite-difference order, 2 or 4.
    diag : ndarray
        Main diagonal.
    bands : tuple of ndarray
        Off-diagonals: one for order 2 (or the radial flux form), two for
        order 4.
    x : ndarray
        Node positions.
    channel : int or None
        Angular-momentum index for radial operators.
    """

    h: float
    a: float
    b: float
    N: int
    dx: float
    scheme: int
    diag: np.ndarray
    bands: tuple
    x: np.ndarray
    channel: int | None = None

    @property
    def offdiag(self) -> np.ndarray:
        return self.bands[0]

    @property
    def tridiagonal(self) -> bool:
        return len(self.bands) == 1

    def dense(self) -> np.ndarray:
        """Dense matrix; for tests on small grids only."""
        A = np.diag(self.diag)
        for j, band in enumerate(self.bands, 1):
            A += np.diag(band, j) + np.diag(band, -j)
        return A

    def count_below(self, x: float) -> int:
        """Number of eigenvalues strictly below ``x``."""
        if self.tridiagonal:
            return sturm_count(self.diag, self.bands[0], x)
        return banded_inertia(self.diag, self.bands, x)


@dataclass
class EigenvalueWindow:
    """Eigenvalues in ``[E_c - eps, E_c + eps]`` with provenance.

    Attributes
    ----------
    eigenvalues : ndarray
        Sorted ascending.
    multiplicities : ndarray of int
    method : str
        ``direct`` or ``rescaled``.
    est_error : ndarray
        Per-eigenvalue error estimate.
    channels : ndarray of int or None
        Angular channel of each entry for radial problems.
    metadata : dict
        Grid and convergence information.
    """

    E_c: float
    eps: float
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    method: str
    est_error: np.ndarray
    channels: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.multiplicities = np.asarray(self.multiplicities, dtype=int)
        self.est_error = np.asarray(self.est_error, dtype=float)
        order = np.lexsort((self.channels if self.channels is not None else np.zeros(len(self.eigenvalues)),
                            self.eigenvalues))
        self.eigenvalues = self.eigenvalues[order]
        self.multiplicities = self.multiplicities[order]
        self.est_error = self.est_error[order]
        if self.channels is not None:
            self.channels = np.asarray(self.channels, dtype=int)[order]
        lo, hi = self.E_c - self.eps, self.E_c + self.eps
        if self.eigenvalues.size and (self.eigenvalues[0] < lo or self.eigenvalues[-1] > hi):
            raise ValueError("eigenvalues outside the window")
        if np.any(self.multiplicities < 1):
            raise ValueError("multiplicities must be >= 1")

    def __len__(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def count(self) -> int:
        """Number of eigenvalues counted with multiplicity."""
        return int(self.multiplicities.sum())


# ---------------------------------------------------------------------------
# Sturm counts and bisection
# ---------------------------------------------------------------------------

def _pivmin(off: np.ndarray) -> float:
    m = float(np.max(off * off)) if len(off) else 1.0
    return np.finfo(float).tiny * max(m, 1.0)


def sturm_count(diag: Sequence[float], off: Sequence[float], x: float) -> int:
    """Number of eigenvalues of a symmetric tridiagonal matrix below ``x``.

    Counts negative pivots of the LDL^T factorization of ``A - x I``; a
    pivot that underflows is replaced by ``-pivmin`` as in LAPACK.
    """
    d = np.asarray(diag, dtype=float).tolist()
    e2 = (np.asarray(off, dtype=float) ** 2).tolist()
    pivmin = _pivmin(np.asarray(off, dtype=float))
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    count = int(q < 0)
    for i in range(1, len(d)):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


def sturm_counts(diag: np.ndarray, off: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Vectorized Sturm count for many shifts at once."""
    shifts = np.asarray(shifts, dtype=float)
    e2 = np.asarray(off, dtype=float) ** 2
    pivmin = _pivmin(np.asarray(off, dtype=float))
    q = diag[0] - shifts
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(int)
    for i in range(1, len(diag)):
        q = diag[i] - shifts - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def bisect_eigenvalues(diag: np.ndarray, off: np.ndarray, lo: float, hi: float,
                       atol: float = 1e-12) -> np.ndarray:
    """All eigenvalues in ``[lo, hi)`` by simultaneous bisection.

    A pure-numpy reference implementation of Sturm bisection, used for
    small matrices and to cross-check the LAPACK path.
    """
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    c_lo, c_hi = sturm_count(diag, off, lo), sturm_count(diag, off, hi)
    m = c_hi - c_lo
    if m <= 0:
        return np.empty(0)
    idx = np.arange(c_lo, c_hi)
    lower = np.full(m, float(lo))
    upper = np.full(m, float(hi))
    while np.max(upper - lower) > atol:
        mid = 0.5 * (lower + upper)
        c = sturm_counts(diag, off, mid)
        above = c > idx           # eigenvalue idx lies below mid
        upper = np.where(above, mid, upper)
        lower = np.where(above, lower, mid)
        if np.all(upper - lower <= 4 * np.spacing(np.maximum(np.abs(upper), 1.0))):
            break
    return 0.5 * (lower + upper)


def banded_inertia(diag: np.ndarray, bands: Sequence[np.ndarray], x: float) -> int:
    """Negative-pivot count of ``A - x I`` for a symmetric pentadiagonal ``A``.

    LDL^T without pivoting; by Sylvester's law of inertia this counts the
    eigenvalues below ``x`` as long as no pivot vanishes.
    """
    a = (np.asarray(diag, dtype=float) - x).tolist()
    b = np.asarray(bands[0], dtype=float).tolist()
    c = np.asarray(bands[1], dtype=float).tolist() if len(bands) > 1 else [0.0] * (len(a) - 2)
    pivmin = np.finfo(float).tiny * 1e4
    n = len(a)
    d_prev2 = d_prev = 0.0
    l1 = l2 = 0.0          # L[i, i-1], L[i, i-2]
    l_next2 = 0.0          # L[i+1, i-1] carried from step i-1
    count = 0
    for i in range(n):
        d = a[i] - l1 * l1 * d_prev - l2 * l2 * d_prev2
        if abs(d) < pivmin:
            d = -pivmin
        if d < 0:
            count += 1
        if i + 1 < n:
            new_l1 = (b[i] - l_next2 * l1 * d_prev) / d
        else:
            new_l1 = 0.0
        new_l2_for_i1 = l_next2       # L[i+1, i-1]
        l_next2 = c[i] / d if i + 2 < n else 0.0
        l2, l1 = new_l2_for_i1, new_l1
        d_prev2, d_prev = d_prev, d
    return count


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def _side_root(f, direction: float, start: float = 1e-3) -> float:
    s = start
    while f(direction * s) < 0:
        s *= 2
        if s > 1e8:
            raise ConfigurationError("potential does not reach the required height; is it confining?")
    lo = s / 2 if s > start else 0.0
    return brentq(lambda r: f(direction * r), lo, s, xtol=1e-14, rtol=1e-12)


def boundary_half_width(model: PotentialModel, E_c: float, eps: float, h: float = 0.0,
                        factor: float = BOUNDARY_FACTOR) -> float:
    """Smallest ``L`` with ``V(x0 +- L) - E_c >= factor * eps`` (1-D or radial)."""
    if model.n == 1:
        x0 = model.x0[0]
        f = lambda y: float(model(x0 + y, h)) - E_c - factor * eps  # noqa: E731
        return max(_side_root(f, 1.0), _side_root(f, -1.0)) * (1 + 1e-9)
    f = lambda r: float(model.radial_profile(abs(r), h)) - E_c - factor * eps  # noqa: E731
    return _side_root(f, 1.0) * (1 + 1e-9)


def check_boundary(model: PotentialModel, L: float, E_c: float, eps: float, h: float = 0.0) -> None:
    """Raise :class:`ConfigurationError` unless the walls sit well above the window."""
    if model.n == 1:
        vals = [float(model(model.x0[0] + s * L, h)) for s in (-1.0, 1.0)]
    else:
        vals = [float(model.radial_profile(L, h))]
    if min(vals) - E_c < BOUNDARY_FACTOR * eps:
        hint = boundary_half_width(model, E_c, eps, h)
        raise ConfigurationError(
            f"V(+-L) - E_c = {min(vals) - E_c:.4g} < {BOUNDARY_FACTOR:g} * eps at L = {L:g}; use L >= {hint:.6g}")


def decay_half_width(model: PotentialModel, E_top: float, h: float = 1.0, margin: float = 18.0) -> float:
    """Half-width beyond which states below ``E_top`` have decayed by ``exp(-2 margin)``.

    Uses the tunnelling integral ``(1/h) int sqrt(V - E_top)`` from the
    outermost turning point.
    """
    def profile(r):
        if model.n == 1:
            return min(float(model(model.x0[0] + r, h)), float(model(model.x0[0] - r, h)))
        return float(model.radial_profile(r, h))

    rt = _side_root(lambda r: profile(abs(r)) - E_top, 1.0)

    def action(L):
        val, _ = quad(lambda r: math.sqrt(max(profile(r) - E_top, 0.0)), rt, L, limit=200)
        return val / h - margin

    step = max(rt, 1e-3) * 0.05
    L = rt + step
    while action(L) < 0:
        step *= 2
        L = rt + step
    return brentq(action, rt + step / 2 if step > max(rt, 1e-3) * 0.05 else rt, L, xtol=1e-10)


def grid_size(model: PotentialModel, h: float, L: float, E_top: float,
              npw: float = NODES_PER_WAVELENGTH, floor: int = MIN_NODES) -> int:
    """Node count giving ``npw`` nodes per local wavelength ``2 pi h / sqrt(E_top - V)``."""
    if model.n == 1:
        xs = model.x0[0] + np.linspace(-L, L, 4001)
        vmin = float(np.min(model(xs, h)))
        length = 2 * L
    else:
        vmin = float(np.min(model.radial_profile(np.linspace(0, L, 4001), h)))
        length = L
    kmax = math.sqrt(max(E_top - vmin, 1e-300)) / h
    return max(floor, int(math.ceil(length * kmax / (2 * math.pi) * npw)))


def discretize_1d(model: PotentialModel, h: float, L: float, N: int, scheme: int = 2, *,
                  E_c: float | None = None, eps: float | None = None) -> DiscretizedOperator:
    """Dirichlet finite-difference matrix on ``[x0 - L, x0 + L]``.

    Parameters
    ----------
    model : PotentialModel
        One-dimensional model.
    h : float
    L : float
        Box half-width.
    N : int
        Interior nodes (``N >= 16``); spacing ``2L/(N+1)``.
    scheme : {2, 4}
    E_c, eps : float, optional
        Window; when ``eps`` is given the walls must satisfy
        ``V(+-L) - E_c >= 10 eps``.

    Raises
    ------
    ConfigurationError
        If the boundary condition on the window fails.
    """
    if model.n != 1:
        raise UnsupportedPathError("discretize_1d needs a one-dimensional model")
    if N < 16:
        raise ConfigurationError("need at least 16 nodes")
    if scheme not in (2, 4):
        raise ConfigurationError("scheme must be 2 or 4")
    if eps is not None:
        check_boundary(model, L, model.E_c if E_c is None else E_c, eps, h)
    x0 = model.x0[0]
    dx = 2 * L / (N + 1)
    x = x0 - L + dx * np.arange(1, N + 1)
    V = np.asarray(model(x, h), dtype=float)
    h2 = h * h / (dx * dx)
    if scheme == 2:
        diag = 2 * h2 + V
        bands = (np.full(N - 1, -h2),)
    else:
        diag = 2.5 * h2 + V
        bands = (np.full(N - 1, -4.0 / 3.0 * h2), np.full(N - 2, h2 / 12.0))
    return DiscretizedOperator(h, x0 - L, x0 + L, N, dx, scheme, diag, bands, x)


def discretize_radial(model: PotentialModel, h: float, L: float, N: int, channel: int) -> DiscretizedOperator:
    """Cell-centred flux discretization of the radial operator on ``(0, L]``.

    With weight ``w = r^(n-1)`` and nodes ``r_i = (i - 1/2) dr``, the
    matrix is the symmetrized form of
    ``-h^2 w^-1 (w u')' + h^2 c / r^2 + V``, ``c = m^2`` (n=2) or
    ``l(l+1)`` (n=3).  The face at ``r = 0`` carries zero weight, so no
    condition is needed at the origin.
    """
    n = model.n
    if n not in (2, 3):
        raise UnsupportedPathError("radial channels need n = 2 or 3")
    dr = L / N
    r = (np.arange(1, N + 1) - 0.5) * dr
    rp, rm = r + dr / 2, r - dr / 2
    w, wp, wm = r ** (n - 1), rp ** (n - 1), rm ** (n - 1)
    cent = channel**2 if n == 2 else channel * (channel + 1)
    V = np.asarray(model.radial_profile(r, h), dtype=float)
    h2 = h * h / (dr * dr)
    diag = h2 * (wp + wm) / w + h * h * cent / r**2 + V
    off = -h2 * wp[:-1] / np.sqrt(w[:-1] * w[1:])
    return DiscretizedOperator(h, 0.0, L, N, dr, 2, diag, (off,), r, channel)


# ---------------------------------------------------------------------------
# Window eigenvalues
# ---------------------------------------------------------------------------

def _index_values(op: DiscretizedOperator, i0: int, i1: int, atol: float) -> np.ndarray:
    """Eigenvalues with global indices ``i0 .. i1 - 1``."""
    if i1 <= i0:
        return np.empty(0)
    if op.tridiagonal:
        if i1 - i0 > FULL_SPECTRUM_FRACTION * op.N:
            # root-free QR on the whole matrix beats bisection for large index ranges
            return eigvalsh_tridiagonal(op.diag, op.bands[0], lapack_driver="sterf")[i0:i1]
        return eigvalsh_tridiagonal(op.diag, op.bands[0], select="i", select_range=(i0, i1 - 1),
                                    lapack_driver="stebz", tol=atol)
    ab = np.zeros((len(op.bands) + 1, op.N))
    ab[0] = op.diag
    for j, band in enumerate(op.bands, 1):
        ab[j, :-j] = band
    return eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(i0, i1 - 1))


def window_tolerance(E_c: float, eps: float) -> float:
    return 1e-12 * max(1.0, abs(E_c) + eps)


def eigenvalues_in_window(op: DiscretizedOperator, E_c: float, eps: float, *,
                          solver: str = "lapack", atol: float | None = None,
                          multiplicity: int = 1) -> EigenvalueWindow:
    """Eigenvalues of ``op`` in the closed window ``[E_c - eps, E_c + eps]``.

    Parameters
    ----------
    op : DiscretizedOperator
    E_c, eps : float
    solver : {"lapack", "bisect"}
        ``lapack`` uses ``stebz`` (or ``eig_banded`` for order 4),
        ``bisect`` the numpy reference bisection (tridiagonal only).
    atol : float, optional
        Absolute tolerance, default ``1e-12 max(1, |E_c| + eps)``.

    Notes
    -----
    An eigenvalue within ``atol`` of an edge triggers an
    :class:`EdgeCollisionWarning` and is included.
    """
    atol = window_tolerance(E_c, eps) if atol is None else atol
    lo, hi = E_c - eps, E_c + eps
    c_lo, c_hi = op.count_below(lo - atol), op.count_below(hi + atol)
    inner = (op.count_below(lo + atol), op.count_below(hi - atol))
    collisions = int((inner[0] - c_lo) + (c_hi - inner[1]))
    if collisions:
        warnings.warn(f"{collisions} eigenvalue(s) within {atol:.1e} of the window edge; included",
                      EdgeCollisionWarning, stacklevel=2)
    if solver == "bisect":
        if not op.tridiagonal:
            raise UnsupportedPathError("reference bisection handles tridiagonal matrices only")
        vals = bisect_eigenvalues(op.diag, op.bands[0], lo - atol, hi + atol, atol / 4)
    else:
        vals = _index_values(op, c_lo, c_hi, atol)
    if vals.size != c_hi - c_lo:
        raise ConfigurationError(f"solver returned {vals.size} eigenvalues, Sturm count says {c_hi - c_lo}")
    vals = np.clip(np.sort(vals), lo, hi)
    return EigenvalueWindow(E_c, eps, vals, np.full(vals.size, multiplicity), "direct", np.full(vals.size, atol),
                            None if op.channel is None else np.full(vals.size, op.channel),
                            {"h": op.h, "N": op.N, "dx": op.dx, "scheme": op.scheme, "index_range": (c_lo, c_hi),
                             "edge_collisions": collisions, "atol": atol})


def _richardson(coarse: DiscretizedOperator, fine: DiscretizedOperator, lo: float, hi: float,
                atol: float, order: int = 2) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Extrapolated eigenvalues (matched by global index) with fine-grid error estimates."""
    i0, i1 = fine.count_below(lo), fine.count_below(hi)
    # a few extra indices on each side catch eigenvalues that cross the edges under extrapolation
    j0, j1 = max(i0 - 2, 0), i1 + 2
    f = _index_values(fine, j0, j1, atol)
    c = _index_values(coarse, j0, j0 + f.size, atol)
    m = min(f.size, c.size)
    f, c = f[:m], c[:m]
    p = 2.0**order
    e = (p * f - c) / (p - 1)
    err = np.abs(f - c) / (p - 1)
    keep = (e >= lo) & (e <= hi)
    return e[keep], err[keep], (j0, j0 + m)


def solve_window(model: PotentialModel, h: float, eps: float, *, E_c: float | None = None,
                 L: float | None = None, npw: float = NODES_PER_WAVELENGTH, scheme: int = 2,
                 richardson: bool = True, floor: int = MIN_NODES) -> EigenvalueWindow:
    """Direct h-dependent solve for a one-dimensional model.

    The box follows the wall rule ``V(+-L) - E_c >= 10 eps``; the grid
    follows :func:`grid_size`.  With ``richardson`` the grid and its
    exact halving are combined and ``est_error`` bounds the fine-grid
    error.
    """
    E_c = model.E_c if E_c is None else E_c
    L = boundary_half_width(model, E_c, eps, h) if L is None else L
    N = grid_size(model, h, L, E_c + eps, npw, floor)
    coarse = discretize_1d(model, h, L, N, scheme, E_c=E_c, eps=eps)
    if not richardson:
        win = eigenvalues_in_window(coarse, E_c, eps)
        win.metadata["L"] = L
        return win
    fine = discretize_1d(model, h, L, 2 * N + 1, scheme, E_c=E_c, eps=eps)
    atol = window_tolerance(E_c, eps)
    vals, err, idx = _richardson(coarse, fine, E_c - eps, E_c + eps, atol, scheme)
    return EigenvalueWindow(E_c, eps, vals, np.ones(vals.size, int), "direct", err, None,
                            {"h": h, "L": L, "N": (N, 2 * N + 1), "scheme": scheme, "index_range": idx,
                             "refinement_delta_max": float(np.max(err, initial=0.0)) * 3})


def _channel_weight(n: int, m: int) -> int:
    if n == 2:
        return 1 if m == 0 else 2
    return 2 * m + 1


def radial_channels(model: PotentialModel, h: float, eps: float, *, E_c: float | None = None,
                    m_max: int = 100000, npw: float = NODES_PER_WAVELENGTH, L: float | None = None,
                    floor: int = MIN_NODES) -> EigenvalueWindow:
    """Merged window spectrum of a rotationally invariant model in n = 2 or 3.

    Channels are added in order of ``|m|`` (or ``l``) until a channel's
    lowest eigenvalue exceeds ``E_c + eps``; the merged list carries the
    angular multiplicities.

    Raises
    ------
    IncompletenessError
        If ``m_max`` channels were used and the last one still contributes.
    """
    if not model.radial:
        raise PreconditionError("radial_channels needs a rotationally invariant model")
    E_c = model.E_c if E_c is None else E_c
    L = boundary_half_width(model, E_c, eps, h) if L is None else L
    check_boundary(model, L, E_c, eps, h)
    N = grid_size(model, h, L, E_c + eps, npw, floor)
    atol = window_tolerance(E_c, eps)
    vals, errs, mults, chans = [], [], [], []
    m = 0
    while True:
        if m > m_max:
            raise IncompletenessError(f"channel {m_max} still has eigenvalues below E_c + eps")
        coarse = discretize_radial(model, h, L, N, m)
        fine = discretize_radial(model, h, L, 2 * N, m)
        if fine.count_below(E_c + eps) == 0 and coarse.count_below(E_c + eps) == 0:
            break
        e, err, _ = _richardson(coarse, fine, E_c - eps, E_c + eps, atol)
        vals.append(e)
        errs.append(err)
        mults.append(np.full(e.size, _channel_weight(model.n, m)))
        chans.append(np.full(e.size, m))
        m += 1
    cat = lambda a, t: np.concatenate(a) if a else np.empty(0, t)  # noqa: E731
    return EigenvalueWindow(E_c, eps, cat(vals, float), cat(mults, int), "direct", cat(errs, float),
                            cat(chans, int), {"h": h, "L": L, "N": (N, 2 * N), "channels": m})


# ---------------------------------------------------------------------------
# Exact rescaling for homogeneous potentials
# ---------------------------------------------------------------------------

def rescaling_exponent(k: int) -> Fraction:
    """Exponent ``2k/(k+2)`` in ``lambda_j(h) = h^(2k/(k+2)) e_j``."""
    return Fraction(2 * k, k + 2)


class ModelSpectrum:
    """Cached h-independent spectrum of ``-Laplacian + V_k - W`` at ``h = 1``.

    Parameters
    ----------
    model : PotentialModel
        Must be scale invariant (single germ term; ``W`` absent or of
        degree ``(k-2)/2``).
    e_max : float
        Validated energy range ``e <= e_max``.
    e_acc : float, optional
        Energies up to ``e_acc`` use Richardson extrapolation at ``npw``
        nodes per wavelength; the band ``(e_acc, e_max]`` uses a single
        coarser grid at ``npw_tail``.  Defaults to ``e_max`` (one tier).
    npw, npw_tail : float
    margin : float
        Tunnelling margin for the box half-width (see
        :func:`decay_half_width`).

    Notes
    -----
    The box is sized by the decay of the highest cached states rather
    than by the wall rule for direct windows; the wall rule would waste
    most of the grid on classically forbidden space at large ``e_max``.
    """

    def __init__(self, model: PotentialModel, e_max: float, *, e_acc: float | None = None,
                 npw: float = NODES_PER_WAVELENGTH, npw_tail: float = 6.0, margin: float = 18.0,
                 m_max: int = 100000):
        if not model.scale_invariant:
            raise PreconditionError("exact rescaling needs a single homogeneous germ term")
        if model.n > 1 and not model.radial:
            raise UnsupportedPathError("rescaled spectra in n > 1 need a radial model")
        self.model = model
        self.unit = PotentialModel(model.n, 0.0, (0.0,) * model.n, model.germ_terms, model.W, model.name)
        self.e_max = float(e_max)
        self.e_acc = min(float(e_acc if e_acc is not None else e_max), self.e_max)
        self.npw, self.npw_tail, self.margin = npw, npw_tail, margin
        self.exponent = rescaling_exponent(model.k)
        self._boxes: dict = {}
        self.values, self.errors, self.mults, self.chans = self._build(m_max)

    def _box(self, e_top: float, npw: float) -> tuple[float, int]:
        # the m = 0 profile decays slowest, so one box serves every channel
        key = (e_top, npw)
        if key not in self._boxes:
            L = decay_half_width(self.unit, e_top, 1.0, self.margin)
            self._boxes[key] = (L, grid_size(self.unit, 1.0, L, e_top, npw, floor=16))
        return self._boxes[key]

    def _tier(self, e_top: float, npw: float, m: int, richardson: bool, start: int):
        u = self.unit
        L, N = self._box(e_top, npw)
        if u.n == 1:
            mk = lambda NN: discretize_1d(u, 1.0, L, NN)  # noqa: E731
            fine_n = 2 * N + 1
        else:
            mk = lambda NN: discretize_radial(u, 1.0, L, NN, m)  # noqa: E731
            fine_n = 2 * N
        atol = window_tolerance(0.0, e_top)
        if richardson:
            coarse, fine = mk(N), mk(fine_n)
            i1 = fine.count_below(e_top)
            if i1 <= start:
                return np.empty(0), np.empty(0)
            f = _index_values(fine, start, i1, atol)
            c = _index_values(coarse, start, i1, atol)
            return (4 * f - c) / 3, np.abs(f - c) / 3
        op = mk(N)
        i1 = op.count_below(e_top)
        if i1 <= start:
            return np.empty(0), np.empty(0)
        # the discretization error of this band exceeds 1e-9 e_top by orders of magnitude
        v = _index_values(op, start, i1, max(atol, 1e-9 * e_top))
        dx = op.dx
        # leading second-order error bound kappa^4 dx^2 / 12 with kappa^2 <= e
        return v, v * v * dx * dx / 12

    def _channel(self, m: int):
        a, ea = self._tier(self.e_acc, self.npw, m, True, 0)
        keep = a <= self.e_acc
        a, ea = a[keep], ea[keep]
        if self.e_max > self.e_acc:
            b, eb = self._tier(self.e_max, self.npw_tail, m, False, a.size)
            keep = (b > self.e_acc) & (b <= self.e_max)
            a, ea = np.concatenate([a, b[keep]]), np.concatenate([ea, eb[keep]])
        return a, ea

    def _build(self, m_max: int):
        if self.model.n == 1:
            v, e = self._channel(0)
            return [v], [e], [1], [0]
        vals, errs, mults, chans = [], [], [], []
        m = 0
        while True:
            if m > m_max:
                raise IncompletenessError(f"channel {m_max} still has model eigenvalues below {self.e_max:g}")
            v, e = self._channel(m)
            if v.size == 0:
                break
            vals.append(v)
            errs.append(e)
            mults.append(_channel_weight(self.model.n, m))
            chans.append(m)
            m += 1
        return vals, errs, mults, chans

    @property
    def count(self) -> int:
        return int(sum(v.size for v in self.values))

    def scale(self, h: float) -> float:
        return float(h) ** float(self.exponent)

    def window(self, h: float, eps: float, E_c: float | None = None) -> EigenvalueWindow:
        """Window at ``h`` built from ``lambda = E_c + h^(2k/(k+2)) e``.

        Raises
        ------
        CacheRangeError
            If ``eps / h^(2k/(k+2))`` exceeds the cached range.
        """
        E_c = self.model.E_c if E_c is None else E_c
        mu = self.scale(h)
        if eps / mu > self.e_max * (1 + 1e-12):
            raise CacheRangeError(f"window needs e <= {eps / mu:.6g}, cache covers e <= {self.e_max:.6g}")
        vals, errs, mults, chans = [], [], [], []
        for v, e, w, m in zip(self.values, self.errors, self.mults, self.chans):
            lam = E_c + mu * v
            keep = np.abs(lam - E_c) <= eps
            vals.append(lam[keep])
            errs.append(mu * e[keep])
            mults.append(np.full(int(keep.sum()), w))
            chans.append(np.full(int(keep.sum()), m))
        return EigenvalueWindow(E_c, eps, np.concatenate(vals), np.concatenate(mults), "rescaled",
                                np.concatenate(errs), np.concatenate(chans) if self.model.n > 1 else None,
                                {"h": h, "scale": mu, "e_max": self.e_max, "e_acc": self.e_acc})


def rescaled_spectrum_homogeneous(model: PotentialModel, h: float, eps: float, *,
                                  cache: ModelSpectrum | None = None, **kwargs) -> EigenvalueWindow:
    """Window eigenvalues at ``h`` from the h = 1 model spectrum.

    Without ``cache`` a fresh :class:`ModelSpectrum` covering exactly the
    requested range is built.  With a cache too small for the request,
    :class:`CacheRangeError` is raised.
    """
    if cache is None:
        cache = ModelSpectrum(model, eps / float(h) ** float(rescaling_exponent(model.k)), **kwargs)
    return cache.window(h, eps)


# ---------------------------------------------------------------------------
# Two-dimensional tensor-grid count (coarse oracle)
# ---------------------------------------------------------------------------

def tensor_grid_count(model: PotentialModel, h: float, E: float, L: float, N: int) -> int:
    """Number of eigenvalues below ``E`` of the 5-point 2-D discretization.

    ``A - E`` is block tridiagonal with ``N x N`` blocks; by Haynsworth
    inertia additivity its negative eigenvalues are those of the Schur
    complements ``S_1 = D_1``, ``S_i = D_i - c^2 S_(i-1)^-1``.  Each
    complement is diagonalized once, so the cost is ``O(N^4)`` rather
    than a banded eigensolve of order ``N^2``.
    """
    if model.n != 2:
        raise UnsupportedPathError("tensor-grid oracle is two-dimensional")
    dx = 2 * L / (N + 1)
    g = -L + dx * np.arange(1, N + 1)
    X, Y = np.meshgrid(g + model.x0[0], g + model.x0[1], indexing="ij")
    V = np.asarray(model(np.stack([X, Y], axis=-1), h))
    c = h * h / dx**2
    lap = np.diag(np.full(N, 4 * c)) - c * (np.eye(N, k=1) + np.eye(N, k=-1))
    count = 0
    inv = None
    for i in range(N):
        S = lap + np.diag(V[i] - E)
        if inv is not None:
            S = S - c * c * inv
        w, Q = np.linalg.eigh(S)
        count += int(np.sum(w < 0))
        inv = (Q / w) @ Q.T
    return count


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

SPECTRUM_COLUMNS = ("method", "h", "m", "j", "lambda", "est_error")


def write_spectrum_csv(path: str | Path, windows: Sequence[EigenvalueWindow]) -> None:
    """Write windows as rows ``(method, h, m, j, lambda, est_error)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_COLUMNS)
        for win in windows:
            h = win.metadata.get("h", "")
            chans = win.channels if win.channels is not None else np.zeros(len(win), int)
            counters: dict[int, int] = {}
            for lam, err, m in zip(win.eigenvalues, win.est_error, chans):
                j = counters.get(int(m), 0)
                counters[int(m)] = j + 1
                w.writerow([win.method, repr(float(h)), int(m), j, repr(float(lam)), f"{err:.3e}"])
