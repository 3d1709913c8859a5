"""The spectral side ``gamma(E_c, h, phi) = sum_j phi((lambda_j - E_c) / h)``."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DecayError, DegenTraceError
from .model import PotentialModel, get_preset
from .spectral import EigenvalueWindow, ModelSpectrum, radial_channels, rescaling_exponent, solve_window
from .testfn import TestFunction

log = logging.getLogger(__name__)

TERM_TOL = 1e-12


@dataclass
class TraceSample:
    """One evaluation of the spectral sum.

    Attributes
    ----------
    h : float
    gamma : float
    n_terms : int
        Eigenvalues summed, counted with multiplicity.
    truncation_residual : float
        Bound on the part of the sum not represented by the window.
    method : str
    gamma_error : float
        Propagated eigenvalue error ``sum m |phi'(s)| err / h``.
    """

    h: float
    gamma: float
    n_terms: int
    truncation_residual: float
    method: str
    gamma_error: float = 0.0
    eps: float = float("nan")
    metadata: dict = field(default_factory=dict)


def _residual(tf: TestFunction, s_edge: float, count_bound: float, term_tol: float) -> float:
    """``count_bound`` terms, each bounded by the envelope beyond ``s_edge``."""
    try:
        s_cut = tf.tail_cutoff(term_tol)
    except DecayError:
        s_cut = math.inf
    per_term = term_tol if s_edge >= s_cut else float(tf.envelope(s_edge))
    return float(count_bound * per_term)


def spectral_side(window: EigenvalueWindow, E_c: float, h: float, tf: TestFunction, *,
                  count_beyond: float | None = None, s_edge: float | None = None) -> TraceSample:
    """Sum ``multiplicity * phi((lambda - E_c)/h)`` over the window.

    Parameters
    ----------
    window : EigenvalueWindow
    E_c, h : float
    tf : TestFunction
    count_beyond : float, optional
        Bound on the number of eigenvalues the window leaves out that can
        still matter; defaults to the window count.
    s_edge : float, optional
        Smallest ``|s|`` of an omitted eigenvalue, default ``eps / h``.

    Returns
    -------
    TraceSample
        ``gamma`` is accumulated in ascending eigenvalue order with
        ``math.fsum``, which is exactly rounded and therefore independent
        of how the window was assembled.  The residual uses
        ``tail_cutoff(1e-12 * max term)``.
    """
    if len(window) == 0:
        return TraceSample(h, 0.0, 0, 0.0, window.method, 0.0, window.eps)
    s = (window.eigenvalues - E_c) / h
    terms = window.multiplicities * np.asarray(tf.eval_phi(s))
    gamma = math.fsum(terms.tolist())
    dphi = np.abs(np.asarray(tf.eval_dphi(s)))
    gerr = float(np.sum(window.multiplicities * dphi * window.est_error) / h)
    tol = TERM_TOL * float(np.max(np.abs(terms)))
    edge = window.eps / h if s_edge is None else s_edge
    bound = window.count if count_beyond is None else count_beyond
    res = _residual(tf, edge, bound, max(tol, 1e-300))
    return TraceSample(h, gamma, window.count, res, window.method, gerr, window.eps,
                       {"max_term": float(np.max(np.abs(terms)))})


@dataclass
class TraceCurve:
    """Samples of ``gamma`` over an h schedule.

    Failed evaluations are kept in ``failures`` keyed by ``h``; with
    ``method="both"`` the direct samples go to ``pairs``.
    """

    samples: list[TraceSample]
    failures: dict = field(default_factory=dict)
    pairs: list[tuple[TraceSample, TraceSample]] = field(default_factory=list)

    @property
    def h(self) -> np.ndarray:
        return np.array([s.h for s in self.samples])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([s.gamma for s in self.samples])

    @property
    def complete(self) -> bool:
        return not self.failures


def effective_half_width(tf: TestFunction, h: float, eps: float, window_tol: float) -> tuple[float, float]:
    """Window half-width actually computed, and the argument cutoff used.

    Eigenvalues with ``|lambda - E_c| > h s_cut`` contribute at most
    ``window_tol`` each, so the sum is formed over
    ``min(eps, h s_cut)`` and the rest is bounded.
    """
    s_cut = tf.tail_cutoff(window_tol)
    return min(eps, h * s_cut), s_cut


def _weyl_bound(model: PotentialModel, E_c: float, eps: float, h: float) -> float:
    """Twice the Weyl count of states below ``E_c + eps``, a generous bound for the omitted terms."""
    from .asympt import phase_volume

    try:
        vol = phase_volume(model, E_c + eps)
    except DegenTraceError:
        return math.inf
    return 2.0 * vol / (2 * math.pi * h) ** model.n + 10.0


def model_spectrum_for(model: PotentialModel, tf: TestFunction, windows: Sequence[tuple[float, float]], *,
                       npw: float = 10, acc_tol: float = 1e-5) -> ModelSpectrum:
    """Model spectrum covering the ``(h, half_width)`` windows.

    The Richardson-accurate tier reaches the energy where ``|phi|`` drops
    to ``acc_tol * sup |phi|`` at the smallest rescaling; beyond it a
    coarser grid suffices.
    """
    sup = abs(float(tf.eval_phi(0.0))) or tf._sup()
    mu = [h ** float(rescaling_exponent(model.k)) for h, _ in windows]
    e_max = max(w / m for (_, w), m in zip(windows, mu))
    s_acc = tf.tail_cutoff(acc_tol * sup)
    e_acc = min(e_max, max(s_acc * h / m for (h, _), m in zip(windows, mu)))
    return ModelSpectrum(model, e_max, e_acc=e_acc, npw=npw)


def trace_curve(model: PotentialModel, tf: TestFunction, E_c: float | None, eps: float,
                h_list: Sequence[float], method: str = "rescaled", *, window_tol: float | None = None,
                cache: ModelSpectrum | None = None, npw: float = 10, acc_tol: float = 1e-5,
                direct_kwargs: dict | None = None) -> TraceCurve:
    """Evaluate ``gamma`` along an h schedule.

    Parameters
    ----------
    model : PotentialModel
    tf : TestFunction
    E_c : float or None
        Defaults to the model's critical energy.
    eps : float
        Window half-width.
    h_list : sequence of float
        Strictly decreasing positive values.
    method : {"direct", "rescaled", "both"}
    window_tol : float, optional
        Per-term size below which eigenvalues are left out of the
        computed window; default ``1e-12 * sup |phi|``.  Pass ``0`` to use
        the full window.
    cache : ModelSpectrum, optional
        Reused for the rescaled path; built on demand otherwise.
    acc_tol : float
        Relative size of ``phi`` above which the cached model spectrum is
        Richardson-accurate; the band below uses a coarser grid.
    """
    h_arr = np.asarray(h_list, dtype=float)
    if h_arr.size == 0 or np.any(h_arr <= 0) or np.any(np.diff(h_arr) >= 0):
        raise ValueError("h_list must be positive and strictly decreasing")
    if method not in ("direct", "rescaled", "both"):
        raise ValueError(f"unknown method {method!r}")
    E_c = model.E_c if E_c is None else E_c
    sup = abs(float(tf.eval_phi(0.0))) or tf._sup()
    wtol = TERM_TOL * sup if window_tol is None else window_tol

    widths = []
    for h in h_arr:
        if wtol > 0:
            w, s_cut = effective_half_width(tf, h, eps, wtol)
        else:
            w, s_cut = eps, math.inf
        widths.append((float(h), w, s_cut))

    if method in ("rescaled", "both") and cache is None:
        cache = model_spectrum_for(model, tf, [(h, w) for h, w, _ in widths], npw=npw, acc_tol=acc_tol)

    curve = TraceCurve([])
    for h, w, s_cut in widths:
        try:
            omitted = 0.0 if w >= eps else _weyl_bound(model, E_c, eps, h)
            found = {}
            if method in ("rescaled", "both"):
                win = cache.window(h, w, E_c)
                found["rescaled"] = spectral_side(win, E_c, h, tf, count_beyond=omitted or None,
                                                  s_edge=None if w >= eps else s_cut)
            if method in ("direct", "both"):
                kw = dict(npw=npw, **(direct_kwargs or {}))
                win = (solve_window(model, h, w, E_c=E_c, **kw) if model.n == 1
                       else radial_channels(model, h, w, E_c=E_c, **kw))
                found["direct"] = spectral_side(win, E_c, h, tf, count_beyond=omitted or None,
                                                s_edge=None if w >= eps else s_cut)
            for smp in found.values():
                smp.eps = eps
                smp.metadata["computed_half_width"] = w
            if method == "both":
                curve.samples.append(found["rescaled"])
                curve.pairs.append((found["rescaled"], found["direct"]))
            else:
                curve.samples.append(found[method])
        except DegenTraceError as exc:
            log.warning("trace evaluation failed at h=%g: %s", h, exc)
            curve.failures[h] = exc
    return curve


TRACE_COLUMNS = ("h", "gamma", "n_terms", "truncation_residual", "method")


def write_trace_csv(path: str | Path, samples: Sequence[TraceSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS + ("gamma_error",))
        for s in samples:
            w.writerow([repr(s.h), repr(s.gamma), s.n_terms, f"{s.truncation_residual:.3e}", s.method,
                        f"{s.gamma_error:.3e}"])


class SpectralTrace(TransformerMixin, BaseEstimator):
    """Map semiclassical parameters ``h`` to spectral sums.

    Parameters
    ----------
    preset : str
        Name of a bundled model; ignored when ``model`` is given.
    model : PotentialModel, optional
    T : float
        Band radius of the test function.
    profile : str
        Test-function profile.
    eps : float
        Window half-width.
    method : {"rescaled", "direct"}
    window_tol : float, optional
        See :func:`trace_curve`.

    Examples
    --------
    >>> est = SpectralTrace(preset="quartic-1d").fit()
    >>> est.transform([[1e-3], [1e-4]]).shape
    (2, 2)
    """

    def __init__(self, preset: str = "quartic-1d", model: PotentialModel | None = None, T: float = 1.0,
                 profile: str = "bump", eps: float = 0.5, method: str = "rescaled",
                 window_tol: float | None = None):
        self.preset = preset
        self.model = model
        self.T = T
        self.profile = profile
        self.eps = eps
        self.method = method
        self.window_tol = window_tol

    def fit(self, X=None, y=None):
        self.model_ = self.model if self.model is not None else get_preset(self.preset).model
        self.tf_ = TestFunction(T=self.T, profile=self.profile)
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        """Return columns ``(gamma, truncation_residual)`` for each ``h`` in ``X``."""
        check_is_fitted(self, "model_")
        h = check_array(X, ensure_2d=True, dtype=float)
        if h.shape[1] != 1:
            raise ValueError("X must have a single column of h values")
        hv = h[:, 0]
        uniq = np.unique(hv)
        curve = trace_curve(self.model_, self.tf_, None, self.eps, uniq[::-1], self.method,
                            window_tol=self.window_tol)
        if curve.failures:
            raise next(iter(curve.failures.values()))
        by_h = {s.h: (s.gamma, s.truncation_residual) for s in curve.samples}
        return np.array([by_h[v] for v in hv])
