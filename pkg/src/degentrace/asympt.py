"""Leading-order predictions for the spectral sum and fits against measured curves.

At a degenerate minimum with germ ``V_k`` the sum behaves like
``h^(-n + n/2 + n/k) * Lambda_00`` as ``h -> 0``.  The coefficient is
computed two ways:

* polar: ``|S^(n-1)| (2 pi)^-n * int_{S^(n-1)} V_k^(-n/k) *
  int int_{R_+^2} phi(u^2 + v^k) u^(n-1) v^(n-1) du dv``;
* phase space: ``(2 pi)^-n int phi(|xi|^2 + V_k(x)) dx dxi``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .errors import AccuracyError, ConditioningError, PreconditionError, UnsupportedPathError
from .model import HomogeneousForm, PotentialModel, sphere_area, sphere_integral
from .testfn import TestFunction

COEFF_RTOL = 1e-10
_TAIL_REL = 1e-13


def exponent(n: int, k: int) -> Fraction:
    """Leading power ``-n + n/2 + n/k`` of ``h``."""
    return Fraction(-n) + Fraction(n, 2) + Fraction(n, k)


def lattice_exponents(k: int, count: int) -> list[Fraction]:
    """The ``count`` smallest positive values of ``j/2 + l/k``."""
    vals = set()
    top = count + 2
    for j in range(2 * top + 1):
        for l in range(k * top + 1):
            v = Fraction(j, 2) + Fraction(l, k)
            if v > 0:
                vals.add(v)
    return sorted(vals)[:count]


@dataclass
class LeadingTermPrediction:
    """Exponent and coefficient of the leading term."""

    n: int
    k: int
    exponent: Fraction
    lambda00: float
    method: str
    error: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------

def _gl(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def _converge(rule: Callable[[int], float], n0: int = 96, n_max: int = 6144,
              rtol: float = COEFF_RTOL) -> tuple[float, float, int]:
    """Double the node count until successive values agree to ``rtol``."""
    prev = rule(n0)
    n = n0
    while True:
        n *= 2
        cur = rule(n)
        err = abs(cur - prev)
        if err <= rtol * max(abs(cur), 1e-300) or err == 0.0:
            return cur, err, n
        if n >= n_max:
            raise AccuracyError(f"quadrature did not converge: change {err:.2e} at {n} nodes")
        prev = cur


def _tail(tf: TestFunction) -> float:
    return tf.tail_cutoff(_TAIL_REL * max(tf._sup(), 1e-300))


def _phi_fn(tf: TestFunction, s_max: float):
    return tf.table(s_max * 1.05)


def radial_moment(tf: TestFunction, n: int, k: int) -> tuple[float, float]:
    """``int int_{R_+^2} phi(u^2 + v^k) u^(n-1) v^(n-1) du dv`` by 2-D Gauss-Legendre."""
    s_max = _tail(tf)
    phi = _phi_fn(tf, s_max)
    U, V = math.sqrt(s_max), s_max ** (1.0 / k)

    def rule(m: int) -> float:
        u, wu = _gl(0.0, U, m)
        v, wv = _gl(0.0, V, m)
        vals = phi(u[:, None] ** 2 + v[None, :] ** k)
        return float((wu * u ** (n - 1)) @ vals @ (wv * v ** (n - 1)))

    val, err, _ = _converge(rule)
    return val, err


def leading_coefficient_polar(model: PotentialModel, tf: TestFunction, n_sphere: int = 256) -> LeadingTermPrediction:
    """Leading coefficient from the sphere integral and the radial moment.

    The 0-sphere carries counting measure, so for n=1 the sphere factor is
    ``V_k(1)^(-1/k) + V_k(-1)^(-1/k)`` and ``|S^0| = 2``.
    """
    n, k = model.n, model.k
    sph = sphere_integral(model.V_k, -n / k, n_sphere)
    mom, err = radial_moment(tf, n, k)
    pref = sphere_area(n) / (2 * math.pi) ** n
    val = pref * sph * mom
    return LeadingTermPrediction(n, k, exponent(n, k), val, "polar", abs(pref * sph) * err,
                                 {"sphere_integral": sph, "radial_moment": mom, "surface": sphere_area(n)})


def _root_along(f: Callable[[float], float], target: float) -> float:
    """Smallest ``r > 0`` with ``f(r) = target`` for increasing ``f``."""
    hi = 1.0
    while f(hi) < target:
        hi *= 2
    return brentq(lambda r: f(r) - target, 0.0, hi, xtol=1e-14)


def phase_space_integral(form: HomogeneousForm, f: Callable, s_max: float, radial_c: float | None = None,
                         n_offset: int = 0) -> tuple[float, float]:
    """``int phi-like f(|xi|^2 + V_k(x)) dx dxi`` over the region where the argument is ``<= s_max``.

    n=1 uses a Cartesian Gauss-Legendre grid on the full box; radial forms
    reduce to ``|S|^2 int int f(rho^2 + c r^k) r^(n-1) rho^(n-1)``; n=2
    non-radial uses polar coordinates in ``x`` and ``xi``.
    """
    n, k = form.n, form.k
    Xi = math.sqrt(s_max)
    if n == 1:
        xr = _root_along(lambda r: float(form(r)), s_max)
        xl = _root_along(lambda r: float(form(-r)), s_max)

        def rule(m):
            m += n_offset
            x, wx = _gl(-xl, xr, m)
            p, wp = _gl(-Xi, Xi, m)
            return float(wx @ f(form(x)[:, None] + p[None, :] ** 2) @ wp)

        val, err, _ = _converge(rule)
        return val, err
    if radial_c is not None:
        R = (s_max / radial_c) ** (1.0 / k)
        S = sphere_area(n)

        def rule(m):
            m += n_offset
            r, wr = _gl(0.0, R, m)
            p, wp = _gl(0.0, Xi, m)
            vals = f(radial_c * r[:, None] ** k + p[None, :] ** 2)
            return float(S * S * (wr * r ** (n - 1)) @ vals @ (wp * p ** (n - 1)))

        val, err, _ = _converge(rule)
        return val, err
    if n == 2:
        def rule(m):
            m += n_offset
            nth = max(64, m // 2)
            th = 2 * np.pi * np.arange(nth) / nth
            total = 0.0
            p, wp = _gl(0.0, Xi, m)
            for t in th:
                vk = float(form(np.array([math.cos(t), math.sin(t)])))
                R = (s_max / vk) ** (1.0 / k)
                r, wr = _gl(0.0, R, m)
                vals = f(vk * r[:, None] ** k + p[None, :] ** 2)
                total += float((wr * r) @ vals @ (wp * p))
            return 2 * np.pi * total * (2 * np.pi / nth)

        val, err, _ = _converge(rule, n0=64, n_max=1024)
        return val, err
    raise UnsupportedPathError("phase-space quadrature for non-radial germs is available for n <= 2")


def leading_coefficient_phase_space(model: PotentialModel, tf: TestFunction) -> LeadingTermPrediction:
    """Leading coefficient as ``(2 pi)^-n int phi(|xi|^2 + V_k(x)) dx dxi``."""
    n, k = model.n, model.k
    s_max = _tail(tf)
    phi = _phi_fn(tf, s_max)
    c = model.V_k.radial_coefficient() if n > 1 else None
    if n == 3 and c is None:
        raise UnsupportedPathError("non-radial germs in three dimensions are not supported")
    val, err = phase_space_integral(model.V_k, phi, s_max, c)
    pref = (2 * math.pi) ** (-n)
    return LeadingTermPrediction(n, k, exponent(n, k), pref * val, "phase_space", pref * err, {"s_max": s_max})


def weyl_scaling_check(model: PotentialModel, tf: TestFunction, h: float) -> tuple[float, float, float]:
    """Both sides of ``int phi((xi^2 + V_k)/h) = h^(n/2 + n/k) int phi(xi^2 + V_k)``.

    The left side is integrated on its own box with a different node
    count, so the relative difference measures quadrature error only.
    """
    n, k = model.n, model.k
    s_max = _tail(tf)
    phi = _phi_fn(tf, s_max)
    c = model.V_k.radial_coefficient() if n > 1 else None
    lhs, _ = phase_space_integral(model.V_k, lambda s: phi(s / h), h * s_max, c, n_offset=7)
    base, _ = phase_space_integral(model.V_k, phi, s_max, c)
    rhs = h ** (n / 2 + n / k) * base
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)


# ---------------------------------------------------------------------------
# Regular level
# ---------------------------------------------------------------------------

def _turning_points(model: PotentialModel, E: float) -> tuple[float, float]:
    x0 = model.x0[0]
    f = lambda r, s: float(model(x0 + s * r)) - E  # noqa: E731
    out = []
    for s in (-1.0, 1.0):
        hi = 1e-3
        while f(hi, s) < 0:
            hi *= 2
            if hi > 1e8:
                raise PreconditionError("energy surface is not compact")
        out.append(x0 + s * brentq(lambda r: f(r, s), 0.0, hi, xtol=1e-15, rtol=1e-15))
    return out[0], out[1]


def phase_volume(model: PotentialModel, E: float) -> float:
    """Phase-space volume ``|{xi^2 + V(x) <= E}|`` (h-independent part of V).

    One-dimensional models are integrated between the turning points with
    an algebraic-endpoint weight; radial models in n = 2, 3 use the
    ball-volume formula in ``xi``.
    """
    if E <= model.E_c:
        return 0.0
    if model.n == 1:
        a, b = _turning_points(model, E)

        def g(x):
            den = (x - a) * (b - x)
            if den <= 0.0:
                # limit at a turning point: |V'| / (b - a)
                return math.sqrt(abs(float(np.ravel(model.gradient(np.array([x])))[0])) / (b - a))
            return math.sqrt(max(E - float(model(x)), 0.0) / den)

        val, _ = quad(g, a, b, weight="alg", wvar=(0.5, 0.5), epsabs=0, epsrel=1e-13, limit=200)
        return 2.0 * val
    if not model.radial:
        raise UnsupportedPathError("phase volume in n > 1 needs a radial model")
    n = model.n
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    rt = _root_along(lambda r: float(model.radial_profile(r)), E)
    val, _ = quad(lambda r: max(E - float(model.radial_profile(r)), 0.0) ** (n / 2) * r ** (n - 1), 0.0, rt,
                  epsabs=0, epsrel=1e-13, limit=200)
    return sphere_area(n) * ball * val


def liouville_volume(model: PotentialModel, E: float, rel_step: float = 1e-3) -> tuple[float, float]:
    """``d Vol / dE`` by central differences at two steps, Richardson-combined.

    Returns the extrapolated value and the difference between the two raw
    estimates as an error indicator.
    """
    d = rel_step * max(abs(E), 1.0)

    def central(step):
        return (phase_volume(model, E + step) - phase_volume(model, E - step)) / (2 * step)

    d1, d2 = central(d), central(d / 2)
    return (4 * d2 - d1) / 3, abs(d2 - d1)


@dataclass
class RegularLevelPrediction:
    """Leading regular-level term and its ingredients.

    ``value`` is ``(2 pi h)^(1-n) phi_hat(0) LVol / (2 pi)``, the form
    consistent with the Fourier convention of :mod:`degentrace.testfn`;
    ``stated_value`` omits the ``1/(2 pi)``.
    """

    value: float
    stated_value: float
    lvol: float
    lvol_error: float
    period: float
    hat0: float


def regular_level_prediction(model: PotentialModel, E: float, tf: TestFunction, h: float) -> RegularLevelPrediction:
    """Predicted spectral sum at a regular energy ``E``.

    Raises
    ------
    PreconditionError
        If ``E`` is not a regular value or the band radius is not below
        the minimal period of the orbits on the energy surface.
    """
    if model.n != 1:
        raise UnsupportedPathError("regular-level prediction is implemented for n = 1")
    from .dynamics import period

    a, b = _turning_points(model, E)
    grad = min(abs(float(model.gradient(a)[0])), abs(float(model.gradient(b)[0])))
    if grad < 1e-8:
        raise PreconditionError(f"E = {E} is not a regular value (|V'| = {grad:.2e} at a turning point)")
    T_E = period(model, E)
    if not tf.T < T_E:
        raise PreconditionError(f"band radius {tf.T} is not below the minimal period {T_E:.6g}")
    lvol, lerr = liouville_volume(model, E)
    pref = (2 * math.pi * h) ** (1 - model.n)
    stated = pref * tf.hat0 * lvol
    return RegularLevelPrediction(stated / (2 * math.pi), stated, lvol, lerr, T_E, tf.hat0)


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    """Least-squares fit of ``gamma = h^a (A + sum_m B_m h^(e_m))``."""

    n_corrections: int
    exponent: float
    correction_exponents: list[Fraction]
    A: float
    corrections: list[float]
    residual_norm: float
    h_range: tuple[float, float]
    condition_number: float
    slope: float
    free_exponent: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correction_exponents"] = [str(e) for e in self.correction_exponents]
        return d


def fit_leading(h, gamma, exponent_value: float | Fraction, k: int, n_corrections: int = 2, *,
                free_exponent: bool = False, cond_max: float = 1e8) -> FitResult:
    """Fit measured sums against the leading power with lattice corrections.

    Parameters
    ----------
    h, gamma : array_like
    exponent_value : float or Fraction
        Leading power of ``h``.
    k : int
        Germ degree; correction powers are the smallest positive
        ``j/2 + l/k``.
    n_corrections : int
    free_exponent : bool
        Also report the log-log slope of ``gamma`` against ``h`` over
        all samples and use it as the leading power.
    cond_max : float
        Largest accepted condition number of the column-scaled design.

    Raises
    ------
    ConditioningError
        When the h range is too narrow for the requested corrections.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(gamma, dtype=float)
    check_consistent_length(h, g)
    if h.size < n_corrections + 2:
        raise ValueError(f"need at least {n_corrections + 2} samples")
    slope = float(np.polyfit(np.log(h), np.log(np.abs(g)), 1)[0])
    a = slope if free_exponent else float(exponent_value)
    exps = lattice_exponents(k, n_corrections)
    y = g * h ** (-a)
    D = np.column_stack([np.ones_like(h)] + [h ** float(e) for e in exps])
    scale = np.max(np.abs(D), axis=0)
    Ds = D / scale
    cond = float(np.linalg.cond(Ds))
    if cond > cond_max:
        raise ConditioningError(f"design matrix condition number {cond:.3e} exceeds {cond_max:.1e}", cond)
    coef, *_ = np.linalg.lstsq(Ds, y, rcond=None)
    coef = coef / scale
    resid = float(np.linalg.norm(D @ coef - y))
    return FitResult(n_corrections, a, exps, float(coef[0]), [float(c) for c in coef[1:]], resid,
                     (float(h.min()), float(h.max())), cond, slope, free_exponent)


class LeadingTermRegressor(RegressorMixin, BaseEstimator):
    """Regressor for ``gamma(h) = h^a (A + sum_m B_m h^(e_m))``.

    Parameters
    ----------
    n, k : int
        Dimension and germ degree, fixing ``a = -n + n/2 + n/k``.
    n_corrections : int
    free_exponent : bool
        Use the fitted log-log slope as the leading power.

    Examples
    --------
    >>> import numpy as np
    >>> h = np.geomspace(1e-2, 1e-6, 8)
    >>> g = h ** -0.25 * (0.08 + 0.3 * h ** 0.25)
    >>> reg = LeadingTermRegressor(n=1, k=4, n_corrections=1).fit(h[:, None], g)
    >>> round(reg.coef_[0], 10)
    0.08
    """

    def __init__(self, n: int = 1, k: int = 4, n_corrections: int = 2, free_exponent: bool = False):
        self.n = n
        self.k = k
        self.n_corrections = n_corrections
        self.free_exponent = free_exponent

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float)
        check_consistent_length(X, y)
        self.n_features_in_ = X.shape[1]
        res = fit_leading(X[:, 0], y, exponent(self.n, self.k), self.k, self.n_corrections,
                          free_exponent=self.free_exponent)
        self.result_ = res
        self.coef_ = np.array([res.A] + res.corrections)
        self.exponent_ = res.exponent
        self.correction_exponents_ = [float(e) for e in res.correction_exponents]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        h = check_array(X, dtype=float)[:, 0]
        D = np.column_stack([np.ones_like(h)] + [h**e for e in self.correction_exponents_])
        return h**self.exponent_ * (D @ self.coef_)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def prediction_report(model: PotentialModel, tf: TestFunction) -> dict:
    """``{n, k, exponent, lambda00_polar, lambda00_phase_space, quadrature_error}``."""
    pol = leading_coefficient_polar(model, tf)
    try:
        ph = leading_coefficient_phase_space(model, tf)
        ph_val, ph_err = ph.lambda00, ph.error
    except UnsupportedPathError:
        ph_val, ph_err = None, None
    return {"n": model.n, "k": model.k, "exponent": float(pol.exponent), "exponent_exact": str(pol.exponent),
            "lambda00_polar": pol.lambda00, "lambda00_phase_space": ph_val,
            "quadrature_error": max(pol.error, ph_err or 0.0)}


def write_prediction_json(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_fit_csv(path: str | Path, fit: FitResult, h: Sequence[float], gamma: Sequence[float]) -> None:
    """Samples with the fitted model value, then the fitted coefficients."""
    D = np.column_stack([np.ones(len(h))] + [np.asarray(h) ** float(e) for e in fit.correction_exponents])
    model_vals = np.asarray(h) ** fit.exponent * (D @ np.array([fit.A] + fit.corrections))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "gamma", "fit", "rel_residual"])
        for hv, gv, mv in zip(h, gamma, model_vals):
            w.writerow([repr(float(hv)), repr(float(gv)), repr(float(mv)), f"{(gv - mv) / mv:.3e}"])
        w.writerow([])
        w.writerow(["parameter", "exponent", "value"])
        w.writerow(["A", "0", repr(fit.A)])
        for e, c in zip(fit.correction_exponents, fit.corrections):
            w.writerow(["B", str(e), repr(c)])
        w.writerow(["leading_exponent", "", repr(fit.exponent)])
        w.writerow(["condition_number", "", f"{fit.condition_number:.3e}"])
        w.writerow(["residual_norm", "", f"{fit.residual_norm:.3e}"])
