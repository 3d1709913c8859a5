"""Model oscillatory integral ``I(lam) = int exp(-i lam y0 (y1^2 +- y2^k)) a(y0, y1, y2) dy``.

Integrating out ``y0`` gives ``I(lam) = int a_hat(lam (y1^2 +- y2^k), y1, y2) dy1 dy2``
where ``a_hat(w, .) = int exp(-i w y0) a(y0, .) dy0`` is the partial
transform in the first slot, the forward convention of
:mod:`degentrace.testfn`.  For the definite phase the integral has the
expansion ``sum_{j,l} lam^(-(j+1)/2 - (l+1)/k) C_{j,l}`` with

    C_{j,l} = 1/(j! l!) int d1^j d2^l a_hat(y1^2 + y2^k, 0, 0) y1^j y2^l dy1 dy2.

Direct values use the rescaled variables ``u = lam^(1/2) y1``,
``v = lam^(1/k) y2``.  In the definite case the pair ``(u, v)`` is mapped to
``w = u^2 + v^k`` and ``tau = u^2 / w``, which separates the oscillation
(in ``w`` only) from the endpoint singularities (in ``tau`` only).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from .errors import PreconditionError, RefinementError, UnsupportedPathError
from .testfn import TestFunction, bump, bump_transform

PHI_TAIL = 1e-13
_UNIT = TestFunction()


# ---------------------------------------------------------------------------
# Amplitude factors
# ---------------------------------------------------------------------------

def _series_inverse(q: Sequence[float], m: int) -> np.ndarray:
    r = np.zeros(m + 1)
    r[0] = 1.0 / q[0]
    for n in range(1, m + 1):
        acc = sum(q[i] * r[n - i] for i in range(1, min(n, len(q) - 1) + 1))
        r[n] = -acc / q[0]
    return r


def _series_exp(g: np.ndarray) -> np.ndarray:
    m = g.size - 1
    f = np.zeros(m + 1)
    f[0] = math.exp(g[0])
    for n in range(1, m + 1):
        f[n] = sum(i * g[i] * f[n - i] for i in range(1, n + 1)) / n
    return f


def bump_taylor(centre: float, radius: float, order: int) -> np.ndarray:
    """Taylor coefficients at ``y = 0`` of ``bump((y - centre) / radius)``.

    Uses power-series inversion of ``1 - u^2`` and the exponential
    recurrence ``n f_n = sum_i i g_i f_(n-i)``.
    """
    u0 = -centre / radius
    if abs(u0) >= 1.0:
        return np.zeros(order + 1)
    q = [1.0 - u0 * u0, -2.0 * u0 / radius, -1.0 / radius**2]
    g = -_series_inverse(q, order)
    return _series_exp(g)


@dataclass(frozen=True)
class BumpFactor:
    """``a1(y0) = scale * bump((y0 - centre) / radius)`` with a closed-form transform."""

    centre: float = 1.0
    radius: float = 0.5
    scale: complex = 1.0

    def __call__(self, y) -> np.ndarray:
        return self.scale * bump((np.asarray(y, dtype=float) - self.centre) / self.radius)

    def transform(self, omega) -> np.ndarray:
        """``int exp(-i w y0) a1(y0) dy0``."""
        return self.scale * bump_transform(omega, self.radius, self.centre)

    @property
    def support(self) -> tuple[float, float]:
        return self.centre - self.radius, self.centre + self.radius

    def reflected_conjugate(self) -> "BumpFactor":
        """Factor of ``conj(a1(-y0))``."""
        return BumpFactor(-self.centre, self.radius, np.conj(self.scale))

    def flat_scale(self) -> float:
        """Band in ``w`` over which the transform changes appreciably."""
        return min(1.0 / self.radius, math.pi / abs(self.centre)) if self.centre else 1.0 / self.radius


@dataclass(frozen=True)
class TaylorFactor:
    """``a(y) = P(y) * bump((y - centre) / radius)`` with ``P`` given by ascending coefficients."""

    poly: tuple = (1.0,)
    centre: float = 0.0
    radius: float = 1.0

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        p = np.polynomial.polynomial.polyval(y, np.asarray(self.poly))
        return p * bump((y - self.centre) / self.radius)

    def taylor(self, order: int) -> np.ndarray:
        """Coefficients ``a^(j)(0) / j!`` for ``j = 0..order``."""
        b = bump_taylor(self.centre, self.radius, order)
        p = np.zeros(order + 1, dtype=np.result_type(np.asarray(self.poly), float))
        for i, c in enumerate(self.poly[: order + 1]):
            p[i] = c
        return np.convolve(p, b)[: order + 1]

    @property
    def support(self) -> tuple[float, float]:
        return self.centre - self.radius, self.centre + self.radius

    def conjugate(self) -> "TaylorFactor":
        return TaylorFactor(tuple(np.conj(np.asarray(self.poly))), self.centre, self.radius)


def _fd_weights(order: int, offsets: np.ndarray) -> np.ndarray:
    m = offsets.size
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


@dataclass(frozen=True)
class GeneralAmplitude:
    """Non-separable amplitude ``a(y0, y1, y2)``, vectorized in its arguments.

    Parameters
    ----------
    func : callable
        ``func(y0, y1, y2)`` broadcasting over arrays.
    y0_support : (float, float)
        Interval containing the ``y0`` support.
    y_support : (float, float)
        Bounds containing the support in ``y1`` and in ``y2``.
    y_scale : float
        Length scale for the finite-difference steps.

    Notes
    -----
    The ``y0`` transform is recomputed at every quadrature point, so a
    direct value costs about ``lam^2`` times a separable one until ``lam``
    reaches the transform cutoff.
    """

    func: Callable
    y0_support: tuple[float, float]
    y_support: tuple[float, float] = (-1.0, 1.0)
    y_scale: float = 1.0

    def _y0_rule(self, wmax: float) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.y0_support
        # 16-point panels of length 8/omega integrate e^(-i omega y0) to ~1e-16
        panels = max(4, int(math.ceil(wmax * (b - a) / 8.0)) + 4)
        x, w = leggauss(16)
        edges = np.linspace(a, b, panels + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()

    def hat(self, omega, y1, y2) -> np.ndarray:
        """Partial transform in ``y0`` at broadcast ``(omega, y1, y2)``."""
        omega, y1, y2 = np.broadcast_arrays(np.asarray(omega, float), np.asarray(y1, float), np.asarray(y2, float))
        nodes, weights = self._y0_rule(float(np.max(np.abs(omega), initial=0.0)))
        out = np.zeros(omega.shape, dtype=complex)
        flat = [a.ravel() for a in (omega, y1, y2)]
        res = out.ravel()
        for start in range(0, flat[0].size, 4096):
            sl = slice(start, start + 4096)
            vals = self.func(nodes[:, None], flat[1][None, sl], flat[2][None, sl])
            res[sl] = np.sum(weights[:, None] * np.exp(-1j * np.outer(nodes, flat[0][sl])) * vals, axis=0)
        return res.reshape(omega.shape)

    def derivative_profile(self, j: int, l: int) -> tuple[Callable, float]:
        """``y0 -> d1^j d2^l a(y0, 0, 0)`` by central differences, with a Richardson error.

        The step is ``eps^(1/3) * y_scale`` raised to the total order's
        balance point; values at the step and half the step are compared
        on a ``y0`` sample grid.
        """
        order = j + l
        base = np.finfo(float).eps ** (1.0 / (order + 3)) * self.y_scale if order else 0.0
        offs = np.arange(-4.0, 5.0)

        def at(step: float):
            if order == 0:
                return lambda y0: self.func(np.asarray(y0, float), 0.0, 0.0)
            wj = _fd_weights(j, offs) if j else np.array([1.0])
            wl = _fd_weights(l, offs) if l else np.array([1.0])
            oj = offs if j else np.array([0.0])
            ol = offs if l else np.array([0.0])

            def g(y0):
                y0 = np.asarray(y0, float)
                acc = np.zeros(y0.shape, dtype=np.result_type(y0, complex))
                for a, ca in zip(oj, wj):
                    for b, cb in zip(ol, wl):
                        acc = acc + ca * cb * self.func(y0, a * step, b * step)
                return acc / step**order

            return g

        if order == 0:
            return at(0.0), 0.0
        g1, g2 = at(base), at(base / 2)
        sample = np.linspace(*self.y0_support, 41)
        err = float(np.max(np.abs(g1(sample) - g2(sample))))
        return g2, err

    def conjugate_reflected(self) -> "GeneralAmplitude":
        f = self.func
        a, b = self.y0_support
        return replace(self, func=lambda y0, y1, y2: np.conj(f(-y0, y1, y2)), y0_support=(-b, -a))


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _tanh_sinh_unit(k: int, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes ``tau``, complements ``1 - tau`` and weights on ``[0, 1]``.

    The range in the transformed variable reaches ``tau ~ 1e-40`` and
    ``1 - tau ~ 10^(-15 k - 10)`` so that the integrable endpoint powers
    ``tau^(-1/2)`` and ``(1 - tau)^(1/k - 1)`` are truncated below 1e-16.
    """
    step = 2.0**-level
    t_lo = -math.asinh(40 * math.log(10) / math.pi)
    t_hi = math.asinh((15 * k + 10) * math.log(10) / math.pi)
    t = np.arange(math.floor(t_lo / step), math.ceil(t_hi / step) + 1) * step
    g = 0.5 * math.pi * np.sinh(t)
    tau = 1.0 / (1.0 + np.exp(-2 * g))
    comp = 1.0 / (1.0 + np.exp(2 * g))
    w = step * 0.5 * math.pi * np.cosh(t) / (2.0 * np.cosh(g) ** 2)
    keep = (tau > 0) & (comp > 0) & (w > 0)
    return tau[keep], comp[keep], w[keep]


@lru_cache(maxsize=8)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def _omega_rule(w_max: float, panel: float, n_gl: int, k: int, grading: int = 14) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int_0^w_max f(w) w^(1/2 + 1/k - 1) dw``.

    The first panel ``[0, w1]`` with ``w1 = panel 2^-grading`` uses
    ``w = w1 r^(2k)``, which turns the power weight and the half-integer
    and ``1/k`` powers of the amplitude expansion into a polynomial in
    ``r``.  Geometrically graded panels lead up to ``panel``, after which
    panels are uniform.  The returned weights include ``w^(1/2 + 1/k - 1)``.
    """
    x, wx = _gl(n_gl)
    beta0 = 0.5 + 1.0 / k
    w1 = min(panel * 2.0**-grading, w_max)
    r = 0.5 * (x + 1.0)
    om0 = w1 * r ** (2 * k)
    wt0 = 0.5 * wx * 2 * k * w1 * r ** (2 * k - 1) * om0 ** (beta0 - 1)
    edges = [w1]
    while edges[-1] < w_max and edges[-1] < panel:
        edges.append(min(2 * edges[-1], w_max))
    if edges[-1] < w_max:
        n_pan = max(1, int(math.ceil((w_max - edges[-1]) / panel)))
        edges.extend(np.linspace(edges[-1], w_max, n_pan + 1)[1:])
    edges = np.asarray(edges)
    if edges.size < 2:
        return om0, wt0
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    om = (mid[:, None] + half[:, None] * x).ravel()
    wt = (half[:, None] * wx).ravel() * om ** (beta0 - 1)
    return np.concatenate([om0, om]), np.concatenate([wt0, wt])


# ---------------------------------------------------------------------------
# The integral
# ---------------------------------------------------------------------------

@dataclass
class DirectValue:
    """Direct evaluation with its error estimate and the absolute scale it is relative to."""

    lam: float
    value: complex
    error: float
    scale: float


@dataclass
class ModelIntegral:
    """Model integral data.

    Parameters
    ----------
    k : int
        Even degree >= 4.
    a1 : BumpFactor
        ``y0`` factor (separable case).
    a2, a3 : TaylorFactor
        ``y1`` and ``y2`` factors (separable case).
    mode : {"definite", "indefinite"}
        Phase ``y1^2 + y2^k`` or ``y1^2 - y2^k``.
    domain : {"half", "full"}
        Integration over ``[0, inf)^2`` or over the whole plane.
    general : GeneralAmplitude, optional
        Replaces the separable factors when given.
    """

    k: int = 4
    a1: BumpFactor = field(default_factory=BumpFactor)
    a2: TaylorFactor = field(default_factory=lambda: TaylorFactor((1.0,), 0.3, 1.0))
    a3: TaylorFactor = field(default_factory=lambda: TaylorFactor((1.0,), -0.2, 1.0))
    mode: str = "definite"
    domain: str = "half"
    general: GeneralAmplitude | None = None
    _coef_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 4 or self.k % 2:
            raise PreconditionError(f"k must be even and >= 4, got {self.k}")
        if self.mode not in ("definite", "indefinite"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.domain not in ("half", "full"):
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def separable(self) -> bool:
        return self.general is None

    def conjugate(self) -> "ModelIntegral":
        """Integral with amplitude ``conj(a(-y0, y1, y2))``, whose value is ``conj(I(lam))``."""
        if self.separable:
            return replace(self, a1=self.a1.reflected_conjugate(), a2=self.a2.conjugate(),
                           a3=self.a3.conjugate(), _coef_cache={})
        return replace(self, general=self.general.conjugate_reflected(), _coef_cache={})

    # -- pieces ---------------------------------------------------------
    def _y_extent(self) -> tuple[float, float]:
        """Largest ``|y1|`` and ``|y2|`` in the amplitude support."""
        if self.separable:
            ext = []
            for f in (self.a2, self.a3):
                lo, hi = f.support
                ext.append(max(abs(hi), abs(lo)) if self.domain == "full" else max(hi, 0.0))
            return ext[0], ext[1]
        lo, hi = self.general.y_support
        e = max(abs(lo), abs(hi)) if self.domain == "full" else max(hi, 0.0)
        return e, e

    def _w_cut(self) -> float:
        """``w`` beyond which the ``y0`` transform is below ``PHI_TAIL`` of its sup."""
        s_cut = _UNIT.tail_cutoff(PHI_TAIL * _UNIT._sup())
        if self.separable:
            return s_cut / self.a1.radius
        a, b = self.general.y0_support
        return 2 * s_cut / (b - a)

    def _panel(self) -> float:
        if self.separable:
            return self.a1.flat_scale()
        a, b = self.general.y0_support
        c = 0.5 * (a + b)
        return min(2.0 / (b - a), math.pi / abs(c)) if c else 2.0 / (b - a)

    def _sym(self, f: Callable, y) -> np.ndarray:
        return f(y) + f(-y) if self.domain == "full" else f(y)

    def _amp(self, omega, y1, y2) -> np.ndarray:
        """``a_hat(omega, y1, y2)`` summed over reflections for the full domain."""
        if self.separable:
            return self.a1.transform(omega) * self._sym(self.a2, y1) * self._sym(self.a3, y2)
        g = self.general
        if self.domain == "full":
            return sum(g.hat(omega, s1 * y1, s2 * y2) for s1 in (1, -1) for s2 in (1, -1))
        return g.hat(omega, y1, y2)

    # -- direct value ---------------------------------------------------
    def _definite(self, lam: float, n_gl: int, level: int) -> tuple[complex, float]:
        k = self.k
        Y1, Y2 = self._y_extent()
        w_max = min(self._w_cut(), lam * (Y1**2 + Y2**k))
        if w_max <= 0:
            return 0j, 0.0
        om, wo = _omega_rule(w_max, self._panel(), n_gl, k)
        x, xc, wx = _tanh_sinh_unit(k, level)
        # tau range on which both y1 and y2 stay inside the support
        ta = np.clip(1.0 - lam * Y2**k / om, 0.0, 1.0)
        tb = np.clip(lam * Y1**2 / om, 0.0, 1.0)
        total, scale = 0j, 0.0
        for start in range(0, om.size, 512):
            sl = slice(start, start + 512)
            o, a, b = om[sl, None], ta[sl, None], tb[sl, None]
            tau = a + (b - a) * x
            comp = (1.0 - b) + (b - a) * xc
            wt = (b - a) * wx * tau**-0.5 * comp ** (1.0 / k - 1.0)
            y1 = np.sqrt(o * tau) / math.sqrt(lam)
            y2 = (o * comp) ** (1.0 / k) / lam ** (1.0 / k)
            vals = self._amp(o, y1, y2) * (wo[sl, None] * wt)
            total += complex(np.sum(vals))
            scale += float(np.sum(np.abs(vals)))
        pref = lam ** -(0.5 + 1.0 / k) / (2 * k)
        return pref * total, pref * scale

    def _indefinite(self, lam: float, n_gl: int, level: int) -> tuple[complex, float]:
        """Quadrature in ``w = u^2 - v^k`` for the indefinite phase.

        With ``p = u^2``, ``q = v^k`` and ``m = |w|``, the smaller of ``p, q``
        is written ``m s`` and the larger ``m (1 + s)``; the inner integral
        over ``s`` is split into ``[0, 1]`` (tanh-sinh, singular at 0) and
        ``[1, s_max]`` (tanh-sinh in ``log s``).  The outer weight is the
        same ``m^(1/2 + 1/k - 1)`` as in the definite case.
        """
        k = self.k
        Y1, Y2 = self._y_extent()
        Pm, Qm = lam * Y1**2, lam * Y2**k
        w_max = min(self._w_cut(), max(Pm, Qm))
        if w_max <= 0:
            return 0j, 0.0
        om, wo = _omega_rule(w_max, self._panel(), n_gl, k)
        tau, comp, wt = _tanh_sinh_unit(k, level)
        total, scale = 0j, 0.0
        for sign in (1.0, -1.0):
            lim = np.minimum(Qm, Pm - om) if sign > 0 else np.minimum(Pm, Qm - om)
            smax = np.where(lim > 0, lim / om, 0.0)
            for start in range(0, om.size, 256):
                sl = slice(start, start + 256)
                o = om[sl, None]
                c = np.minimum(smax[sl], 1.0)[:, None]
                lg = np.log(np.maximum(smax[sl], 1.0))[:, None]
                s_in = c * comp
                s_out = np.exp(lg * tau)
                sv = np.concatenate([s_in, s_out], axis=1)
                ds = np.concatenate([c * wt, lg * wt * s_out], axis=1)
                if sign > 0:
                    p, q = o * (1.0 + sv), o * sv
                    with np.errstate(divide="ignore"):
                        dens = (1.0 + sv) ** -0.5 * sv ** (1.0 / k - 1.0)
                else:
                    p, q = o * sv, o * (1.0 + sv)
                    with np.errstate(divide="ignore"):
                        dens = sv**-0.5 * (1.0 + sv) ** (1.0 / k - 1.0)
                y1 = np.sqrt(p) / math.sqrt(lam)
                y2 = q ** (1.0 / k) / lam ** (1.0 / k)
                with np.errstate(divide="ignore", invalid="ignore"):
                    vals = self._amp(sign * o, y1, y2) * (wo[sl, None] * ds * dens)
                vals = np.where(ds > 0, vals, 0.0)
                total += complex(np.sum(vals))
                scale += float(np.sum(np.abs(vals)))
        pref = lam ** -(0.5 + 1.0 / k) / (2 * k)
        return pref * total, pref * scale

    def direct_value(self, lam: float, rtol: float = 1e-10) -> DirectValue:
        """Non-oscillatory 2D quadrature of the ``y0``-transformed integral.

        Two rules (Gauss-Legendre 12 / tanh-sinh step 1/16 and Gauss-Legendre
        16 / step 1/32) are compared; the difference is the error estimate,
        required to be below ``rtol`` times the absolute integral.

        Raises
        ------
        RefinementError
            If the two rules disagree by more than the tolerance.
        """
        if lam <= 0:
            raise ValueError("lam must be positive")
        fn = self._definite if self.mode == "definite" else self._indefinite
        coarse, _ = fn(lam, 12, 4)
        fine, scale = fn(lam, 16, 5)
        err = abs(fine - coarse)
        if err > rtol * max(scale, 1e-300) and scale > 0:
            raise RefinementError(f"direct value at lam={lam:g} not resolved: estimate {err:.2e}, scale {scale:.2e}")
        return DirectValue(float(lam), fine, float(err), float(scale))

    # -- expansion -------------------------------------------------------
    def _require_definite(self):
        if self.mode != "definite":
            raise UnsupportedPathError("the expansion does not apply to the indefinite phase y1^2 - y2^k")

    def taylor_product(self, j: int, l: int) -> tuple[complex, float]:
        """``a2^(j)(0) a3^(l)(0) / (j! l!)`` (separable) and its error (zero)."""
        return complex(self.a2.taylor(j)[j] * self.a3.taylor(l)[l]), 0.0

    def monomial_moment(self, j: int, l: int, profile: Callable | None = None) -> complex:
        """``int_{[0,inf)^2} T(y1^2 + y2^k) y1^j y2^l dy1 dy2`` for the ``y0`` transform ``T``.

        Evaluated with the same ``(w, tau)`` rule as the direct value;
        ``profile`` replaces the transform of ``a1``.
        """
        k = self.k
        T = profile if profile is not None else self.a1.transform
        om, wo = _omega_rule(self._w_cut(), self._panel(), 16, k)
        tau, comp, wt = _tanh_sinh_unit(k, 4)
        ang = float(np.sum(wt * tau ** (0.5 * j - 0.5) * comp ** ((l + 1.0) / k - 1.0)))
        rad = complex(np.sum(T(om) * wo * om ** (0.5 * j + l / k)))
        return rad * ang / (2 * k)

    def expansion_coefficient(self, j: int, l: int) -> complex:
        """``C_{j,l}`` with the ``1/(j! l!)`` normalization.

        Raises
        ------
        UnsupportedPathError
            In indefinite mode.
        """
        self._require_definite()
        key = (j, l)
        if key in self._coef_cache:
            return self._coef_cache[key]
        if self.domain == "full" and (j % 2 or l % 2):
            c = 0j
        elif self.separable:
            t, _ = self.taylor_product(j, l)
            c = 0j if t == 0 else t * self.monomial_moment(j, l)
            if self.domain == "full":
                c *= 4
        else:
            g, _ = self.general.derivative_profile(j, l)
            a, b = self.general.y0_support
            nodes, weights = self.general._y0_rule(self._w_cut())
            dvals = g(nodes) * weights
            prof = lambda w: np.exp(-1j * np.outer(np.atleast_1d(w), nodes)) @ dvals  # noqa: E731
            c = self.monomial_moment(j, l, prof) / (math.factorial(j) * math.factorial(l))
            if self.domain == "full":
                c *= 4
        self._coef_cache[key] = c
        return c

    def expansion_value(self, lam: float, J: int, L: int) -> complex:
        """Partial sum over ``j <= J``, ``l <= L``."""
        self._require_definite()
        k = self.k
        return sum(lam ** (-(j + 1) / 2 - (l + 1) / k) * self.expansion_coefficient(j, l)
                   for j in range(J + 1) for l in range(L + 1))

    def next_exponent(self, J: int, L: int, reach: int = 6) -> float:
        """Smallest ``(j+1)/2 + (l+1)/k`` over excluded indices with non-zero coefficient."""
        k = self.k
        best = math.inf
        for j in range(J + reach + 1):
            for l in range(L + reach * k // 2 + 1):
                if j <= J and l <= L:
                    continue
                e = (j + 1) / 2 + (l + 1) / k
                if e >= best:
                    continue
                if self.separable:
                    nz = self.taylor_product(j, l)[0] != 0
                    if self.domain == "full" and (j % 2 or l % 2):
                        nz = False
                else:
                    nz = abs(self.expansion_coefficient(j, l)) > 0
                if nz:
                    best = e
        return best


def expansion_exponent(j: int, l: int, k: int) -> Fraction:
    """``(j+1)/2 + (l+1)/k`` as an exact fraction (the decay is its negative)."""
    return Fraction(j + 1, 2) + Fraction(l + 1, k)



def coefficient_oracle(p: ModelIntegral, j: int, l: int) -> complex:
    """``C_{j,l}`` from the Beta-function reduction and adaptive 1D quadrature.

    The ``y0`` transform is read from a spline table of the unit test
    function (error below 1e-13), integrated piecewise by QUADPACK.

    ``int_{[0,inf)^2} T(y1^2 + y2^k) y1^j y2^l = B((j+1)/2, (l+1)/k) / (2k) * int_0^inf T(s) s^(b-1) ds``
    with ``b = (j+1)/2 + (l+1)/k``.
    """
    if not p.separable:
        raise UnsupportedPathError("oracle implemented for separable amplitudes")
    k = p.k
    if p.domain == "full" and (j % 2 or l % 2):
        return 0j
    b = (j + 1) / 2 + (l + 1) / k
    smax = p._w_cut()
    a1 = p.a1
    table = _UNIT.table(a1.radius * smax)

    def T(s):
        return a1.scale * np.exp(-1j * s * a1.centre) * 2 * math.pi * a1.radius * float(table(a1.radius * s))

    edges = np.arange(0.0, smax + 4.0, 4.0)
    edges[-1] = smax
    radial = 0j
    for fn, unit in ((np.real, 1.0), (np.imag, 1j)):
        parts = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo == 0.0:
                g = lambda s: float(fn(T(s)))  # noqa: E731
                val, _ = quad(g, lo, hi, weight="alg", wvar=(b - 1, 0.0), epsabs=1e-17, epsrel=1e-12, limit=200)
            else:
                g = lambda s: float(fn(T(s))) * s ** (b - 1)  # noqa: E731
                val, _ = quad(g, lo, hi, epsabs=1e-17, epsrel=1e-12, limit=200)
            parts.append(val)
        radial += unit * math.fsum(parts)
    t, _ = p.taylor_product(j, l)
    c = t * beta_fn((j + 1) / 2, (l + 1) / k) / (2 * k) * radial
    return 4 * c if p.domain == "full" else c


def brute_force_3d(p: ModelIntegral, lam: float, panels: tuple[int, int, int] = (48, 48, 48), n_gl: int = 16) -> complex:
    """Oscillatory triple integral on the amplitude support by composite Gauss-Legendre."""
    if not p.separable:
        raise UnsupportedPathError("oracle implemented for separable amplitudes")
    x, wx = leggauss(n_gl)

    def rule(a, b, n):
        e = np.linspace(a, b, n + 1)
        m, h = 0.5 * (e[1:] + e[:-1]), 0.5 * np.diff(e)
        return (m[:, None] + h[:, None] * x).ravel(), (h[:, None] * wx).ravel()

    sign = 1.0 if p.mode == "definite" else -1.0
    y0, w0 = rule(*p.a1.support, panels[0])
    ranges = []
    for f in (p.a2, p.a3):
        lo, hi = f.support
        ranges.append((lo if p.domain == "full" else max(lo, 0.0), hi))
    y1, w1 = rule(*ranges[0], panels[1])
    y2, w2 = rule(*ranges[1], panels[2])
    A2 = p.a2(y1) * w1
    A3 = p.a3(y2) * w2
    Q = y1[:, None] ** 2 + sign * y2[None, :] ** p.k
    B = A2[:, None] * A3[None, :]
    total = 0j
    A1 = p.a1(y0) * w0
    for a, t in zip(A1, y0):
        if a != 0:
            total += a * np.sum(np.exp(-1j * lam * t * Q) * B)
    return complex(total)


# ---------------------------------------------------------------------------
# Residual order
# ---------------------------------------------------------------------------

@dataclass
class ResidualFit:
    """Log-log slope of the residual (definite) or of ``|I|`` (indefinite)."""

    J: int
    L: int
    mode: str
    lam: np.ndarray
    direct: np.ndarray
    partial: np.ndarray
    residual: np.ndarray
    saturated: np.ndarray
    slope: float | None
    predicted: float | None
    errors: np.ndarray

    def rows(self) -> list[dict]:
        return [{"lam": float(lv), "direct": complex(d), "partial_sum": complex(ps), "residual": float(r),
                 "mode": self.mode, "direct_error": float(e)}
                for lv, d, ps, r, e in zip(self.lam, self.direct, self.partial, self.residual, self.errors)]


def residual_order(p: ModelIntegral, J: int, L: int, lam_grid: Sequence[float], floor: float = 1e-13,
                   direct: Sequence[DirectValue] | None = None) -> ResidualFit:
    """Fit the decay of ``|direct - partial sum|`` over a geometric grid.

    Points where the residual is below ``floor * |direct|`` are marked
    saturated and left out; the slope is omitted when fewer than three
    points remain.  In indefinite mode the slope of ``|direct|`` is
    reported and no partial sum is formed.
    """
    lam = np.asarray(lam_grid, dtype=float)
    if lam.size < 6:
        raise ValueError("need at least 6 lambda values")
    ratios = lam[1:] / lam[:-1]
    if np.any(lam <= 0) or not np.allclose(ratios, ratios[0], rtol=1e-8):
        raise ValueError("lambda grid must be positive and geometric")
    dv = list(direct) if direct is not None else [p.direct_value(x) for x in lam]
    d = np.array([v.value for v in dv])
    errs = np.array([v.error for v in dv])
    if p.mode == "indefinite":
        part = np.zeros_like(d)
        res = np.abs(d)
        predicted = None
    else:
        part = np.array([p.expansion_value(x, J, L) for x in lam])
        res = np.abs(d - part)
        predicted = -p.next_exponent(J, L)
    sat = res <= floor * np.abs(d)
    ok = ~sat & (res > 0)
    slope = float(np.polyfit(np.log(lam[ok]), np.log(res[ok]), 1)[0]) if ok.sum() >= 3 else None
    return ResidualFit(J, L, p.mode, lam, d, part, res, sat, slope, predicted, errs)


def correction_exponents(p: ModelIntegral, j: int, l: int, count: int, reach: int = 8) -> list[Fraction]:
    """Offsets ``e(j', l') - e(j, l) > 0`` of the next non-zero expansion terms, smallest first."""
    e0 = expansion_exponent(j, l, p.k)
    found = set()
    for jj in range(reach + 1):
        for ll in range(reach * p.k // 2 + 1):
            e = expansion_exponent(jj, ll, p.k)
            if e <= e0:
                continue
            nz = p.taylor_product(jj, ll)[0] != 0 if p.separable else abs(p.expansion_coefficient(jj, ll)) > 0
            if p.domain == "full" and (jj % 2 or ll % 2):
                nz = False
            if nz:
                found.add(e - e0)
    return sorted(found)[:count]


def fit_coefficient(p: ModelIntegral, j: int, lam_grid: Sequence[float], n_corrections: int = 2,
                    l: int = 0) -> tuple[complex, list[float]]:
    """Fit ``C_{j,l}`` from direct values when every slower term vanishes.

    ``I(lam) lam^e`` with ``e = (j+1)/2 + (l+1)/k`` is regressed on ``1``
    and ``lam^(-d)`` for the ``n_corrections`` smallest offsets ``d`` of
    the following non-zero expansion terms.

    Raises
    ------
    PreconditionError
        If an expansion term decaying more slowly than ``(j, l)`` is non-zero.
    """
    k = p.k
    e0 = expansion_exponent(j, l, k)
    for jj in range(j + 1):
        for ll in range(l + k // 2 * (j + 1) + 1):
            if expansion_exponent(jj, ll, k) < e0 and p.taylor_product(jj, ll)[0] != 0:
                raise PreconditionError(f"term ({jj}, {ll}) decays more slowly than ({j}, {l}) and is non-zero")
    lam = np.asarray(lam_grid, dtype=float)
    exps = [float(d) for d in correction_exponents(p, j, l, n_corrections)]
    y = np.array([p.direct_value(x).value for x in lam]) * lam ** float(e0)
    D = np.column_stack([np.ones_like(lam)] + [lam**-e for e in exps])
    coef_re, *_ = np.linalg.lstsq(D, y.real, rcond=None)
    coef_im, *_ = np.linalg.lstsq(D, y.imag, rcond=None)
    return complex(coef_re[0], coef_im[0]), exps


def standard_integral(k: int = 4, mode: str = "definite", a2_poly: Sequence[float] = (1.0,),
                      domain: str = "half") -> ModelIntegral:
    """Bump triple used in the verification suite.

    ``a1`` is centred at 1 with radius 1/2, ``a2`` and ``a3`` are bumps of
    radius 1 centred at 0.2 and 0.3, so that every Taylor coefficient at
    the origin is non-zero; ``a2_poly`` multiplies ``a2``.
    """
    return ModelIntegral(k=k, a1=BumpFactor(1.0, 0.5), a2=TaylorFactor(tuple(a2_poly), 0.2, 1.0),
                         a3=TaylorFactor((1.0,), 0.3, 1.0), mode=mode, domain=domain)


OSCINT_COLUMNS = ("lambda", "direct_re", "direct_im", "partial_sum", "residual", "mode")


def write_oscint_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """Rows from :meth:`ResidualFit.rows`; the partial sum is written as its real part and imaginary part joined by ``j``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OSCINT_COLUMNS + ("direct_error",))
        for r in rows:
            d, ps = r["direct"], r["partial_sum"]
            w.writerow([repr(r["lam"]), repr(d.real), repr(d.imag), f"{ps.real!r}{ps.imag:+.17g}j",
                        f"{r['residual']:.6e}", r["mode"], f"{r['direct_error']:.3e}"])
