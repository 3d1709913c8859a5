"""Band-limited test functions.

A test function is specified through its Fourier transform ``phi_hat``, a
smooth bump supported in ``[-T, T]``.  The convention is

    phi(s) = (2 pi)^-1 * integral phi_hat(t) exp(i s t) dt,

so ``phi_hat(0)`` equals the integral of ``phi``.  The inverse transform is
computed with the substitution ``t = T tanh(u)`` followed by the
trapezoidal rule in ``u``.  For the bump profile the transformed integrand
``exp(-cosh(u)^2) / cosh(u)^2`` is analytic in a strip and decays doubly
exponentially, so the rule converges geometrically in the node count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import AccuracyError, DecayError

PROFILES = ("bump", "bump-t2", "autocorrelation")

_U_MAX = 3.2          # exp(-cosh(3.2)^2) ~ 1e-66
_CHUNK = 4096
HARD_BOUND = 1e6
_NOISE = 1e-15        # relative evaluation noise floor of phi


@lru_cache(maxsize=64)
def _tanh_rule(n_half: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes u_j >= 0 and symmetric trapezoid weights on [-U, U]."""
    d = _U_MAX / n_half
    u = np.arange(n_half + 1) * d
    w = np.full(n_half + 1, 2 * d)
    w[0] = d
    return u, w


def nodes_for(smax: float, T: float) -> int:
    """Half-rule size resolving ``cos(s t)`` for ``|s| <= smax``."""
    d = 2 * np.pi / (1.3 * T * smax + 80.0)
    return max(16, int(math.ceil(_U_MAX / d)))


def _bump_u(u: np.ndarray) -> np.ndarray:
    c = np.cosh(u)
    return np.exp(-c * c)


@dataclass(frozen=True)
class TestFunction:
    """Band-limited Schwartz function defined through its Fourier transform.

    Parameters
    ----------
    T : float
        Band radius; ``phi_hat`` vanishes for ``|t| >= T``.
    profile : {"bump", "bump-t2", "autocorrelation"}
        ``bump`` is ``c exp(-1/(1-(t/T)^2))``.  ``bump-t2`` multiplies the
        bump by ``(t/T)^2`` so that ``phi_hat(0) = 0``.  ``autocorrelation``
        is the self-convolution of a bump of radius ``T/2``; its ``phi`` is
        ``2 pi c phi_b(s)^2 >= 0``.
    c : float
        Normalization.
    quad_order : int, optional
        Fixed half-rule size.  By default the size adapts to ``|s|``.
    """

    __test__ = False  # keep pytest from collecting this class

    T: float = 1.0
    profile: str = "bump"
    c: float = 1.0
    quad_order: int | None = None
    _scan: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; choose from {PROFILES}")
        if not self.T > 0:
            raise ValueError("band radius T must be positive")
        if self.quad_order is not None and self.quad_order < 8:
            raise ValueError("quad_order must be at least 8")

    # -- Fourier side --------------------------------------------------
    def eval_hat(self, t) -> np.ndarray | float:
        """Evaluate ``phi_hat``; exactly zero for ``|t| >= T``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        inside = np.abs(t) < self.T
        tau = t[inside] / self.T
        if self.profile == "autocorrelation":
            out[inside] = self.c * _self_convolution(t[inside], self.T / 2)
        else:
            val = np.exp(-1.0 / (1.0 - tau * tau))
            if self.profile == "bump-t2":
                val = val * tau * tau
            out[inside] = self.c * val
        return float(out) if out.ndim == 0 else out

    @property
    def hat0(self) -> float:
        """``phi_hat(0)``, which equals the integral of ``phi``."""
        return float(self.eval_hat(0.0))

    # -- physical side -------------------------------------------------
    def eval_phi(self, s, *, check: bool = False) -> np.ndarray | float:
        """Evaluate ``phi(s)``.

        Parameters
        ----------
        s : array_like
        check : bool
            Also evaluate with the node count doubled and the odd (sine)
            part, and raise :class:`AccuracyError` when the values differ by
            more than ``1e-10`` or the imaginary part is not negligible.
        """
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        if self.profile == "autocorrelation":
            half = TestFunction(self.T / 2, "bump", 1.0, self.quad_order)
            val = 2 * np.pi * self.c * half._eval_real(flat) ** 2
            if check:
                alt = 2 * np.pi * self.c * half._eval_real(flat, factor=2) ** 2
                self._compare(val, alt, np.zeros_like(val))
        else:
            val = self._eval_real(flat)
            if check:
                alt = self._eval_real(flat, factor=2)
                self._compare(val, alt, self._eval_imag(flat))
        val = val.reshape(s.shape)
        return float(val) if val.ndim == 0 else val

    __call__ = eval_phi

    def eval_dphi(self, s) -> np.ndarray | float:
        """Derivative ``phi'(s)``, used to propagate eigenvalue errors."""
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        if self.profile == "autocorrelation":
            half = TestFunction(self.T / 2, "bump", 1.0, self.quad_order)
            val = 4 * np.pi * self.c * half._eval_real(flat) * half._eval_real(flat, deriv=True)
        else:
            val = self._eval_real(flat, deriv=True)
        val = val.reshape(s.shape)
        return float(val) if val.ndim == 0 else val

    def _weights(self, n_half: int) -> tuple[np.ndarray, np.ndarray]:
        u, w = _tanh_rule(n_half)
        prof = _bump_u(u)
        if self.profile == "bump-t2":
            prof = prof * np.tanh(u) ** 2
        ch = np.cosh(u)
        g = self.c * self.T * prof / (ch * ch) * w / (2 * np.pi)
        return self.T * np.tanh(u), g

    def _eval_real(self, s: np.ndarray, factor: int = 1, deriv: bool = False) -> np.ndarray:
        out = np.empty(s.shape)
        if s.size == 0:
            return out
        order = np.argsort(np.abs(s))
        for start in range(0, s.size, _CHUNK):
            idx = order[start:start + _CHUNK]
            sc = s[idx]
            n_half = self.quad_order or nodes_for(float(np.max(np.abs(sc))), self.T)
            t, g = self._weights(n_half * factor)
            if deriv:
                out[idx] = -np.sin(np.outer(sc, t)) @ (g * t)
            else:
                out[idx] = np.cos(np.outer(sc, t)) @ g
        return out

    def _eval_imag(self, s: np.ndarray) -> np.ndarray:
        # the rule is symmetric, so evaluate the sine part on both halves explicitly
        n_half = self.quad_order or nodes_for(float(np.max(np.abs(s), initial=0.0)), self.T)
        t, g = self._weights(n_half)
        g = g.copy()
        g[0] *= 2
        tt = np.concatenate([-t[:0:-1], t])
        gg = np.concatenate([g[:0:-1], g]) / 2
        return np.sin(np.outer(s, tt)) @ gg

    def _compare(self, val, alt, imag):
        scale = max(float(np.max(np.abs(val), initial=0.0)), abs(self.c) * 1e-3)
        diff = float(np.max(np.abs(val - alt), initial=0.0))
        if diff > 1e-10:
            raise AccuracyError(f"phi changed by {diff:.2e} when the node count doubled")
        im = float(np.max(np.abs(imag), initial=0.0))
        if im > 1e-12 * scale:
            raise AccuracyError(f"imaginary part {im:.2e} is not negligible")

    # -- decay control -------------------------------------------------
    def _sup(self) -> float:
        return float(np.max(np.abs(self.eval_phi(np.linspace(0, 8 / self.T, 801)))))

    def _ensure_scan(self, tol: float) -> None:
        """Sample ``|phi|`` on a uniform grid far enough to resolve ``tol``."""
        scan = self._scan
        if scan and scan["resolved"] <= tol:
            return
        step = 0.1 / self.T
        s_hi = scan.get("s_hi", 64.0 / self.T)
        vals = scan.get("vals", np.empty(0))
        while True:
            grid = np.arange(vals.size, int(s_hi / step) + 1) * step
            vals = np.concatenate([vals, np.abs(self.eval_phi(grid))])
            tail = vals[int(vals.size / 2):]
            if tail.max() <= tol:
                break
            if s_hi >= HARD_BOUND:
                raise DecayError(f"|phi| above {tol:.2e} up to the hard bound {HARD_BOUND:g}")
            s_hi = min(2 * s_hi, HARD_BOUND)
        env = np.maximum.accumulate(vals[::-1])[::-1]
        scan.update(step=step, s_hi=s_hi, vals=vals, env=env, resolved=float(tail.max()))

    def envelope(self, s) -> np.ndarray | float:
        """Sampled ``sup_{|sigma| >= |s|} |phi(sigma)|``."""
        self._ensure_scan(self._scan.get("resolved", 1e-13 * self._sup()))
        env = self._scan["env"]
        idx = np.minimum(np.ceil(np.abs(np.asarray(s, float)) / self._scan["step"]).astype(int), env.size - 1)
        out = env[idx]
        beyond = np.abs(np.asarray(s, float)) > self._scan["s_hi"]
        out = np.where(beyond, self._scan["resolved"], out)
        return float(out) if out.ndim == 0 else out

    def tail_cutoff(self, tol: float) -> float:
        """Smallest node ``s_max`` of a fixed geometric grid with sampled ``|phi| <= tol`` beyond it.

        The grid is ``{0} U {0.01/T * 1.02^m}``, so the result is monotone in
        ``tol``.

        Raises
        ------
        DecayError
            If ``tol`` is below the evaluation noise floor or no cutoff is
            found below the hard bound ``1e6``.
        """
        if not tol > 0:
            raise ValueError("tol must be positive")
        sup = self._sup()
        if tol >= sup:
            return 0.0
        if tol < _NOISE * max(sup, abs(self.c)):
            raise DecayError(f"tolerance {tol:.2e} is below the evaluation noise floor")
        self._ensure_scan(tol)
        env, step = self._scan["env"], self._scan["step"]
        i = int(np.argmax(env <= tol))
        s_first = i * step
        m = math.ceil(math.log(max(s_first, 0.01 / self.T) / (0.01 / self.T)) / math.log(1.02) - 1e-9)
        node = 0.01 / self.T * 1.02**m
        while self.envelope(node) > tol:
            m += 1
            node = 0.01 / self.T * 1.02**m
        if node > HARD_BOUND:
            raise DecayError("cutoff beyond the hard bound")
        return float(node)

    # -- tabulation ----------------------------------------------------
    def table(self, s_max: float, atol: float = 1e-13) -> "PhiTable":
        """Quintic spline of ``phi`` on ``[0, s_max]`` with verified error."""
        return _table(self, float(s_max), float(atol))


@dataclass(frozen=True)
class PhiTable:
    """Even spline interpolant of ``phi``; zero beyond ``s_max``."""

    s_max: float
    spline: object
    max_error: float

    def __call__(self, s) -> np.ndarray:
        a = np.abs(np.asarray(s, dtype=float))
        out = self.spline(np.minimum(a, self.s_max))
        return np.where(a <= self.s_max, out, 0.0)


@lru_cache(maxsize=32)
def _table(tf: TestFunction, s_max: float, atol: float) -> PhiTable:
    if s_max <= 0:
        # phi lies below the tolerance everywhere
        return PhiTable(0.0, np.polynomial.Polynomial([0.0]), float(abs(tf.eval_phi(0.0))))
    step = 0.05 / tf.T
    for _ in range(6):
        x = np.arange(0, s_max + step, step)
        spl = make_interp_spline(x, tf.eval_phi(x), k=5)
        mid = x[:-1] + step / 2
        err = float(np.max(np.abs(spl(mid) - tf.eval_phi(mid))))
        if err <= atol:
            return PhiTable(s_max, spl, err)
        step /= 2
    raise AccuracyError(f"spline table error {err:.2e} exceeds {atol:.2e}")


def _self_convolution(t: np.ndarray, r: float, n: int = 96) -> np.ndarray:
    """``(b * b)(t)`` for the unit-height bump ``b`` of radius ``r``."""
    out = np.zeros(t.shape)
    for i, ti in enumerate(np.ravel(t)):
        lo, hi = max(-r, ti - r), min(r, ti + r)
        if hi <= lo:
            continue
        # tanh substitution on [lo, hi] handles the flat endpoints of both factors
        u, w = _tanh_rule(n)
        uu = np.concatenate([-u[:0:-1], u])
        ww = np.concatenate([w[:0:-1], w]) / 2
        ww[n] *= 2
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        tau = mid + half * np.tanh(uu)
        jac = half / np.cosh(uu) ** 2
        f = _bump_scalar(tau / r) * _bump_scalar((ti - tau) / r)
        out.flat[i] = np.sum(ww * jac * f)
    return out


def _bump_scalar(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


def bump(x) -> np.ndarray:
    """Unit bump ``exp(-1/(1-x^2))`` on ``(-1, 1)``, zero elsewhere."""
    return _bump_scalar(x)


def bump_transform(omega, radius: float = 1.0, centre: float = 0.0) -> np.ndarray:
    """Forward transform ``integral exp(-i w t) b((t - centre)/radius) dt``.

    Equals ``exp(-i w centre) * 2 pi * radius * phi_1(radius * w)`` where
    ``phi_1`` is the default test function with ``T = 1``.
    """
    omega = np.asarray(omega, dtype=float)
    base = 2 * np.pi * radius * np.asarray(_UNIT.eval_phi(radius * omega))
    if centre == 0.0:
        return base.astype(complex)
    return np.exp(-1j * omega * centre) * base


_UNIT = TestFunction()
