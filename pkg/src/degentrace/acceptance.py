"""End-to-end verification suite.

Each ``criterion_N`` function runs one numbered group of checks and
returns a :class:`CriterionResult`.  Checks carry the measured value, the
expected value and the tolerance, so the same objects feed the CLI
summary, the pytest suite and the README table.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from .asympt import (exponent, fit_leading, leading_coefficient_phase_space, leading_coefficient_polar,
                     regular_level_prediction, weyl_scaling_check)
from .dynamics import (derivative_flow_formula, derivative_tensor_fd, generating_residual,
                       linearization_at_equilibrium, shear_matrix)
from .model import PRESETS, preset_model
from .oscint import (BumpFactor, ModelIntegral, TaylorFactor, fit_coefficient, residual_order,
                     standard_integral)
from .spectral import ModelSpectrum, solve_window
from .testfn import TestFunction
from .trace import TERM_TOL, effective_half_width, spectral_side, trace_curve

log = logging.getLogger(__name__)

PASS, FAIL, ERROR = "pass", "fail", "error"


@dataclass
class Check:
    """One numeric comparison.

    ``status`` is ``pass`` when ``measured`` satisfies the comparison
    described by ``expected`` and ``tolerance``.
    """

    check_id: str
    status: str
    measured: float | None
    expected: float | str | None
    tolerance: float | str | None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {"check_id": self.check_id, "status": self.status, "measured": _jsonable(self.measured),
                "expected": _jsonable(self.expected), "tolerance": _jsonable(self.tolerance)}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def check_close(check_id: str, measured: float, expected: float, tol: float, *, relative: bool = True,
                detail: str = "") -> Check:
    """``|measured - expected| <= tol`` (times ``|expected|`` when ``relative``)."""
    dev = abs(measured - expected)
    bound = tol * abs(expected) if relative else tol
    ok = bool(np.isfinite(measured)) and dev <= bound
    return Check(check_id, PASS if ok else FAIL, float(measured), float(expected), tol, detail)


def check_at_most(check_id: str, measured: float, bound: float, detail: str = "") -> Check:
    """``measured <= bound``; the expected value is recorded as ``0`` with tolerance ``bound``."""
    ok = bool(np.isfinite(measured)) and measured <= bound
    return Check(check_id, PASS if ok else FAIL, float(measured), 0.0, bound, detail)


def check_at_least(check_id: str, measured: float, bound: float, detail: str = "") -> Check:
    ok = bool(np.isfinite(measured)) and measured >= bound
    return Check(check_id, PASS if ok else FAIL, float(measured), f">= {float(bound)!r}", 0.0, detail)


@dataclass
class CriterionResult:
    """Checks of one criterion with its wall-clock time and budget (seconds)."""

    number: int
    title: str
    checks: list[Check]
    runtime: float = 0.0
    budget: float = math.inf

    @property
    def runtime_check(self) -> Check:
        return check_at_most(f"{self.number}.runtime", self.runtime, self.budget)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.runtime_check.passed

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.check_id for c in self.checks + [self.runtime_check] if not c.passed]
        tail = f" failed: {', '.join(failed)}" if failed else ""
        return f"[{status}] criterion {self.number:2d} {self.title} ({self.runtime:.1f} s){tail}"


def _timed(number: int, title: str, budget: float, body: Callable[[], list[Check]]) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        checks = body()
    except Exception as exc:  # a crashing stage is reported, not raised
        log.exception("criterion %d failed with an exception", number)
        checks = [Check(f"{number}.exception", ERROR, None, None, None, f"{type(exc).__name__}: {exc}")]
    return CriterionResult(number, title, checks, time.perf_counter() - t0, budget)


def _default_tf() -> TestFunction:
    return TestFunction()


# ---------------------------------------------------------------------------
# 1. quartic leading term on the rescaled path
# ---------------------------------------------------------------------------

def criterion_1(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        m = preset_model("quartic-1d")
        L00 = leading_coefficient_polar(m, tf).lambda00
        h = np.geomspace(1e-2, 1e-8, 13)
        curve = trace_curve(m, tf, 0.0, 0.5, h, "rescaled")
        if curve.failures:
            raise next(iter(curve.failures.values()))
        ratio = curve.gamma[-1] / (h[-1] ** -0.25 * L00)
        fit = fit_leading(curve.h, curve.gamma, exponent(1, 4), 4, 2)
        return [check_close("1.ratio", ratio, 1.0, 0.02, relative=False, detail=f"h = {h[-1]:g}"),
                check_close("1.fit_A", fit.A / L00, 1.0, 0.02, relative=False,
                            detail="A / Lambda00 with corrections 1/4, 1/2")]

    return _timed(1, "quartic leading term", 60.0, body)


# ---------------------------------------------------------------------------
# 2. direct and rescaled spectra agree
# ---------------------------------------------------------------------------

def criterion_2(tf: TestFunction | None = None, npw: float = 10) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        m = preset_model("quartic-1d")
        eps = 0.5
        wtol = TERM_TOL * abs(float(tf.eval_phi(0.0)))
        hs = (1e-2, 1e-3)
        widths = [effective_half_width(tf, h, eps, wtol)[0] for h in hs]
        cache = ModelSpectrum(m, max(w / h ** (4 / 3) for h, w in zip(hs, widths)), npw=npw)
        checks = []
        for h, w in zip(hs, widths):
            direct = solve_window(m, h, w, E_c=0.0, npw=npw)
            resc = cache.window(h, w, 0.0)
            tag = f"h={h:g}"
            if len(direct) != len(resc):
                checks.append(Check(f"2.count[{tag}]", FAIL, len(direct), len(resc), 0))
                continue
            d, r = direct.eigenvalues, resc.eigenvalues
            rel = float(np.max(np.abs(d - r) / np.abs(r)))
            outside = int(np.sum(np.abs(d - r) > direct.est_error + resc.est_error))
            gd = spectral_side(direct, 0.0, h, tf).gamma
            gr = spectral_side(resc, 0.0, h, tf).gamma
            checks += [check_close(f"2.eigenvalues[{tag}]", rel, 0.0, 1e-5, relative=False,
                                   detail=f"{len(d)} eigenvalues, max relative difference"),
                       check_at_most(f"2.error_bars[{tag}]", outside, 0,
                                     detail="eigenvalues whose difference exceeds the summed error bars"),
                       check_close(f"2.gamma[{tag}]", gd, gr, 1e-5)]
        return checks

    return _timed(2, "direct and rescaled spectra agree", 120.0, body)


# ---------------------------------------------------------------------------
# 3. only the germ matters
# ---------------------------------------------------------------------------

def criterion_3(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        L00 = leading_coefficient_polar(preset_model("quartic-1d"), tf).lambda00
        m = preset_model("perturbed-quartic")
        h = np.geomspace(1e-3, 1e-5, 9)
        curve = trace_curve(m, tf, 0.0, 0.5, h, "direct")
        if curve.failures:
            raise next(iter(curve.failures.values()))
        fit = fit_leading(curve.h, curve.gamma, exponent(1, 4), 4, 2)
        return [check_close("3.fit_A", fit.A, L00, 0.05, detail="perturbed-quartic A against the quartic coefficient")]

    return _timed(3, "germ-only dependence", 300.0, body)


# ---------------------------------------------------------------------------
# 4. Witten example
# ---------------------------------------------------------------------------

def phi_moment(tf: TestFunction, a: float) -> float:
    """``int_0^inf phi(s) s^(a-1) ds`` by QUADPACK with the algebraic weight on the first piece."""
    s_max = tf.tail_cutoff(1e-13 * abs(float(tf.eval_phi(0.0))))
    f = lambda s: float(tf.eval_phi(s))  # noqa: E731
    edges = np.arange(0.0, s_max + 4.0, 4.0)
    total = quad(f, 0.0, edges[1], weight="alg", wvar=(a - 1.0, 0.0), epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    floor = 1e-14 * abs(total)
    for lo, hi in zip(edges[1:-1], edges[2:]):
        total += quad(lambda s: f(s) * s ** (a - 1.0), lo, hi, epsabs=floor, epsrel=1e-12, limit=200)[0]
    return total


def witten_closed_form(tf: TestFunction) -> float:
    """``(4 / 2 pi) 2^(-2/3) int_{R+^2} phi(u^2 + v^6)``, the inner integral reduced to a Beta factor."""
    quadrant = beta_fn(0.5, 1.0 / 6.0) / 12.0 * phi_moment(tf, 2.0 / 3.0)
    return 4.0 / (2.0 * math.pi) * 2.0 ** (-2.0 / 3.0) * quadrant


def criterion_4(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        witten = preset_model("witten-1d")
        pure = witten.with_terms(W=None, name="witten-principal")
        closed = witten_closed_form(tf)
        h = np.geomspace(1e-2, 1e-8, 13)
        curve = trace_curve(pure, tf, 0.0, 0.5, h, "rescaled")
        if curve.failures:
            raise next(iter(curve.failures.values()))
        free = fit_leading(curve.h, curve.gamma, exponent(1, 6), 6, 2, free_exponent=True)
        fixed = fit_leading(curve.h, curve.gamma, exponent(1, 6), 6, 2)
        hd = np.geomspace(1e-3, 1e-5, 9)
        with_w = trace_curve(witten, tf, 0.0, 0.5, hd, "direct")
        without_w = trace_curve(pure, tf, 0.0, 0.5, hd, "direct")
        for c in (with_w, without_w):
            if c.failures:
                raise next(iter(c.failures.values()))
        a_w = fit_leading(with_w.h, with_w.gamma, exponent(1, 6), 6, 2).A
        a_0 = fit_leading(without_w.h, without_w.gamma, exponent(1, 6), 6, 2).A
        return [check_close("4.exponent", free.slope, -1.0 / 3.0, 0.02, relative=False,
                            detail="free log-log slope of the rescaled curve"),
                check_close("4.closed_form", fixed.A, closed, 0.03, detail="fitted A against the closed form"),
                check_close("4.subprincipal", a_w, a_0, 0.03, detail="A with and without -h W, direct solves")]

    return _timed(4, "Witten example", 300.0, body)


# ---------------------------------------------------------------------------
# 5. radial quartic in two dimensions
# ---------------------------------------------------------------------------

def criterion_5(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        m = preset_model("radial-quartic-2d")
        L00 = leading_coefficient_polar(m, tf).lambda00
        h = 1e-6
        curve = trace_curve(m, tf, 0.0, 0.5, [h], "rescaled")
        if curve.failures:
            raise next(iter(curve.failures.values()))
        ratio = curve.gamma[0] / (h ** -0.5 * L00)
        return [check_close("5.ratio", ratio, 1.0, 0.05, relative=False,
                            detail=f"{curve.samples[0].n_terms} terms")]

    return _timed(5, "radial quartic in two dimensions", 600.0, body)


# ---------------------------------------------------------------------------
# 6. two routes to the leading coefficient
# ---------------------------------------------------------------------------

def criterion_6(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        checks = []
        for name in sorted(PRESETS):
            m = preset_model(name)
            pol = leading_coefficient_polar(m, tf).lambda00
            ph = leading_coefficient_phase_space(m, tf).lambda00
            checks.append(check_close(f"6.coefficient[{name}]", pol, ph, 1e-6))
        return checks

    return _timed(6, "coefficient cross-check", 30.0, body)


# ---------------------------------------------------------------------------
# 7. scaling identity of the phase-space integral
# ---------------------------------------------------------------------------

def criterion_7(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        checks = []
        for name in ("quartic-1d", "radial-quartic-2d"):
            m = preset_model(name)
            for h in (1.0, 0.1, 0.01):
                lhs, rhs, _ = weyl_scaling_check(m, tf, h)
                checks.append(check_close(f"7.scaling[{name},h={h:g}]", lhs, rhs, 1e-8))
        return checks

    return _timed(7, "scaling identity", 30.0, body)


# ---------------------------------------------------------------------------
# 8. regular level
# ---------------------------------------------------------------------------

def criterion_8(tf: TestFunction | None = None) -> CriterionResult:
    tf = tf or _default_tf()

    def body():
        m = preset_model("regular-level")
        h, E = 1e-3, 1.0
        pred = regular_level_prediction(m, E, tf, h)
        curve = trace_curve(m, tf, E, 0.5, [h], "direct")
        if curve.failures:
            raise next(iter(curve.failures.values()))
        g = curve.gamma[0]
        below = pred.period > tf.T
        return [Check("8.band_below_period", PASS if below else FAIL, pred.period, f"> {float(tf.T)!r}", 0.0,
                      "minimal period against the band radius"),
                check_close("8.regular_level", g, pred.stated_value, 0.03,
                            detail="phi_hat(0) LVol as stated"),
                check_close("8.regular_level_normalized", g, pred.value, 0.03,
                            detail="phi_hat(0) LVol / (2 pi), the transform convention in use")]

    return _timed(8, "regular-level sanity", 60.0, body)


# ---------------------------------------------------------------------------
# 9. model oscillatory integral
# ---------------------------------------------------------------------------

OSC_LAMBDA = tuple(np.geomspace(1e2, 1e5, 10))
OSC_ORDERS = ((0, 0), (1, 0), (0, 1))


def criterion_9(lam_grid: Sequence[float] = OSC_LAMBDA) -> CriterionResult:
    def body():
        checks = []
        lam = np.asarray(lam_grid, dtype=float)
        for k in (4, 6):
            p = standard_integral(k)
            dv = [p.direct_value(x) for x in lam]
            for J, L in OSC_ORDERS:
                r = residual_order(p, J, L, lam, direct=dv)
                measured = r.slope if r.slope is not None else math.nan
                checks.append(check_close(f"9a.slope[k={k},J={J},L={L}]", measured, r.predicted, 0.1,
                                          relative=False))
        fit_lam = np.geomspace(1e2, 1e4, 8)
        for k in (4, 6):
            for j, poly in ((1, (0.0, 1.0)), (2, (0.0, 0.0, 1.0))):
                p = ModelIntegral(k=k, a1=BumpFactor(1.0, 0.5), a2=TaylorFactor(poly, 0.0, 1.0),
                                  a3=TaylorFactor((1.0,), 0.0, 1.0))
                c, _ = fit_coefficient(p, j, fit_lam, 2)
                C = p.expansion_coefficient(j, 0)
                checks.append(check_close(f"9b.coefficient[k={k},j={j}]", abs(c - C) / abs(C), 0.0, 0.01,
                                          relative=False, detail="relative error of the fitted coefficient"))
        p = standard_integral(4, "indefinite")
        r = residual_order(p, 0, 0, lam)
        checks.append(check_at_least("9c.indefinite_slope", r.slope, -0.75 + 0.2,
                                     detail="log-log slope of |I| in indefinite mode"))
        return checks

    return _timed(9, "model oscillatory integral", 120.0, body)


# ---------------------------------------------------------------------------
# 10. dynamics
# ---------------------------------------------------------------------------

JET_DIRECTIONS = ((1.0, 0.0), (0.0, 1.0), (0.6, -0.8))
JET_TIMES = (0.5, 1.0)


def criterion_10() -> CriterionResult:
    def body():
        checks = []
        for name in ("quartic-1d", "sextic-1d"):
            m = preset_model(name)
            for t in (0.1, 1.0, 3.0):
                J = linearization_at_equilibrium(m, t).jacobian
                dev = float(np.max(np.abs(J - shear_matrix(m.n, t))))
                checks.append(check_at_most(f"10.jacobian[{name},t={t:g}]", dev, 1e-8))
            k = m.k
            worst, worst_floor = 0.0, 0.0
            for t in JET_TIMES:
                for d in JET_DIRECTIONS:
                    formula = derivative_flow_formula(m, t, d)
                    fd = derivative_tensor_fd(m, t, d, k - 1)
                    worst = max(worst, float(np.max(np.abs(fd.value - formula))) / fd.error)
                    for order in range(2, k - 1):
                        mid = derivative_tensor_fd(m, t, d, order)
                        worst_floor = max(worst_floor, float(np.max(np.abs(mid.value))) / mid.error)
            checks.append(check_at_most(f"10.highest_derivative[{name}]", worst, 1.0,
                                        detail="largest |fd - formula| in units of the fd error"))
            checks.append(check_at_most(f"10.intermediate_orders[{name}]", worst_floor, 1.0,
                                        detail="largest |fd value| in units of its error, orders 2..k-2"))
            g = generating_residual(m, 1.0, check=False)
            checks.append(check_at_least(f"10.generating_order[{name}]", g.order, k - 0.2))
        return checks

    return _timed(10, "dynamics", 120.0, body)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_acceptance(numbers: Sequence[int] | None = None,
                   progress: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in order."""
    out = []
    for n in numbers or sorted(CRITERIA):
        res = CRITERIA[n]()
        if progress is not None:
            progress(res)
        out.append(res)
    return out
