"""Hamiltonian flow of ``p = |xi|^2 + V(x)`` near the equilibrium ``z0 = (x0, 0)``.

Phase points are stored as flat vectors ``(x_1..x_n, xi_1..xi_n)``.  The
flow is ``dx/dt = 2 xi``, ``dxi/dt = -grad V(x)`` with the h-independent
part of the potential.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from .errors import (AccuracyError, NonCompactOrbitError, PreconditionError, ScaleError, StiffnessError,
                     StructureViolationError)
from .model import PotentialModel

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    """Point ``(x, xi)`` of phase space."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if x.shape != xi.shape or x.ndim != 1:
            raise ValueError("x and xi must be vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("phase point components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self) -> int:
        return self.x.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_vector(cls, z) -> "PhasePoint":
        z = np.asarray(z, dtype=float)
        n = z.size // 2
        return cls(z[:n], z[n:])


def _as_vector(z, n: int) -> np.ndarray:
    v = z.as_vector() if isinstance(z, PhasePoint) else np.asarray(z)
    if v.shape != (2 * n,):
        raise ValueError(f"expected a phase point with {2 * n} components, got shape {v.shape}")
    return v


def equilibrium(model: PotentialModel) -> np.ndarray:
    return np.concatenate([np.asarray(model.x0, dtype=float), np.zeros(model.n)])


def hamiltonian(model: PotentialModel, z) -> float:
    """``p(z) = |xi|^2 + V(x)``."""
    v = _as_vector(z, model.n)
    n = model.n
    return float(np.dot(v[n:], v[n:]) + model(v[:n].reshape(1, n))[0])


def _flow_batch(model: PotentialModel, Z: np.ndarray, t: float, rtol: float, atol: float) -> np.ndarray:
    """Flow every row of ``Z`` (shape (m, 2n)) for time ``t`` in one ODE solve."""
    Z = np.asarray(Z, dtype=float)
    if t == 0:
        return Z.copy()
    m, two_n = Z.shape
    n = two_n // 2

    def rhs(_, y):
        Y = y.reshape(m, two_n)
        out = np.empty_like(Y)
        out[:, :n] = 2.0 * Y[:, n:]
        out[:, n:] = -model.gradient(Y[:, :n])
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, t), Z.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StiffnessError(f"flow integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    return sol.y[:, -1].reshape(m, two_n)


def integrate_flow(model: PotentialModel, z, t: float, tol: float = DEFAULT_TOL) -> PhasePoint:
    """Solve ``dx/dt = 2 xi, dxi/dt = -grad V`` with an adaptive 8th-order Runge-Kutta pair.

    Parameters
    ----------
    model : PotentialModel
    z : PhasePoint or array_like of length 2n
    t : float
        Flow time, either sign.
    tol : float
        Energy-drift budget ``|p(Phi_t z) - p(z)| <= tol (1 + |p(z)|)``.
        The integrator runs at a hundredth of this.

    Raises
    ------
    StiffnessError
        If the step size collapses.
    AccuracyError
        If the energy drift exceeds the budget.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _as_vector(z, model.n).astype(float)
    out = _flow_batch(model, v[None, :], t, rtol=max(tol * 1e-2, 3e-14), atol=tol * 1e-2)[0]
    p0, p1 = hamiltonian(model, v), hamiltonian(model, out)
    if abs(p1 - p0) > tol * (1 + abs(p0)):
        raise AccuracyError(f"energy drift {abs(p1 - p0):.3e} exceeds {tol * (1 + abs(p0)):.3e}")
    return PhasePoint.from_vector(out)


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------

@dataclass
class FlowJet:
    """Derivative data of ``Phi_t`` at the equilibrium.

    Attributes
    ----------
    t : float
    jacobian : ndarray, shape (2n, 2n)
    highdiff : callable
        ``direction -> d^(k-1) Phi_t(z0)(direction^(k-1))``.
    provenance : {"analytic", "finite-difference"}
    kernel : ndarray
        Orthonormal basis (columns) of ``Ker(dPhi_t(z0) - Id)``.
    deviation : float
        Largest entry of ``jacobian - [[I, 2tI], [0, I]]``.
    symplectic_defect : float
        Largest entry of ``J^T Omega J - Omega``.
    """

    t: float
    jacobian: np.ndarray
    highdiff: Callable[[np.ndarray], np.ndarray]
    provenance: str
    kernel: np.ndarray
    deviation: float = 0.0
    symplectic_defect: float = 0.0
    richardson_change: float = 0.0


def shear_matrix(n: int, t: float) -> np.ndarray:
    """``[[I, 2tI], [0, I]]``."""
    J = np.eye(2 * n)
    J[:n, n:] = 2.0 * t * np.eye(n)
    return J


def symplectic_form(n: int) -> np.ndarray:
    Om = np.zeros((2 * n, 2 * n))
    Om[:n, n:] = np.eye(n)
    Om[n:, :n] = -np.eye(n)
    return Om


def fixed_space(J: np.ndarray, rtol: float = 1e-6) -> np.ndarray:
    """Orthonormal basis of ``Ker(J - I)`` from the SVD."""
    _, s, vt = np.linalg.svd(J - np.eye(J.shape[0]))
    scale = max(1.0, float(np.max(np.abs(J))))
    return vt[s <= rtol * scale].T


def _jacobian_fd(model: PotentialModel, t: float, delta: float, rtol: float, atol: float) -> np.ndarray:
    """Fourth-order central differences: exact for the cubic part of the flow."""
    n2 = 2 * model.n
    z0 = equilibrium(model)
    offs = np.array([-2.0, -1.0, 1.0, 2.0])
    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    Z = np.array([z0 + o * delta * e for e in np.eye(n2) for o in offs])
    F = _flow_batch(model, Z, t, rtol, atol).reshape(n2, 4, n2)
    return np.einsum("o,jom->mj", w, F) / delta


def linearization_at_equilibrium(model: PotentialModel, t: float, fd_scale: float = 1e-5, *,
                                 atol: float = 1e-8, check: bool = True) -> FlowJet:
    """Numerical Jacobian of ``Phi_t`` at ``z0``, compared with the free shear.

    The Jacobian is formed at steps ``fd_scale`` and ``fd_scale / 2``;
    their difference is the Richardson indicator of nonlinear pollution.

    Parameters
    ----------
    model : PotentialModel
    t : float
    fd_scale : float
        Finite-difference step in phase space.
    atol : float
        Tolerance for the comparison with ``[[I, 2tI], [0, I]]``.
    check : bool
        Raise when the comparison or the kernel structure fails.

    Raises
    ------
    ScaleError
        If the two steps disagree by more than ``atol / 10``.
    StructureViolationError
        If ``check`` and the Jacobian or its fixed space do not have the
        free-shear form.
    """
    n = model.n
    rtol, itol = 3e-14, 1e-16
    J1 = _jacobian_fd(model, t, fd_scale, rtol, itol)
    J2 = _jacobian_fd(model, t, fd_scale / 2, rtol, itol)
    change = float(np.max(np.abs(J1 - J2)))
    if change > atol / 10:
        raise ScaleError(f"Jacobian changes by {change:.3e} when the step is halved; reduce fd_scale")
    J = J2
    dev = float(np.max(np.abs(J - shear_matrix(n, t))))
    Om = symplectic_form(n)
    sdef = float(np.max(np.abs(J.T @ Om @ J - Om)))
    ker = fixed_space(J)
    jet = FlowJet(t, J, lambda d: derivative_flow_formula(model, t, d), "finite-difference", ker, dev, sdef, change)
    if check:
        if dev > atol:
            raise StructureViolationError(f"dPhi_t(z0) deviates from the free shear by {dev:.3e}")
        expected = 2 * n if t == 0 else n
        if ker.shape[1] != expected or (t != 0 and np.max(np.abs(ker[n:, :])) > 1e-6):
            raise StructureViolationError(f"fixed space of dPhi_t(z0) has unexpected form (dimension {ker.shape[1]})")
    return jet


def analytic_jet(model: PotentialModel, t: float) -> FlowJet:
    """Closed-form jet: the free shear and the ``(k-1)``-th derivative formula."""
    J = shear_matrix(model.n, t)
    return FlowJet(t, J, lambda d: derivative_flow_formula(model, t, d), "analytic", fixed_space(J))


# ---------------------------------------------------------------------------
# Higher derivatives
# ---------------------------------------------------------------------------

def derivative_flow_formula(model: PotentialModel, t: float, direction) -> np.ndarray:
    """``d^(k-1) Phi_t(z0)`` applied ``k-1`` times to ``direction = (x, xi)``.

    Evaluates ``[[I, 2tI], [0, I]] . int_0^t (2s G(s), -G(s)) ds`` with
    ``G(s) = (k-1)! grad V_k(x + 2 s xi)`` by Gauss-Legendre quadrature,
    exact for the polynomial integrand.  Complex directions are accepted.
    """
    n, k = model.n, model.k
    v = _as_vector(direction, n)
    if t == 0:
        return np.zeros(2 * n, dtype=v.dtype)
    x, xi = v[:n], v[n:]
    nodes, weights = leggauss(k // 2 + 2)
    s = 0.5 * t * (nodes + 1.0)
    w = 0.5 * t * weights
    G = math.factorial(k - 1) * model.V_k.gradient(x[None, :] + 2.0 * s[:, None] * xi[None, :])
    a = np.sum((w * 2.0 * s)[:, None] * G, axis=0)
    b = -np.sum(w[:, None] * G, axis=0)
    return np.concatenate([a + 2.0 * t * b, b])


def _central_weights(order: int, offsets: np.ndarray) -> np.ndarray:
    """Stencil weights for the ``order``-th derivative from the Vandermonde system."""
    m = offsets.size
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


@dataclass
class FDResult:
    """Finite-difference directional derivative with its error estimate."""

    value: np.ndarray
    error: float
    step: float
    noise: float
    usable: bool


def derivative_tensor_fd(model: PotentialModel, t: float, direction, order: int, *,
                         steps: Sequence[float] | None = None, rtol: float = 3e-14) -> FDResult:
    """``order``-th derivative of ``eps -> Phi_t(z0 + eps d)`` at ``eps = 0``.

    A 9-point central stencil is applied at a ladder of steps; the step
    whose value changes least under halving is kept and that change is
    the error estimate.  The integration noise floor is
    ``rtol * scale * sum|w| / step^order``.

    Returns
    -------
    FDResult
        ``usable`` is False when the noise floor exceeds the estimate's
        scale, i.e. the derivative cannot be resolved.
    """
    n = model.n
    d = _as_vector(direction, n).astype(float)
    z0 = equilibrium(model)
    offs = np.arange(-4.0, 5.0)
    w = _central_weights(order, offs)
    ladder = list(steps) if steps is not None else list(np.geomspace(0.4, 0.4 * 2.0**-12, 13))
    all_steps = sorted(set(ladder + [s / 2 for s in ladder]), reverse=True)
    Z = np.array([z0 + o * s * d for s in all_steps for o in offs])
    atol = rtol * 1e-3
    F = _flow_batch(model, Z, t, rtol, atol).reshape(len(all_steps), offs.size, 2 * n)
    vals = {s: np.einsum("o,om->m", w, F[i]) / s**order for i, s in enumerate(all_steps)}
    best = None
    for s in ladder:
        change = float(np.max(np.abs(vals[s / 2] - vals[s])))
        zscale = float(np.max(np.abs(F[all_steps.index(s / 2)]))) + 1.0
        noise = rtol * zscale * float(np.sum(np.abs(w))) / (s / 2) ** order
        err = max(change, noise)
        if best is None or err < best[1]:
            best = (s / 2, err, noise)
    step, err, noise = best
    val = vals[step]
    usable = noise < max(float(np.max(np.abs(val))), err)
    return FDResult(val, err, step, noise, usable)


# ---------------------------------------------------------------------------
# Generating function
# ---------------------------------------------------------------------------

def _sigma(z, w, n: int):
    return np.dot(z[:n], w[n:]) - np.dot(z[n:], w[:n])


def generating_kernel(model: PotentialModel, t: float, x, xi):
    """``S_k(t, x, xi) = sigma((x, xi), d^(k-1) Phi_t(0)((x - 2t xi, xi)^(k-1))) / k!``.

    ``x`` is measured from ``x0``.  Complex arguments are accepted.
    """
    if not model.germ_terms:
        return 0.0
    n, k = model.n, model.k
    x = np.atleast_1d(x)
    xi = np.atleast_1d(xi)
    z = np.concatenate([x, xi])
    D = derivative_flow_formula(model, t, np.concatenate([x - 2 * t * xi, xi]))
    return _sigma(z, D, n) / math.factorial(k)


def generating_function(model: PotentialModel, t: float, x, xi):
    """Truncated generating function ``<x, xi> - t |xi|^2 + S_k``."""
    x = np.atleast_1d(x)
    xi = np.atleast_1d(xi)
    return np.dot(x, xi) - t * np.dot(xi, xi) + generating_kernel(model, t, x, xi)


def _grad_cs(f: Callable, v: np.ndarray, step: float = 1e-30) -> np.ndarray:
    """Complex-step gradient of a real-analytic function."""
    out = np.empty(v.size)
    for i in range(v.size):
        e = np.zeros(v.size, dtype=complex)
        e[i] = 1j * step
        out[i] = np.imag(f(v.astype(complex) + e)) / step
    return out


@dataclass
class GeneratingResult:
    """Defect sweep of the truncated generating function."""

    t: float
    eps: np.ndarray
    defects: np.ndarray
    order: float
    xi0_identity_error: float
    xi1_identity_error: float
    samples: np.ndarray = field(repr=False, default=None)


def generating_residual(model: PotentialModel, t: float, eps_list: Sequence[float] | None = None, *,
                        n_samples: int = 4, seed: int = 0, check: bool = True) -> GeneratingResult:
    """Decay order of the defect of the truncated generating function.

    For unit samples ``(x, xi)`` and each ``eps`` the defect is
    ``|Phi_t(d_xi S(eps x, eps xi), eps xi) - (eps x, d_x S(eps x, eps xi))|``
    (maximum over samples); its log-log slope against ``eps`` is the
    reported order.  The two lowest ``xi``-orders of ``S_k`` are compared
    with ``-t V_k(x)`` and ``t^2 <xi, grad V_k(x)>``.

    Raises
    ------
    StructureViolationError
        If ``check`` and the order is below ``k - 0.5`` or an identity
        fails at relative 1e-10.
    """
    n = model.n
    eps = np.asarray(eps_list if eps_list is not None else np.geomspace(0.2, 0.025, 6), dtype=float)
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n_samples, 2 * n))
    samples = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    x0 = np.asarray(model.x0)

    def S_vec(v):
        return generating_function(model, t, v[:n], v[n:])

    starts, targets = [], []
    for e in eps:
        for smp in samples:
            v = e * smp
            g = _grad_cs(S_vec, v)
            starts.append(np.concatenate([x0 + g[n:], v[n:]]))
            targets.append(np.concatenate([x0 + v[:n], g[:n]]))
    out = _flow_batch(model, np.array(starts), t, 3e-14, 1e-18)
    diff = np.linalg.norm(out - np.array(targets), axis=1).reshape(eps.size, n_samples).max(axis=1)

    if np.all(diff == 0):
        order = math.inf
    else:
        good = diff > 0
        order = float(np.polyfit(np.log(eps[good]), np.log(diff[good]), 1)[0])

    e0 = e1 = 0.0
    if model.germ_terms:
        Vk = model.V_k
        for smp in samples:
            x, xi = smp[:n], smp[n:]
            s0 = np.real(generating_kernel(model, t, x, np.zeros(n)))
            ref0 = -t * float(Vk(x[None, :])[0])
            e0 = max(e0, abs(s0 - ref0) / max(abs(ref0), 1e-300))
            d1 = np.imag(generating_kernel(model, t, x.astype(complex), 1e-30j * xi)) / 1e-30
            ref1 = t**2 * float(np.dot(xi, Vk.gradient(x[None, :])[0]))
            e1 = max(e1, abs(d1 - ref1) / max(abs(ref1), 1e-300))
    res = GeneratingResult(t, eps, diff, order, e0, e1, samples)
    if check and model.germ_terms:
        if order < model.k - 0.5:
            raise StructureViolationError(f"generating-function defect decays with order {order:.3f} < k - 0.5")
        if max(e0, e1) > 1e-10:
            raise StructureViolationError(f"generating-function identities fail ({e0:.2e}, {e1:.2e})")
    return res


# ---------------------------------------------------------------------------
# Period
# ---------------------------------------------------------------------------

def period(model: PotentialModel, E: float, t_cap: float = 1e4, tol: float = 1e-12) -> float:
    """Period of the orbit on ``{p = E}`` in one dimension.

    The orbit is started at the right turning point with ``xi = 0``.  The
    first upward zero of ``xi`` marks the left turning point; a second
    integration from there stops at the next downward zero, closing the
    orbit.

    Raises
    ------
    NonCompactOrbitError
        If the energy surface is unbounded or no return occurs before
        ``t_cap``.
    """
    if model.n != 1:
        raise PreconditionError("period is implemented for one-dimensional models")
    from .asympt import _turning_points

    try:
        _, b = _turning_points(model, E)
    except PreconditionError as exc:
        raise NonCompactOrbitError(str(exc)) from exc

    def rhs(_, y):
        return [2.0 * y[1], -float(model.gradient(np.array([[y[0]]]))[0, 0])]

    def crossing(direction):
        def ev(_, y):
            return y[1]
        ev.terminal = True
        ev.direction = direction
        return ev

    total = 0.0
    y = np.array([b, 0.0])
    for direction in (1.0, -1.0):
        sol = solve_ivp(rhs, (0.0, t_cap), y, method="DOP853", rtol=tol, atol=tol * 1e-2,
                        events=crossing(direction))
        if sol.status == -1:
            raise StiffnessError(sol.message)
        hits = [tt for tt in sol.t_events[0] if tt > 0]
        if not hits:
            raise NonCompactOrbitError(f"no return of the orbit at E={E} before t={t_cap}")
        total += hits[0]
        y = np.array([sol.y_events[0][0][0], 0.0])
    return total


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

JET_COLUMNS = ("t", "direction", "formula_value", "fd_value", "fd_error")


def jet_comparison(model: PotentialModel, t: float, direction) -> dict:
    """Formula and finite-difference values of ``d^(k-1) Phi_t(z0)`` along ``direction``."""
    d = _as_vector(direction, model.n).astype(float)
    formula = derivative_flow_formula(model, t, d)
    fd = derivative_tensor_fd(model, t, d, model.k - 1)
    return {"t": t, "direction": d, "formula_value": formula, "fd_value": fd.value, "fd_error": fd.error,
            "usable": fd.usable}


def write_jet_csv(path: str | Path, rows: Sequence[dict]) -> None:
    def fmt(v):
        return " ".join(repr(float(c)) for c in np.atleast_1d(v))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(JET_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r["t"])), fmt(r["direction"]), fmt(r["formula_value"]), fmt(r["fd_value"]),
                        f"{r['fd_error']:.3e}"])
