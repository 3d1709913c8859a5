"""Polynomial potentials with a degenerate minimum.

A potential is stored as its critical energy ``E_c``, the critical point
``x0`` and the homogeneous pieces of ``V - E_c`` in coordinates centred at
``x0``.  An optional polynomial ``W`` enters the full potential as ``-h W``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize

from .errors import DefinitenessError, StructureError

POSITIVITY_FLOOR = 1e-9

MultiIndex = tuple[int, ...]


def _as_points(x, n: int) -> np.ndarray:
    """Return ``x`` as an array of shape (..., n); scalars are accepted for n=1."""
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.complexfloating):
        arr = arr.astype(float)
    if n == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != n:
        raise StructureError(f"expected points with last axis {n}, got shape {arr.shape}")
    return arr


class Polynomial:
    """Real polynomial in ``n`` variables stored as a multi-index map.

    Parameters
    ----------
    n : int
        Number of variables.
    coefficients : mapping or iterable of (multi-index, coefficient)
        Zero coefficients are dropped; repeated multi-indices are summed.
    """

    def __init__(self, n: int, coefficients: Mapping[MultiIndex, float] | Iterable[tuple[MultiIndex, float]]):
        if int(n) != n or n < 1:
            raise StructureError(f"dimension must be a positive integer, got {n!r}")
        self.n = int(n)
        items = coefficients.items() if isinstance(coefficients, Mapping) else coefficients
        acc: dict[MultiIndex, float] = {}
        for idx, c in items:
            idx = tuple(int(a) for a in idx)
            if len(idx) != self.n:
                raise StructureError(f"multi-index {idx} has length {len(idx)}, expected {self.n}")
            if any(a < 0 for a in idx):
                raise StructureError(f"negative exponent in multi-index {idx}")
            c = float(c)
            if not math.isfinite(c):
                raise StructureError(f"non-finite coefficient for {idx}")
            acc[idx] = acc.get(idx, 0.0) + c
        self.terms: tuple[tuple[MultiIndex, float], ...] = tuple(
            sorted(((i, c) for i, c in acc.items() if c != 0.0), key=lambda t: (sum(t[0]), t[0]))
        )
        self._exps = np.array([t[0] for t in self.terms], dtype=int).reshape(-1, self.n)
        self._coef = np.array([t[1] for t in self.terms], dtype=float)

    # -- structure -----------------------------------------------------
    @property
    def degrees(self) -> list[int]:
        return sorted({sum(i) for i, _ in self.terms})

    def homogeneous_parts(self) -> dict[int, dict[MultiIndex, float]]:
        parts: dict[int, dict[MultiIndex, float]] = {}
        for idx, c in self.terms:
            parts.setdefault(sum(idx), {})[idx] = c
        return parts

    def as_dict(self) -> dict[MultiIndex, float]:
        return dict(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.n == other.n and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n, self.terms))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, {self.as_dict()!r})"

    # -- evaluation ----------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        pts = _as_points(x, self.n)
        if not self.terms:
            return np.zeros(pts.shape[:-1], dtype=pts.dtype)
        mono = np.prod(pts[..., None, :] ** self._exps, axis=-1)
        return mono @ self._coef

    def gradient(self, x) -> np.ndarray:
        """Gradient, shape (..., n)."""
        pts = _as_points(x, self.n)
        out = np.zeros(pts.shape, dtype=np.result_type(pts.dtype, float))
        for i in range(self.n):
            mask = self._exps[:, i] > 0
            if not mask.any():
                continue
            e = self._exps[mask].copy()
            c = self._coef[mask] * e[:, i]
            e[:, i] -= 1
            out[..., i] = np.prod(pts[..., None, :] ** e, axis=-1) @ c
        return out

    def scaled(self, factor: float) -> "Polynomial":
        return type(self)(self.n, {i: factor * c for i, c in self.terms})


class HomogeneousForm(Polynomial):
    """Homogeneous polynomial of a fixed degree ``k``.

    Parameters
    ----------
    n : int
        Spatial dimension (1 to 3).
    k : int
        Degree.  Every multi-index must have total degree ``k``.
    coefficients : mapping or iterable
        Multi-index to coefficient map.

    Notes
    -----
    Construction only enforces structural consistency.  The germ
    conditions (even ``k >= 4``, positivity on the sphere) are checked by
    :meth:`check_invariants` and by :func:`validate_hypotheses`, so that
    failing germs can be reported instead of rejected.
    """

    def __init__(self, n: int, k: int, coefficients):
        super().__init__(n, coefficients)
        if int(k) != k or k < 0:
            raise StructureError(f"degree must be a non-negative integer, got {k!r}")
        self.k = int(k)
        bad = [i for i, _ in self.terms if sum(i) != self.k]
        if bad:
            raise StructureError(f"multi-indices {bad} do not have total degree {self.k}")
        if self.n > 3:
            raise StructureError("only dimensions 1 to 3 are supported")

    def __eq__(self, other) -> bool:
        return isinstance(other, HomogeneousForm) and self.k == other.k and super().__eq__(other)

    def __hash__(self) -> int:
        return hash((self.n, self.k, self.terms))

    def __repr__(self) -> str:
        return f"HomogeneousForm(n={self.n}, k={self.k}, {self.as_dict()!r})"

    def scaled(self, factor: float) -> "HomogeneousForm":
        return HomogeneousForm(self.n, self.k, {i: factor * c for i, c in self.terms})

    @classmethod
    def radial_power(cls, n: int, k: int, coefficient: float = 1.0) -> "HomogeneousForm":
        """``coefficient * |x|^k`` for even ``k``."""
        if k % 2:
            raise StructureError("a polynomial radial power needs an even degree")
        return cls(n, k, _radial_expansion(n, k // 2, coefficient))

    def radial_coefficient(self, rtol: float = 1e-12) -> float | None:
        """Return ``c`` if the form equals ``c |x|^k``, otherwise ``None``."""
        if self.k % 2 or not self.terms:
            return None
        lead = (self.k,) + (0,) * (self.n - 1)
        c = self.as_dict().get(lead, 0.0)
        if c == 0.0:
            return None
        target = _radial_expansion(self.n, self.k // 2, c)
        mine = self.as_dict()
        if set(target) != set(mine):
            return None
        if all(abs(mine[i] - target[i]) <= rtol * abs(target[i]) for i in target):
            return c
        return None

    def check_invariants(self, floor: float = POSITIVITY_FLOOR, n_samples: int = 1000, seed: int = 0) -> list[str]:
        """List violated germ invariants (empty when all hold).

        Checks the degree rule, positivity on a sphere sample and
        homogeneity ``V(s eta) = s^k V(eta)`` at random ``s, eta``.
        """
        issues = []
        if self.k < 4 or self.k % 2:
            issues.append(f"degree {self.k} is not an even integer >= 4")
        pts = sphere_points(self.n, n_samples)
        vals = self(pts)
        if vals.min() <= floor:
            issues.append(f"not positive on the unit sphere: min {vals.min():.3e} at {pts[np.argmin(vals)].tolist()}")
        rng = np.random.default_rng(seed)
        eta = rng.standard_normal((n_samples, self.n))
        s = rng.uniform(0.1, 3.0, n_samples)
        lhs = self(s[:, None] * eta)
        rhs = s**self.k * self(eta)
        scale = np.maximum(np.abs(rhs), np.finfo(float).tiny)
        if np.max(np.abs(lhs - rhs) / scale) > 1e-12:
            issues.append("homogeneity check failed")
        return issues


def _radial_expansion(n: int, m: int, coefficient: float) -> dict[MultiIndex, float]:
    """Coefficients of ``coefficient * (x_1^2 + ... + x_n^2)^m``."""
    out = {}
    for b in itertools.product(range(m + 1), repeat=n):
        if sum(b) != m:
            continue
        mult = factorial(m)
        for bi in b:
            mult //= factorial(bi)
        out[tuple(2 * bi for bi in b)] = coefficient * mult
    return out


# ---------------------------------------------------------------------------
# Sphere quadrature
# ---------------------------------------------------------------------------

def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n; the 0-sphere counts two points."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_rule(n: int, n_nodes: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m, n) and weights (m,) for integration over the unit sphere.

    n=1 uses the counting measure on {-1, +1}; n=2 the equispaced
    trapezoid rule in the angle; n=3 Gauss-Legendre in cos(theta) times
    a trapezoid rule with ``2 * n_nodes`` azimuthal points.
    """
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if n == 2:
        th = 2 * np.pi * np.arange(n_nodes) / n_nodes
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(n_nodes, 2 * np.pi / n_nodes)
    if n == 3:
        z, wz = leggauss(n_nodes)
        m = 2 * n_nodes
        ph = 2 * np.pi * np.arange(m) / m
        Z, P = np.meshgrid(z, ph, indexing="ij")
        rho = np.sqrt(1 - Z**2)
        pts = np.column_stack([(rho * np.cos(P)).ravel(), (rho * np.sin(P)).ravel(), Z.ravel()])
        w = (wz[:, None] * np.full(m, 2 * np.pi / m)[None, :]).ravel()
        return pts, w
    raise StructureError(f"sphere quadrature is available for n = 1, 2, 3 only (got {n})")


def sphere_points(n: int, count: int = 1000) -> np.ndarray:
    """Deterministic, roughly uniform sample of the unit sphere."""
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    # Fibonacci lattice
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    ph = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z * z)
    return np.column_stack([r * np.cos(ph), r * np.sin(ph), z])


def sphere_integral(form: HomogeneousForm, exponent: float, n_nodes: int = 256,
                    floor: float = POSITIVITY_FLOOR) -> float:
    """Integrate ``|V_k(eta)|**exponent`` over the unit sphere.

    Parameters
    ----------
    form : HomogeneousForm
        Positive-definite form.
    exponent : float
        Power applied to the form values.
    n_nodes : int
        Angular resolution (see :func:`sphere_rule`).

    Raises
    ------
    DefinitenessError
        If the form is ``<= floor`` at a quadrature node.
    """
    pts, w = sphere_rule(form.n, n_nodes)
    vals = form(pts)
    bad = np.flatnonzero(vals <= floor)
    if bad.size:
        raise DefinitenessError(
            f"form value {vals[bad[0]]:.3e} <= {floor:g} at sphere node {pts[bad[0]].tolist()}")
    return float(np.sum(w * vals**exponent))


# ---------------------------------------------------------------------------
# Potential model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Polynomial potential ``V(x) = E_c + sum_j V_j(x - x0)`` with optional ``-h W``.

    Parameters
    ----------
    n : int
        Spatial dimension.
    E_c : float
        Critical energy ``V(x0)``.
    x0 : tuple of float
        Critical point.
    germ_terms : tuple of HomogeneousForm
        Homogeneous pieces of ``V - E_c`` in shifted coordinates, one per
        degree, ascending.
    W : Polynomial or None
        Correction entering as ``-h W``, also in shifted coordinates.
    name : str
        Label used in reports.
    """

    n: int
    E_c: float = 0.0
    x0: tuple[float, ...] = ()
    germ_terms: tuple[HomogeneousForm, ...] = ()
    W: Polynomial | None = None
    name: str = "custom"
    _radial_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise StructureError(f"dimension must be 1, 2 or 3, got {self.n}")
        x0 = tuple(float(v) for v in (self.x0 or (0.0,) * self.n))
        if len(x0) != self.n:
            raise StructureError(f"x0 has {len(x0)} components, expected {self.n}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "E_c", float(self.E_c))
        degs = []
        for t in self.germ_terms:
            if not isinstance(t, HomogeneousForm) or t.n != self.n:
                raise StructureError("germ terms must be HomogeneousForm objects of the model dimension")
            degs.append(t.k)
        if degs != sorted(set(degs)):
            raise StructureError(f"germ degrees must be strictly increasing, got {degs}")
        if any(not t.terms for t in self.germ_terms):
            raise StructureError("germ terms must be non-zero")
        if self.W is not None and self.W.n != self.n:
            raise StructureError("W has the wrong dimension")

    @classmethod
    def from_polynomial(cls, n: int, terms, E_c: float = 0.0, x0=None, W=None, name: str = "custom") -> "PotentialModel":
        """Build a model from the monomials of ``V - E_c`` in shifted coordinates."""
        poly = terms if isinstance(terms, Polynomial) else Polynomial(n, terms)
        parts = poly.homogeneous_parts()
        if 0 in parts:
            raise StructureError("constant terms belong in E_c")
        germ = tuple(HomogeneousForm(n, d, parts[d]) for d in sorted(parts))
        if W is not None and not isinstance(W, Polynomial):
            W = Polynomial(n, W)
        if W is not None and not W.terms:
            W = None
        return cls(n=n, E_c=E_c, x0=tuple(x0) if x0 is not None else (), germ_terms=germ, W=W, name=name)

    # -- derived data --------------------------------------------------
    @property
    def k(self) -> int:
        if not self.germ_terms:
            raise StructureError("model has no germ terms")
        return self.germ_terms[0].k

    @property
    def V_k(self) -> HomogeneousForm:
        if not self.germ_terms:
            raise StructureError("model has no germ terms")
        return self.germ_terms[0]

    @property
    def homogeneous(self) -> bool:
        """True when ``V - E_c`` is exactly the lowest germ term and W is absent."""
        return len(self.germ_terms) == 1 and self.W is None

    @property
    def scale_invariant(self) -> bool:
        """True when ``h`` can be scaled out exactly.

        This holds for a single germ term with no correction, and also when
        ``W`` is homogeneous of degree ``(k - 2) / 2``.
        """
        if len(self.germ_terms) != 1:
            return False
        if self.W is None:
            return True
        return self.W.degrees == [(self.k - 2) // 2] and self.k % 2 == 0

    @property
    def radial(self) -> bool:
        """True when every germ term and W depend on ``|x - x0|`` only."""
        if not self._radial_cache:
            ok = all(t.radial_coefficient() is not None for t in self.germ_terms)
            if ok and self.W is not None:
                ok = all(HomogeneousForm(self.n, d, p).radial_coefficient() is not None
                         for d, p in self.W.homogeneous_parts().items() if d > 0)
            self._radial_cache.append(ok)
        return self._radial_cache[0]

    def shifted(self, x) -> np.ndarray:
        return _as_points(x, self.n) - np.asarray(self.x0)

    def germ(self, x) -> np.ndarray:
        """``V(x) - E_c`` for the h-independent part."""
        y = self.shifted(x)
        out = np.zeros(y.shape[:-1], dtype=y.dtype)
        for t in self.germ_terms:
            out = out + t(y)
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient of the h-independent potential."""
        y = self.shifted(x)
        out = np.zeros(y.shape, dtype=np.result_type(y.dtype, float))
        for t in self.germ_terms:
            out = out + t.gradient(y)
        return out

    def correction(self, x) -> np.ndarray:
        y = self.shifted(x)
        if self.W is None:
            return np.zeros(y.shape[:-1])
        return self.W(y)

    def __call__(self, x, h: float = 0.0) -> np.ndarray:
        return eval_potential(self, x, h)

    def radial_profile(self, r, h: float = 0.0) -> np.ndarray:
        """Potential along ``x0 + r e_1``; equals ``V`` at radius ``r`` for radial models."""
        r = np.asarray(r, dtype=float)
        pts = np.zeros(r.shape + (self.n,))
        pts[..., 0] = r
        return eval_potential(self, pts + np.asarray(self.x0), h)

    def to_polynomial(self) -> Polynomial:
        acc: dict[MultiIndex, float] = {}
        for t in self.germ_terms:
            acc.update(t.as_dict())
        return Polynomial(self.n, acc)

    def with_terms(self, germ_terms=None, W="keep", name=None) -> "PotentialModel":
        return PotentialModel(n=self.n, E_c=self.E_c, x0=self.x0,
                              germ_terms=self.germ_terms if germ_terms is None else tuple(germ_terms),
                              W=self.W if W == "keep" else W, name=name or self.name)

    def __eq__(self, other) -> bool:
        return (isinstance(other, PotentialModel) and self.n == other.n and self.E_c == other.E_c
                and self.x0 == other.x0 and self.germ_terms == other.germ_terms and self.W == other.W)

    def __hash__(self) -> int:
        return hash((self.n, self.E_c, self.x0, self.germ_terms, self.W))


def eval_potential(model: PotentialModel, x, h: float = 0.0) -> np.ndarray:
    """Full potential ``E_c + sum_j V_j(x - x0) - h W(x - x0)``.

    Parameters
    ----------
    model : PotentialModel
    x : array_like
        Points, shape (..., n); a scalar or 1-D array is accepted for n=1.
    h : float
        Semiclassical parameter.

    Returns
    -------
    ndarray or float
        Potential values, with the point axis removed.
    """
    val = model.E_c + model.germ(x)
    if h and model.W is not None:
        val = val - h * model.correction(x)
    if np.ndim(val) == 0:
        return float(val) if not np.iscomplexobj(val) else complex(val)
    return val


# ---------------------------------------------------------------------------
# Hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""
    witness: list | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "witness": self.witness}


@dataclass
class ValidationReport:
    model: str
    checks: list[HypothesisCheck]
    k: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"model": self.model, "k": self.k, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def _box_bounds(model: PotentialModel, box) -> np.ndarray:
    """Normalize a box argument into an (n, 2) array of bounds."""
    if np.isscalar(box):
        x0 = np.asarray(model.x0)
        return np.column_stack([x0 - float(box), x0 + float(box)])
    b = np.asarray(box, dtype=float)
    if b.shape == (2,) and model.n == 1:
        b = b[None, :]
    if b.shape != (model.n, 2) or np.any(b[:, 1] <= b[:, 0]):
        raise StructureError(f"box must be a half-width or an (n, 2) array of bounds, got {box!r}")
    return b


def _boundary_sample(bounds: np.ndarray, per_edge: int) -> np.ndarray:
    n = bounds.shape[0]
    if n == 1:
        return bounds.reshape(2, 1)
    axes = [np.linspace(lo, hi, per_edge) for lo, hi in bounds]
    pts = []
    for d in range(n):
        for side in bounds[d]:
            grids = np.meshgrid(*[axes[i] if i != d else np.array([side]) for i in range(n)], indexing="ij")
            pts.append(np.column_stack([g.ravel() for g in grids]))
    return np.vstack(pts)


def validate_hypotheses(model: PotentialModel, eps: float, box, *, grid: int | None = None,
                        floor: float = POSITIVITY_FLOOR, sphere_samples: int = 1000) -> ValidationReport:
    """Check the standing assumptions on a model and report each one.

    Parameters
    ----------
    model : PotentialModel
    eps : float
        Energy half-width of the window around ``E_c``.
    box : float or array_like
        Half-width of a cube centred at ``x0`` or explicit (n, 2) bounds.
    grid : int, optional
        Points per axis for the critical-point search.

    Returns
    -------
    ValidationReport
        One entry each for ``critical_point``, ``degenerate_hessian``,
        ``even_order``, ``definite_germ``, ``confinement`` and
        ``isolated_critical_point``.
    """
    bounds = _box_bounds(model, box)
    checks: list[HypothesisCheck] = []
    degs = [t.k for t in model.germ_terms]

    low = [d for d in degs if d == 1]
    checks.append(HypothesisCheck("critical_point", not low,
                                  "gradient vanishes at x0" if not low else "degree-1 term present"))
    quad = [d for d in degs if d == 2]
    checks.append(HypothesisCheck("degenerate_hessian", not quad and not low,
                                  "no degree-2 term" if not quad else "Hessian at x0 is nonzero"))

    k = degs[0] if degs else None
    even = k is not None and k >= 4 and k % 2 == 0
    checks.append(HypothesisCheck("even_order", even, f"lowest degree k = {k}"))

    if k is None:
        checks.append(HypothesisCheck("definite_germ", False, "no germ terms"))
    else:
        pts = sphere_points(model.n, sphere_samples)
        vals = model.V_k(pts)
        i = int(np.argmin(vals))
        ok = bool(vals[i] > floor)
        checks.append(HypothesisCheck("definite_germ", ok, f"min V_k on sphere sample = {vals[i]:.6g}",
                                      None if ok else pts[i].tolist()))

    per_edge = grid or (2 if model.n == 1 else 201 if model.n == 2 else 41)
    bpts = _boundary_sample(bounds, per_edge)
    bvals = model.germ(bpts)
    i = int(np.argmin(bvals))
    ok = bool(bvals[i] > eps)
    checks.append(HypothesisCheck("confinement", ok,
                                  f"min V - E_c on box boundary = {bvals[i]:.6g} (eps = {eps:g})",
                                  None if ok else bpts[i].tolist()))

    checks.append(_isolated_check(model, eps, bounds, grid))
    return ValidationReport(model.name, checks, k)


def _isolated_check(model: PotentialModel, eps: float, bounds: np.ndarray, grid: int | None) -> HypothesisCheck:
    """Grid search plus local refinement for critical points other than x0."""
    n = model.n
    g = grid or {1: 2001, 2: 201, 3: 41}[n]
    axes = [np.linspace(lo, hi, g) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    gn = np.linalg.norm(model.gradient(pts), axis=-1)
    vals = model.germ(pts)
    # discrete local minima of |grad V|
    is_min = np.ones(gn.shape, dtype=bool)
    for ax in range(n):
        for shift in (1, -1):
            nb = np.roll(gn, shift, axis=ax)
            edge = [slice(None)] * n
            edge[ax] = 0 if shift == 1 else -1
            nb[tuple(edge)] = np.inf
            is_min &= gn <= nb
    cand = np.argwhere(is_min & (vals <= eps))
    spacing = max((hi - lo) / (g - 1) for lo, hi in bounds)
    x0 = np.asarray(model.x0)
    scale = max(1.0, float(np.max(np.abs(bounds))))

    def obj(y):
        return float(np.sum(model.gradient(y) ** 2))

    for c in cand:
        start = pts[tuple(c)]
        if np.linalg.norm(start - x0) <= 2 * spacing:
            continue
        res = minimize(obj, start, method="Nelder-Mead",
                       options={"xatol": 1e-12 * scale, "fatol": 1e-24, "maxiter": 4000})
        y = res.x
        inside = np.all((y >= bounds[:, 0]) & (y <= bounds[:, 1]))
        if (inside and np.sqrt(res.fun) < 1e-6 * scale and float(model.germ(y)) <= eps
                and np.linalg.norm(y - x0) > 1e-3 * scale):
            return HypothesisCheck("isolated_critical_point", False,
                                   f"second critical point with V - E_c = {float(model.germ(y)):.6g}",
                                   y.tolist())
    return HypothesisCheck("isolated_critical_point", True, f"{len(cand)} grid candidates examined")


# ---------------------------------------------------------------------------
# Potential definition files
# ---------------------------------------------------------------------------

_LINE = re.compile(r"^(V|W)\s+([0-9\s]+?)\s*:\s*(\S+)$")


def parse_potential(text: str, name: str = "custom", *, allow_low_degree: bool = False) -> PotentialModel:
    """Parse a potential definition.

    The format is line based; ``#`` starts a comment::

        n = 2
        E_c = 0.0
        x0 = 0.0 0.0
        V 4 0 : 1.0
        V 2 2 : 2.0
        V 0 4 : 1.0
        W 2 0 : 12.0

    A ``V`` line lists the exponents of one monomial of ``V - E_c`` in
    coordinates centred at ``x0``, then its coefficient.  ``W`` lines
    describe the polynomial entering as ``-h W``.  Degree 0, 1 and 2
    ``V`` terms are rejected unless ``allow_low_degree`` is set (degree 1
    and 2 only), which lets :func:`validate_hypotheses` report on such
    models.

    Raises
    ------
    StructureError
        With the offending line number.
    """
    header: dict[str, str] = {}
    vterms: list[tuple[MultiIndex, float, int]] = []
    wterms: list[tuple[MultiIndex, float, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m:
            try:
                idx = tuple(int(a) for a in m.group(2).split())
                coef = float(m.group(3))
            except ValueError as exc:
                raise StructureError(f"line {lineno}: {exc}") from None
            (vterms if m.group(1) == "V" else wterms).append((idx, coef, lineno))
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in ("n", "E_c", "x0", "name"):
                raise StructureError(f"line {lineno}: unknown key {key!r}")
            header[key] = val
            continue
        raise StructureError(f"line {lineno}: cannot parse {raw!r}")
    if "n" not in header:
        raise StructureError("missing 'n = ...' line")
    try:
        n = int(header["n"])
        E_c = float(header.get("E_c", "0"))
        x0 = tuple(float(v) for v in header["x0"].split()) if "x0" in header else None
    except ValueError as exc:
        raise StructureError(str(exc)) from None
    for idx, _, lineno in vterms + wterms:
        if len(idx) != n:
            raise StructureError(f"line {lineno}: multi-index {idx} has length {len(idx)}, expected {n}")
    for idx, _, lineno in vterms:
        if sum(idx) == 0 or (sum(idx) <= 2 and not allow_low_degree):
            raise StructureError(f"line {lineno}: V term of degree {sum(idx)} is not allowed in the germ")
    V = Polynomial(n, [(i, c) for i, c, _ in vterms])
    W = Polynomial(n, [(i, c) for i, c, _ in wterms]) if wterms else None
    return PotentialModel.from_polynomial(n, V, E_c=E_c, x0=x0, W=W, name=header.get("name", name))


def format_potential(model: PotentialModel) -> str:
    """Serialize a model in the format read by :func:`parse_potential`."""
    lines = [f"name = {model.name}", f"n = {model.n}", f"E_c = {model.E_c!r}",
             "x0 = " + " ".join(repr(v) for v in model.x0)]
    for t in model.germ_terms:
        for idx, c in t.terms:
            lines.append("V " + " ".join(map(str, idx)) + f" : {c!r}")
    if model.W is not None:
        for idx, c in model.W.terms:
            lines.append("W " + " ".join(map(str, idx)) + f" : {c!r}")
    return "\n".join(lines) + "\n"


def load_potential(path: str | Path, *, allow_low_degree: bool = False) -> PotentialModel:
    p = Path(path)
    return parse_potential(p.read_text(), name=p.stem, allow_low_degree=allow_low_degree)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    """A bundled model together with the energy level it is studied at."""

    name: str
    model: PotentialModel
    energy: float
    eps: float
    box: float
    description: str


def _mono(n: int, k: int, c: float) -> HomogeneousForm:
    return HomogeneousForm(n, k, {(k,) + (0,) * (n - 1): c})


def _build_presets() -> dict[str, Preset]:
    quartic = PotentialModel(1, germ_terms=(_mono(1, 4, 1.0),), name="quartic-1d")
    return {
        "quartic-1d": Preset("quartic-1d", quartic, 0.0, 0.5, 2.0, "V = x^4 at its minimum"),
        "sextic-1d": Preset("sextic-1d", PotentialModel(1, germ_terms=(_mono(1, 6, 1.0),), name="sextic-1d"),
                            0.0, 0.5, 2.0, "V = x^6 at its minimum"),
        "perturbed-quartic": Preset(
            "perturbed-quartic",
            PotentialModel(1, germ_terms=(_mono(1, 4, 1.0), _mono(1, 6, 5.0)), name="perturbed-quartic"),
            0.0, 0.5, 2.0, "V = x^4 + 5 x^6, same quartic germ"),
        "radial-quartic-2d": Preset(
            "radial-quartic-2d",
            PotentialModel(2, germ_terms=(HomogeneousForm.radial_power(2, 4),), name="radial-quartic-2d"),
            0.0, 0.5, 2.0, "V = |x|^4 in two dimensions"),
        "witten-1d": Preset(
            "witten-1d",
            PotentialModel(1, germ_terms=(_mono(1, 6, 16.0),), W=Polynomial(1, {(2,): 12.0}), name="witten-1d"),
            0.0, 0.5, 2.0, "f = x^4: V = |f'|^2 = 16 x^6, W = f'' = 12 x^2"),
        "regular-level": Preset("regular-level", quartic.with_terms(name="regular-level"), 1.0, 0.5, 3.0,
                                "V = x^4 at the regular energy E = 1"),
    }


PRESETS: dict[str, Preset] = _build_presets()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_model(name: str) -> PotentialModel:
    return get_preset(name).model
