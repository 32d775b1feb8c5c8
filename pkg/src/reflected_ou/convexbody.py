"""Geometry of a convex body K = {g <= 1}: membership, projection, normals, penalty.

Conventions: ``U_eps = d_K^2 / (2 eps)`` and its gradient, the penalty, is
``beta_eps(x) = (x - Pi_K(x)) / eps``. The penalized density is proportional to
``exp(-d_K^2 / eps)`` relative to mu, so its log-gradient is ``-(2/eps)(x - Pi_K x)``.
Points with ``g(x) == 1`` belong to K.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .errors import DegenerateGradient, NotOnBoundary, SolverDiverged

TOL_PROJ = 1e-12
MAX_ITER = 100
TOL_SURFACE = 1e-8
TOL_PSD = 1e-6


def as_points(x: np.ndarray, dim: int | None = None) -> tuple[np.ndarray, bool]:
    """Return ``x`` as a 2-D (m, n) array and whether the input was a single point."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if dim is not None and x2.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x2.shape[-1]}")
    return x2, single


class LevelFunction(Protocol):
    dim: int

    def value(self, x: np.ndarray) -> np.ndarray: ...

    def grad(self, x: np.ndarray) -> np.ndarray: ...

    def hess(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class QuadraticLevel:
    """g(x) = sum_k w_k x_k^2."""

    weights: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def value(self, x):
        return np.atleast_2d(x) ** 2 @ self.w

    def grad(self, x):
        return 2.0 * self.w * np.atleast_2d(x)

    def hess(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.diag(2.0 * self.w), (x.shape[0], self.dim, self.dim)).copy()


@dataclass(frozen=True)
class LinearLevel:
    """g(x) = <c, x>; not a body, only a level function for shell integrals."""

    coef: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.coef)

    def value(self, x):
        return np.atleast_2d(x) @ np.asarray(self.coef)

    def grad(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.coef, dtype=float), x.shape).copy()

    def hess(self, x):
        x = np.atleast_2d(x)
        return np.zeros((x.shape[0], self.dim, self.dim))


class IntegrandLevel:
    """g(x) = rho^{-2} int_0^L j(sum_k x_k e_k(xi)) dxi with the sine basis of (0, L).

    ``e_k(xi) = sqrt(2/L) sin(k pi xi / L)``; ``j`` is a polynomial given by its
    coefficients in increasing degree. The xi-integral uses Gauss-Legendre nodes.
    """

    def __init__(
        self, dim: int, j_coefficients, rho: float = 1.0, length: float = 1.0, nodes: int | None = None
    ):
        self.dim = int(dim)
        self.j = np.asarray(j_coefficients, dtype=float)
        if self.j.size < 3 or abs(self.j[0]) > 0:
            raise ValueError("j must satisfy j(0) = 0 and have degree >= 2")
        self.rho = float(rho)
        self.length = float(length)
        deg = self.j.size - 1
        m = nodes or max(64, 2 * deg * (self.dim + 2))
        t, w = np.polynomial.legendre.leggauss(m)
        xi = 0.5 * self.length * (t + 1)
        self._w = 0.5 * self.length * w / self.rho**2
        k = np.arange(1, self.dim + 1)
        self._basis = np.sqrt(2.0 / self.length) * np.sin(np.outer(xi, k) * np.pi / self.length)
        self._dj = npoly.polyder(self.j)
        self._d2j = npoly.polyder(self.j, 2)
        # j'' must stay positive; sampled over a wide range of field values.
        probe = np.linspace(-50, 50, 2001)
        d2 = npoly.polyval(probe, self._d2j)
        if d2.min() <= 0:
            raise ValueError("j'' must be strictly positive")
        gram = self._basis.T @ (self._w[:, None] * self._basis)
        self.gamma = float(d2.min() * np.linalg.eigvalsh(gram).min())

    def _field(self, x):
        return np.atleast_2d(x) @ self._basis.T

    def value(self, x):
        return npoly.polyval(self._field(x), self.j) @ self._w

    def grad(self, x):
        return (npoly.polyval(self._field(x), self._dj) * self._w) @ self._basis

    def hess(self, x):
        c = npoly.polyval(self._field(x), self._d2j) * self._w
        return np.einsum("mq,qk,ql->mkl", c, self._basis, self._basis)


@dataclass(frozen=True)
class Projection:
    point: np.ndarray
    distance: float
    normal: np.ndarray | None


class ConvexBody:
    """K = {g <= 1} for a smooth strictly convex level function g."""

    name = "body"

    def __init__(self, g: LevelFunction, gamma: float):
        self.g = g
        self.gamma = float(gamma)
        self.dim = g.dim
        if self.gamma <= 0:
            raise ValueError("strict convexity constant must be positive")

    # -- membership and projection -------------------------------------------------
    def contains(self, x: np.ndarray) -> np.ndarray | bool:
        x2, single = as_points(x, self.dim)
        inside = self.g.value(x2) <= 1.0
        return bool(inside[0]) if single else inside

    def _project_outside(self, x: np.ndarray) -> np.ndarray:
        return kkt_project(self.g, x)

    def project_points(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Projections and distances for a batch of points of shape (m, n)."""
        x2, _ = as_points(x, self.dim)
        out = x2.copy()
        dist = np.zeros(x2.shape[0])
        outside = self.g.value(x2) > 1.0
        if outside.any():
            p = self._project_outside(x2[outside])
            out[outside] = p
            dist[outside] = np.linalg.norm(x2[outside] - p, axis=1)
        return out, dist

    def project(self, x: np.ndarray) -> Projection:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("project takes a single point; use project_points for batches")
        p, d = self.project_points(x)
        point, dist = p[0], float(d[0])
        if dist > 0:
            normal = (x - point) / dist
        elif abs(float(self.g.value(x)[0]) - 1.0) <= TOL_SURFACE:
            normal = self.exterior_normal(x)
        else:
            normal = None
        return Projection(point=point, distance=dist, normal=normal)

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self.project_points(x)[1]

    def penalty_gradient(self, x: np.ndarray, eps: float) -> np.ndarray:
        if eps <= 0:
            raise ValueError("eps must be positive")
        x2, single = as_points(x, self.dim)
        p, _ = self.project_points(x2)
        out = (x2 - p) / eps
        return out[0] if single else out

    def exterior_normal(self, y: np.ndarray) -> np.ndarray:
        y2, single = as_points(y, self.dim)
        gap = np.abs(self.g.value(y2) - 1.0)
        if np.any(gap > TOL_SURFACE):
            raise NotOnBoundary(f"|g(y) - 1| = {gap.max():.3e} exceeds {TOL_SURFACE:g}")
        dg = self.g.grad(y2)
        norm = np.linalg.norm(dg, axis=1)
        if np.any(norm < 1e-12):
            raise DegenerateGradient("|Dg| vanishes on the boundary")
        n = dg / norm[:, None]
        return n[0] if single else n

    def projection_jacobian_quadratic_form(
        self, x: np.ndarray, v: np.ndarray, step: float = 1e-6
    ) -> np.ndarray | float:
        """<(I - D Pi_K(x)) v, v> by central differences of the projection along v."""
        x2, single = as_points(x, self.dim)
        v2 = np.broadcast_to(np.atleast_2d(np.asarray(v, dtype=float)), x2.shape)
        vn = np.linalg.norm(v2, axis=1)
        out = np.zeros(x2.shape[0])
        nz = vn > 0
        if nz.any():
            u = v2[nz] / vn[nz, None]
            hi, _ = self.project_points(x2[nz] + step * u)
            lo, _ = self.project_points(x2[nz] - step * u)
            dpu = np.sum((hi - lo) * u, axis=1) / (2 * step)
            out[nz] = vn[nz] ** 2 * (1.0 - dpu)
        return float(out[0]) if single else out

    # -- shape helpers ----------------------------------------------------------
    def boundary_radius(self, u: np.ndarray) -> np.ndarray:
        """s(u) > 0 with g(s u) = 1 for unit directions u (rows); needs 0 in the interior."""
        u2, single = as_points(u, self.dim)
        if float(self.g.value(np.zeros(self.dim))[0]) >= 1.0:
            raise ValueError("radial parametrization needs the origin inside K")
        lo = np.zeros(u2.shape[0])
        hi = np.ones(u2.shape[0])
        while True:
            grow = self.g.value(hi[:, None] * u2) < 1.0
            if not grow.any():
                break
            hi[grow] *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            inside = self.g.value(mid[:, None] * u2) < 1.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
            if np.max(hi - lo) < 1e-15 * np.max(hi):
                break
        s = 0.5 * (lo + hi)
        return s[0] if single else s

    def interval(self) -> tuple[float, float]:
        """End points of K in dimension one."""
        if self.dim != 1:
            raise ValueError("interval() is only defined in dimension one")
        f = lambda s: float(self.g.value(np.array([s]))[0]) - 1.0  # noqa: E731
        lo, hi = -1.0, 1.0
        while f(lo) < 0:
            lo *= 2
        while f(hi) < 0:
            hi *= 2
        return brentq(f, lo, 0.0, xtol=1e-15, rtol=1e-15), brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15)

    def to_dict(self) -> dict:
        return {"kind": self.name, "dim": self.dim}


class Ball(ConvexBody):
    """Centered ball of radius ``radius``: g(x) = |x|^2 / radius^2."""

    name = "ball"

    def __init__(self, dim: int, radius: float = 1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        super().__init__(QuadraticLevel((1.0 / radius**2,) * dim), gamma=2.0 / radius**2)

    def _project_outside(self, x):
        return self.radius * x / np.linalg.norm(x, axis=1)[:, None]

    def boundary_radius(self, u):
        u2, single = as_points(u, self.dim)
        s = np.full(u2.shape[0], self.radius)
        return s[0] if single else s

    def to_dict(self):
        return {"kind": self.name, "dim": self.dim, "radius": self.radius}


class Ellipsoid(ConvexBody):
    """g(x) = sum_k w_k x_k^2."""

    name = "ellipsoid"

    def __init__(self, weights):
        w = tuple(float(v) for v in weights)
        if min(w) <= 0:
            raise ValueError("ellipsoid weights must be positive")
        super().__init__(QuadraticLevel(w), gamma=2.0 * min(w))

    def _project_outside(self, x):
        # Minimizer is x / (1 + 2 t w) where t > 0 solves sum w x^2 / (1 + 2 t w)^2 = 1.
        # The left side is convex and decreasing in t, so Newton from a lower bound
        # increases monotonically to the root.
        w = self.g.w
        x2w = w * x * x
        t = (np.sqrt(x2w.sum(axis=1)) - 1.0) / (2.0 * w.max())
        for _ in range(MAX_ITER):
            den = 1.0 + 2.0 * np.outer(t, w)
            f = np.sum(x2w / den**2, axis=1) - 1.0
            df = -4.0 * np.sum(w * x2w / den**3, axis=1)
            dt = -f / df
            t = t + dt
            if np.all(np.abs(dt) <= 1e-15 * (1.0 + t)) or np.all(np.abs(f) <= TOL_PROJ):
                break
        else:
            raise SolverDiverged("ellipsoid projection did not converge")
        return x / (1.0 + 2.0 * np.outer(t, w))

    def boundary_radius(self, u):
        u2, single = as_points(u, self.dim)
        s = 1.0 / np.sqrt(u2**2 @ self.g.w)
        return s[0] if single else s

    def to_dict(self):
        return {"kind": self.name, "dim": self.dim, "weights": list(self.g.weights)}


class IntegrandBody(ConvexBody):
    """Sublevel set of an integral functional of the field sum_k x_k e_k(xi)."""

    name = "integrand"

    def __init__(self, dim: int, j_coefficients, rho: float = 1.0, length: float = 1.0):
        g = IntegrandLevel(dim, j_coefficients, rho=rho, length=length)
        super().__init__(g, gamma=g.gamma)

    def to_dict(self):
        return {
            "kind": self.name,
            "dim": self.dim,
            "j_coefficients": self.g.j.tolist(),
            "rho": self.g.rho,
            "length": self.g.length,
        }


class WholeSpace(ConvexBody):
    """K = H: no constraint, zero penalty."""

    name = "whole_space"

    def __init__(self, dim: int):
        self.g = None
        self.gamma = np.inf
        self.dim = int(dim)

    def contains(self, x):
        x2, single = as_points(x, self.dim)
        return True if single else np.ones(x2.shape[0], dtype=bool)

    def project_points(self, x):
        x2, _ = as_points(x, self.dim)
        return x2.copy(), np.zeros(x2.shape[0])

    def exterior_normal(self, y):
        raise NotOnBoundary("the whole space has no boundary")


def kkt_project(
    g: LevelFunction, x: np.ndarray, tol: float = TOL_PROJ, max_iter: int = MAX_ITER
) -> np.ndarray:
    """Damped Newton on y = x - t Dg(y), g(y) = 1, for a batch of points outside K."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    dg = g.grad(x)
    t = np.maximum((g.value(x) - 1.0) / np.sum(dg * dg, axis=1), 0.0)
    y = x - t[:, None] * dg
    scale = np.maximum(1.0, np.abs(x).max(axis=1))

    def residual(y, t, idx):
        # Stationarity is measured relative to |x|; the constraint absolutely.
        f1 = y - x[idx] + t[:, None] * g.grad(y)
        f2 = g.value(y) - 1.0
        r = np.maximum(np.abs(f1).max(axis=1) / scale[idx], np.abs(f2))
        return f1, f2, r

    idx = np.arange(m)
    f1, f2, r = residual(y, t, idx)
    eye = np.eye(n)
    for _ in range(max_iter):
        act = np.nonzero(r > tol)[0]
        if act.size == 0:
            return y
        ya, ta = y[act], t[act]
        jac = np.zeros((act.size, n + 1, n + 1))
        jac[:, :n, :n] = eye + ta[:, None, None] * g.hess(ya)
        d = g.grad(ya)
        jac[:, :n, n] = d
        jac[:, n, :n] = d
        rhs = -np.concatenate([f1[act], f2[act, None]], axis=1)
        try:
            step = np.linalg.solve(jac, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SolverDiverged("singular KKT system in projection") from exc
        s = np.ones(act.size)
        pending = np.arange(act.size)
        for _ in range(40):
            yn = ya[pending] + s[pending, None] * step[pending, :n]
            tn = ta[pending] + s[pending] * step[pending, n]
            g1, g2, rn = residual(yn, tn, act[pending])
            ok = rn < r[act[pending]]
            done = pending[ok]
            y[act[done]], t[act[done]] = yn[ok], tn[ok]
            f1[act[done]], f2[act[done]], r[act[done]] = g1[ok], g2[ok], rn[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            s[pending] *= 0.5
        if pending.size:
            # No decrease possible: accept if already at round-off level.
            stuck = act[pending]
            if np.any(r[stuck] > 1e3 * tol):
                raise SolverDiverged("projection Newton step failed to reduce the KKT residual")
            r[stuck] = 0.0
    if np.any(r > tol):
        raise SolverDiverged(f"projection did not reach tol {tol:g} in {max_iter} iterations")
    return y


# Module-level entry points mirroring the method API.
def contains(body: ConvexBody, x) -> np.ndarray | bool:
    return body.contains(x)


def project(body: ConvexBody, x) -> Projection:
    return body.project(x)


def penalty_gradient(body: ConvexBody, x, eps: float) -> np.ndarray:
    return body.penalty_gradient(x, eps)


def exterior_normal(body: ConvexBody, y) -> np.ndarray:
    return body.exterior_normal(y)


def projection_jacobian_quadratic_form(body: ConvexBody, x, v) -> np.ndarray | float:
    return body.projection_jacobian_quadratic_form(x, v)
