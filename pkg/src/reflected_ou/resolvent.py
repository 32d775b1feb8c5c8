"""Resolvent of the penalized Kolmogorov operator: Feynman-Kac estimates and grid oracles.

The grid oracle discretizes ``N phi = 1/2 Lap phi - 1/2 <DV, D phi>`` with the
potential ``V = sum_k alpha_k x_k^2 + d_K^2/eps`` in exponentially fitted flux form:
the flux across an edge (i, j) of length h is ``B(V_j - V_i) (phi_j - phi_i) / (2 h^2)``
with ``B(s) = s / (exp(s) - 1)``. The resulting matrix is a monotone generator that is
reversible with respect to the discrete weights ``exp(-V_i) vol_i``, reduces to central
differences where V is flat, and upwinds automatically where the penalty is stiff.
With ``eps=None`` the same construction restricted to the nodes of K gives the Neumann
operator (zero flux across the boundary of K).
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .convexbody import ConvexBody, WholeSpace
from .errors import NonCauchy, SolverDiverged
from .sde import Accumulator, Scheme, run_paths
from .spectral import SpectralModel

Func = Callable[[np.ndarray], np.ndarray]


# ============================================================== Feynman-Kac estimates
@dataclass
class ResolventEstimate:
    value: float
    std_error: float
    lam: float
    eps: float
    x: np.ndarray
    horizon: float
    paths: int
    h: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "lambda": self.lam,
            "eps": self.eps,
            "x": np.asarray(self.x).tolist(),
            "horizon": self.horizon,
            "paths": self.paths,
            "h": self.h,
            "seed": self.seed,
        }


@dataclass
class GradientEstimate:
    value: np.ndarray
    std_error: np.ndarray
    lam: float
    eps: float
    x: np.ndarray
    spacing: float
    horizon: float
    paths: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.value))

    @property
    def combined_error(self) -> float:
        return float(np.sqrt(np.sum(self.std_error**2)))

    def to_dict(self) -> dict:
        return {
            "value": self.value.tolist(),
            "std_error": self.std_error.tolist(),
            "norm": self.norm,
            "combined_error": self.combined_error,
            "lambda": self.lam,
            "eps": self.eps,
            "x": np.asarray(self.x).tolist(),
            "spacing": self.spacing,
            "horizon": self.horizon,
            "paths": self.paths,
        }


def truncation_horizon(lam: float, f_sup: float, target_tol: float) -> float:
    """T with exp(-lam T) sup|f| / lam equal to a tenth of the target tolerance."""
    return max(0.0, math.log(10.0 * f_sup / (lam * target_tol)) / lam)


class _DiscountedIntegral(Accumulator):
    """Trapezoid rule for int_0^T exp(-lam t) f(X_t) dt along each path."""

    def __init__(self, starts, paths, f, lam, h, steps):
        self.f, self.lam, self.h, self.steps = f, lam, h, steps
        self.total = np.zeros((starts, paths))

    def update(self, step, x):
        w = self.h * (0.5 if step in (0, self.steps) else 1.0) * math.exp(-self.lam * step * self.h)
        s, p, n = x.shape
        self.total += w * np.asarray(self.f(x.reshape(s * p, n))).reshape(s, p)

    def result(self):
        return self.total


def discounted_path_integrals(
    model: SpectralModel,
    body: ConvexBody,
    eps: float,
    lam: float,
    f: Func,
    starts: np.ndarray,
    paths: int,
    seed: int,
    h: float,
    horizon: float,
    jobs: int = 1,
) -> np.ndarray:
    """Per-path discounted integrals, shape (starts, paths), with shared noise across starts."""
    steps = max(1, math.ceil(horizon / h))
    return run_paths(
        model, body, Scheme.penalized(eps), starts, h, steps, seed, paths,
        lambda s, p: _DiscountedIntegral(s, p, f, lam, h, steps), jobs=jobs,
    )


def _f_sup(f, f_sup):
    if f_sup is not None:
        return float(f_sup)
    bound = getattr(f, "sup_abs", None)
    if bound is None:
        raise ValueError("feynman_kac needs a sup bound for f (pass f_sup)")
    return float(bound)


def feynman_kac(
    model: SpectralModel,
    body: ConvexBody,
    eps: float,
    lam: float,
    f: Func,
    x: np.ndarray,
    paths: int,
    seed: int,
    h: float = 1e-3,
    target_tol: float = 1e-2,
    f_sup: float | None = None,
    jobs: int = 1,
) -> ResolventEstimate:
    """Monte Carlo value of (lam - N_eps)^{-1} f at ``x`` along penalized paths."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    horizon = truncation_horizon(lam, _f_sup(f, f_sup), target_tol)
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    vals = discounted_path_integrals(model, body, eps, lam, f, x, paths, seed, h, horizon, jobs)[0]
    se = float(vals.std(ddof=1) / math.sqrt(paths)) if paths > 1 else float("inf")
    return ResolventEstimate(float(vals.mean()), se, lam, eps, x[0], horizon, paths, h, seed)


def resolvent_gradient(
    model: SpectralModel,
    body: ConvexBody,
    eps: float,
    lam: float,
    f: Func,
    x: np.ndarray,
    paths: int,
    seed: int,
    h: float = 1e-3,
    target_tol: float = 1e-2,
    f_sup: float | None = None,
    spacing: float = 1e-4,
    jobs: int = 1,
) -> GradientEstimate:
    """Central differences of the Feynman-Kac estimate with common random numbers."""
    horizon = truncation_horizon(lam, _f_sup(f, f_sup), target_tol)
    x = np.asarray(x, dtype=float)
    n = model.dim
    shifts = spacing * np.eye(n)
    starts = np.concatenate([x + shifts, x - shifts])
    vals = discounted_path_integrals(model, body, eps, lam, f, starts, paths, seed, h, horizon, jobs)
    diff = (vals[:n] - vals[n:]) / (2 * spacing)
    se = diff.std(axis=1, ddof=1) / math.sqrt(paths)
    return GradientEstimate(diff.mean(axis=1), se, lam, eps, x, spacing, horizon, paths)


# ===================================================================== grid oracle
@dataclass(frozen=True)
class GridConfig:
    nodes: int | None = None  # 1D: total nodes (default 2048); 2D: per axis (default 256)
    margin_sd: float = 4.0
    solver_tol: float = 1e-10

    def resolved_nodes(self, dim: int) -> int:
        return self.nodes or (2048 if dim == 1 else 256)


def bernoulli(s: np.ndarray) -> np.ndarray:
    """B(s) = s / (exp(s) - 1) with B(0) = 1, stable for large |s|."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    big = np.abs(s) > 1e-10
    with np.errstate(over="ignore"):
        out[big] = s[big] / np.expm1(s[big])
    out[np.isposinf(s)] = 0.0
    return out


class GridOperator:
    """Exponentially fitted discretization of a reversible or drifted Kolmogorov operator.

    ``extra_potential`` adds to V at the nodes; ``edge_drift(mid, axis)`` adds a field F
    by ``V_j - V_i -= 2 F_axis(mid) h`` on each edge (so the generator gains <F, D>).
    """

    def __init__(
        self,
        model: SpectralModel,
        body: ConvexBody,
        eps: float | None,
        config: GridConfig = GridConfig(),
        extra_potential: Func | None = None,
        edge_drift: Callable[[np.ndarray, int], np.ndarray] | None = None,
        axes: list[np.ndarray] | None = None,
    ):
        dim = model.dim
        if dim not in (1, 2):
            raise ValueError("grid oracle supports dimension 1 or 2")
        if eps is None and isinstance(body, WholeSpace):
            raise ValueError("the Neumann operator needs a bounded body")
        self.model, self.body, self.eps, self.config = model, body, eps, config
        self.dim = dim
        self.axes = axes if axes is not None else self._make_axes()
        self.spacing = tuple(float(a[1] - a[0]) for a in self.axes)
        self.shape = tuple(a.size for a in self.axes)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        if isinstance(body, WholeSpace):
            dist = np.zeros(len(self.points))
            self.inside = np.ones(len(self.points), dtype=bool)
        else:
            _, dist = body.project_points(self.points)
            self.inside = body.g.value(self.points) <= 1.0 + 1e-12
        self.active = self.inside.copy() if eps is None else np.ones(len(self.points), dtype=bool)
        base = self.points**2 @ model.alpha
        if eps is not None:
            base = base + dist**2 / eps
        if extra_potential is not None:
            base = base + np.asarray(extra_potential(self.points), dtype=float)
        self.potential = base
        self._index = -np.ones(len(self.points), dtype=int)
        self._index[self.active] = np.arange(int(self.active.sum()))
        self.vol = self._volumes()
        self.matrix = self._assemble(edge_drift)
        self.has_drift = edge_drift is not None

    # ----------------------------------------------------------------- geometry
    def _make_axes(self) -> list[np.ndarray]:
        model, body = self.model, self.body
        nodes = self.config.resolved_nodes(model.dim)
        margin = self.config.margin_sd * float(np.sqrt(model.lambdas.max()))
        if model.dim == 1:
            a, b = body.interval() if not isinstance(body, WholeSpace) else (0.0, 0.0)
            length = b - a + 2 * margin
            if b > a:
                # Align nodes with the end points of K.
                inner = max(2, round((nodes - 1) * (b - a) / length))
                h = (b - a) / inner
                ext = math.ceil(margin / h)
                return [a + h * np.arange(-ext, inner + ext + 1)]
            return [np.linspace(-margin, margin, nodes)]
        axes = []
        for k in range(2):
            u = np.zeros(2)
            u[k] = 1.0
            if isinstance(body, WholeSpace):
                r = 0.0
            else:
                r = max(body.boundary_radius(u), body.boundary_radius(-u))
            axes.append(np.linspace(-(r + margin), r + margin, nodes))
        return axes

    def _volumes(self) -> np.ndarray:
        """Relative control volumes: halved across box faces and, in 1D, at the ends of K."""
        vol = np.ones(self.shape)
        for k in range(self.dim):
            sl = [slice(None)] * self.dim
            for end in (0, -1):
                sl[k] = end
                vol[tuple(sl)] *= 0.5
        vol = vol.ravel()
        if self.eps is None and self.dim == 1:
            idx = np.nonzero(self.active)[0]
            vol[idx[0]] = vol[idx[-1]] = 0.5
        return vol

    def _assemble(self, edge_drift) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        ids = np.arange(len(self.points)).reshape(self.shape)
        for k in range(self.dim):
            sl_i = [slice(None)] * self.dim
            sl_j = [slice(None)] * self.dim
            sl_i[k] = slice(0, -1)
            sl_j[k] = slice(1, None)
            i = ids[tuple(sl_i)].ravel()
            j = ids[tuple(sl_j)].ravel()
            keep = self.active[i] & self.active[j]
            i, j = i[keep], j[keep]
            dv = self.potential[j] - self.potential[i]
            h = self.spacing[k]
            if edge_drift is not None:
                mid = 0.5 * (self.points[i] + self.points[j])
                dv = dv - 2.0 * np.asarray(edge_drift(mid, k)) * h
            c = 1.0 / (2 * h * h)
            rows += [i, j]
            cols += [j, i]
            vals += [c * bernoulli(dv), c * bernoulli(-dv)]
        r = self._index[np.concatenate(rows)]
        cidx = self._index[np.concatenate(cols)]
        v = np.concatenate(vals)
        m = int(self.active.sum())
        off = sp.csr_matrix((v, (r, cidx)), shape=(m, m))
        diag = -np.asarray(off.sum(axis=1)).ravel()
        gen = off + sp.diags(diag)
        return (sp.diags(1.0 / self.vol[self.active]) @ gen).tocsr()

    # ----------------------------------------------------------------- measures
    @property
    def active_points(self) -> np.ndarray:
        return self.points[self.active]

    def reversible_weights(self) -> np.ndarray:
        """Normalized weights exp(-V_i) vol_i on active nodes (exact only without edge drift)."""
        v = self.potential[self.active]
        w = np.exp(-(v - v.min())) * self.vol[self.active]
        return w / w.sum()

    def solve(self, lam: float, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve (lam - L) phi = rhs; returns (phi, normwise backward error)."""
        m = self.matrix.shape[0]
        a = (lam * sp.identity(m, format="csr") - self.matrix).tocsc()
        if self.dim == 1:
            phi = spla.spsolve(a, rhs)
        else:
            ilu = spla.spilu(a, drop_tol=1e-8, fill_factor=20)
            pre = spla.LinearOperator(a.shape, ilu.solve)
            phi, info = spla.bicgstab(a, rhs, x0=ilu.solve(rhs), M=pre, rtol=1e-14, atol=0.0, maxiter=500)
            if info != 0 or not np.all(np.isfinite(phi)):
                raise SolverDiverged(f"BiCGSTAB stagnated (info={info})")
            for _ in range(3):  # iterative refinement with the preconditioner
                phi = phi + ilu.solve(rhs - a @ phi)
        res = backward_error(a, phi, rhs)
        if not np.isfinite(res) or res > self.config.solver_tol:
            raise SolverDiverged(f"grid residual {res:.2e} above {self.config.solver_tol:g}")
        return phi, res


def backward_error(a, x, b) -> float:
    r = np.abs(a @ x - b).max()
    scale = abs(a).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max()
    return float(r / scale) if scale > 0 else float(r)


@dataclass
class GridSolution:
    dimension: int
    axes: list[np.ndarray]
    spacing: tuple[float, ...]
    values: np.ndarray  # grid-shaped, NaN on inactive nodes
    eps: float | None
    lam: float
    box: list[tuple[float, float]]
    residual: float
    operator: GridOperator = field(repr=False)

    @property
    def nodal(self) -> np.ndarray:
        return self.values.ravel()[self.operator.active]

    @property
    def points(self) -> np.ndarray:
        return self.operator.active_points

    def interp(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dimension == 1:
            act = self.operator.active
            return np.interp(x[:, 0], self.operator.points[act, 0], self.nodal)
        return RegularGridInterpolator(self.axes, self.values)(x)

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        """Gradient (m, d) and Hessian (m, d, d) on active nodes by central differences."""
        d = self.dimension
        if d == 1:
            phi = self.nodal
            h = self.spacing[0]
            g1 = np.gradient(phi, h, edge_order=2)
            g2 = np.gradient(g1, h, edge_order=2)
            return g1[:, None], g2[:, None, None]
        vals = self.values
        grads = np.gradient(vals, *self.spacing, edge_order=2)
        hess = [np.gradient(gk, *self.spacing, edge_order=2) for gk in grads]
        act = self.operator.active
        g = np.stack([gk.ravel()[act] for gk in grads], axis=1)
        hm = np.stack([np.stack([hess[k][l].ravel()[act] for l in range(d)], axis=1) for k in range(d)], axis=1)
        return g, hm

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pts = self.points
        cols = [f"x{k + 1}" for k in range(self.dimension)] + ["value"]
        np.savetxt(path, np.column_stack([pts, self.nodal]), delimiter=",", header=",".join(cols), comments="",
                   fmt="%.17g")
        return path

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "spacing": list(self.spacing),
            "nodes": int(self.operator.active.sum()),
            "eps": self.eps,
            "lambda": self.lam,
            "box": [list(b) for b in self.box],
            "residual": self.residual,
        }


def grid_solve(
    model: SpectralModel,
    body: ConvexBody,
    eps: float | None,
    lam: float,
    f: Func,
    config: GridConfig = GridConfig(),
    operator: GridOperator | None = None,
) -> GridSolution:
    """Solve lam phi - N_eps phi = f on the grid; ``eps=None`` solves the Neumann problem on K."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    op = operator or GridOperator(model, body, eps, config)
    rhs = np.asarray(f(op.active_points), dtype=float)
    phi, res = op.solve(lam, rhs)
    full = np.full(len(op.points), np.nan)
    full[op.active] = phi
    return GridSolution(
        dimension=op.dim,
        axes=op.axes,
        spacing=op.spacing,
        values=full.reshape(op.shape),
        eps=eps,
        lam=lam,
        box=[(float(a[0]), float(a[-1])) for a in op.axes],
        residual=res,
        operator=op,
    )


# ================================================================= Neumann limit
@dataclass
class NeumannLimit:
    eps: list[float]
    points: np.ndarray  # nodes of K
    finest: np.ndarray
    extrapolated: np.ndarray
    order: float
    increments: list[float]
    boundary_derivatives: list[tuple[float, float]]  # (left, right) per eps
    extrapolated_boundary_derivative: tuple[float, float]
    center_values: tuple[float, float]  # extrapolations at x = 0 from the two finest windows
    extrapolation_change: float = 0.0  # sup over K of the change between the two finest extrapolations

    @property
    def neumann_residual(self) -> float:
        return float(max(abs(v) for v in self.boundary_derivatives[-1]))

    @property
    def center_stability(self) -> float:
        return abs(self.center_values[1] - self.center_values[0])

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "order": self.order,
            "increments": self.increments,
            "boundary_derivatives": [list(v) for v in self.boundary_derivatives],
            "extrapolated_boundary_derivative": list(self.extrapolated_boundary_derivative),
            "center_values": list(self.center_values),
            "neumann_residual": self.neumann_residual,
            "center_stability": self.center_stability,
            "extrapolation_change": self.extrapolation_change,
        }


def one_sided_derivatives(values: np.ndarray, h: float) -> tuple[float, float]:
    """Second-order one-sided first derivatives at both ends of a 1D array."""
    left = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * h)
    right = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * h)
    return float(left), float(right)


def _richardson(eps: list[float], values: list[np.ndarray], terms: int) -> np.ndarray:
    """Eliminate the error terms eps^{1/2}, ..., eps^{(terms-1)/2}; returns the eps -> 0 value."""
    e = np.asarray(eps, dtype=float)
    basis = np.stack([e ** (j / 2) for j in range(terms)], axis=1)
    return np.linalg.solve(basis, np.stack(values))[0]


def neumann_limit(solutions: list[GridSolution], terms: int = 3) -> NeumannLimit:
    """Study a sequence of 1D penalized solutions with decreasing eps.

    The penalized solution differs from the Neumann one by a boundary layer of width
    sqrt(eps), so the error expands in powers of sqrt(eps); the limit is extrapolated by
    eliminating the first ``terms - 1`` of them from the ``terms`` finest solutions.
    """
    if len(solutions) < terms + 1:
        raise ValueError(f"need at least {terms + 1} eps values")
    eps = [s.eps for s in solutions]
    if any(e is None for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps must be positive and strictly decreasing")
    if any(s.dimension != 1 for s in solutions):
        raise ValueError("neumann_limit works on 1D grids")
    op0 = solutions[0].operator
    for s in solutions[1:]:
        if s.operator.points.shape != op0.points.shape or not np.allclose(s.operator.points, op0.points):
            raise ValueError("solutions must share one grid")
    inside = op0.inside
    on_k = [s.values.ravel()[inside] for s in solutions]
    pts = op0.points[inside]
    incs = [float(np.abs(b - a).max()) for a, b in zip(on_k, on_k[1:])]
    if any(b >= a for a, b in zip(incs, incs[1:])):
        raise NonCauchy(f"sup-norm increments not decreasing: {incs}")
    # Observed order: increments scale like eps^p (informational).
    order = float(np.polyfit(np.log(np.asarray(eps[1:])), np.log(np.asarray(incs)), 1)[0])
    h = solutions[0].spacing[0]
    bder = [one_sided_derivatives(v, h) for v in on_k]
    last = _richardson(eps[-terms:], on_k[-terms:], terms)
    prev = _richardson(eps[-terms - 1 : -1], on_k[-terms - 1 : -1], terms)
    center = (float(np.interp(0.0, pts[:, 0], prev)), float(np.interp(0.0, pts[:, 0], last)))
    return NeumannLimit(
        eps=eps,
        points=pts,
        finest=on_k[-1],
        extrapolated=last,
        order=order,
        increments=incs,
        boundary_derivatives=bder,
        extrapolated_boundary_derivative=one_sided_derivatives(last, h),
        center_values=center,
        extrapolation_change=float(np.abs(last - prev).max()),
    )


def save_json(obj: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))
    return path
