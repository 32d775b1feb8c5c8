"""Shell integrals over level sets of g, the co-area identity, and the density of g under mu.

``shell_integral(f, r)`` is the derivative in r of ``int_{g <= r} f dmu``. The Monte
Carlo estimator uses a thin shell of half-width ``h_shell``; the quadrature estimator
(dimension <= 2) evaluates the limit ``h_shell -> 0`` exactly on the level set.

The surface measure on the boundary of K used throughout the package is
``sigma_Sigma = |Dg| sigma_1``, the Gaussian density times the Euclidean surface element
of {g = 1}; it does not depend on how g parametrizes K.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measures import Estimate, level_set_rule, mu_rule, shell_samples
from .reports import ResidualReport
from .rng import stream
from .spectral import SpectralModel, sample_mu

Func = Callable[[np.ndarray], np.ndarray]

DEFAULT_H_SHELL = 0.02


@dataclass(frozen=True)
class ShellEstimator:
    r: float
    h_shell: float = DEFAULT_H_SHELL
    samples: int = 1_000_000
    kind: str = "quadrature"

    def __post_init__(self):
        if self.h_shell <= 0:
            raise ValueError("h_shell must be positive")
        if self.kind not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")


def _kind(model: SpectralModel, kind: str) -> str:
    if kind == "auto":
        return "quadrature" if model.dim <= 2 else "monte_carlo"
    if kind == "quadrature" and model.dim > 2:
        raise ValueError("quadrature shell integrals need dimension <= 2")
    return kind


def shell_integral(
    model: SpectralModel,
    g,
    f: Func,
    r: float,
    h_shell: float = DEFAULT_H_SHELL,
    samples: int = 1_000_000,
    kind: str = "auto",
    seed: int = 0,
    points: np.ndarray | None = None,
) -> Estimate:
    """int_{g = r} f dsigma_r, with an error bound (quadrature) or standard error (MC)."""
    if h_shell <= 0:
        raise ValueError("h_shell must be positive")
    kind = _kind(model, kind)
    if kind == "quadrature":
        rule = level_set_rule(model, g, r)
        if rule.points.shape[0] == 0:
            return Estimate(0.0, 0.0, "quadrature")
        return rule.expect(f)
    if points is None:
        points = sample_mu(model, stream(seed, 0xC0A), samples)
    return shell_samples(g, f, r, h_shell, points)


def surface_integral(
    model: SpectralModel, body, f: Func, kind: str = "auto", h_shell: float = DEFAULT_H_SHELL,
    samples: int = 1_000_000, seed: int = 0, points: np.ndarray | None = None,
) -> Estimate:
    """int_Sigma f dsigma_Sigma with sigma_Sigma = |Dg| sigma_1 on the boundary of K."""
    g = body.g

    def weighted(x):
        return np.asarray(f(x)) * np.linalg.norm(g.grad(x), axis=1)

    return shell_integral(model, g, weighted, 1.0, h_shell, samples, kind, seed, points)


def sigma_curve(
    model: SpectralModel, g, rs: np.ndarray, kind: str = "auto", h_shell: float = DEFAULT_H_SHELL,
    samples: int = 1_000_000, seed: int = 0,
) -> np.ndarray:
    """Rows (r, sigma_r(Sigma_r), error) for the levels ``rs``."""
    kind = _kind(model, kind)
    pts = sample_mu(model, stream(seed, 0xC0A), samples) if kind == "monte_carlo" else None
    one = lambda x: np.ones(len(x))  # noqa: E731
    rows = []
    for r in rs:
        est = shell_integral(model, g, one, float(r), h_shell, samples, kind, seed, pts)
        rows.append((float(r), est.value, est.error))
    return np.asarray(rows)


def write_curve(rows: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, rows, delimiter=",", header="r,value,std_error", comments="", fmt="%.17g")
    return path


def coarea_check(
    model: SpectralModel,
    g,
    f: Func,
    r_max: float,
    shells: int = 400,
    kind: str = "auto",
    rel_tol: float = 0.01,
    r_min: float = 0.0,
    f_sup: float | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
    name: str = "coarea",
) -> ResidualReport:
    """Compare int f dmu with int_{r_min}^{r_max} shell_integral(f, r) dr (trapezoid).

    The tolerance is ``rel_tol |lhs|`` plus the mass of |f| beyond ``r_max`` (or
    ``f_sup * mu(g > r_max)`` when a bound is given).
    """
    kind = _kind(model, kind)
    rs = np.linspace(r_min, r_max, shells + 1)
    # At a level where the set collapses to a point the shell density is a limit; step off it.
    rs_eval = rs.copy()
    rs_eval[0] = r_min + 1e-9 * (r_max - r_min)
    absf = lambda x: np.abs(np.asarray(f(x)))  # noqa: E731
    if kind == "quadrature":
        rule = mu_rule(model, 120)
        lhs = rule.expect(f)
        beyond = rule.expect(lambda x: (absf(x) if f_sup is None else f_sup) * (g.value(x) > r_max))
        vals = np.array([shell_integral(model, g, f, r, kind="quadrature").value for r in rs_eval])
        errs = np.array([shell_integral(model, g, f, r, kind="quadrature").error for r in rs_eval])
        pts = None
    else:
        pts = sample_mu(model, stream(seed, 0xC0A), samples)
        fv = np.asarray(f(pts))
        lhs = Estimate(float(fv.mean()), float(fv.std(ddof=1) / math.sqrt(samples)), "monte_carlo")
        tail_vals = (np.abs(fv) if f_sup is None else f_sup) * (g.value(pts) > r_max)
        beyond = Estimate(float(tail_vals.mean()), 0.0, "monte_carlo")
        est = [shell_integral(model, g, f, r, kind="monte_carlo", points=pts) for r in rs_eval]
        vals = np.array([e.value for e in est])
        errs = np.array([e.error for e in est])
    w = np.full(rs.size, rs[1] - rs[0])
    w[0] = w[-1] = 0.5 * (rs[1] - rs[0])
    rhs = float(w @ vals)
    # Shell estimates at distinct levels are nearly disjoint: errors add in quadrature for MC.
    rhs_err = float(np.sqrt(w**2 @ errs**2)) if kind == "monte_carlo" else float(w @ errs)
    tol = rel_tol * abs(lhs.value) + beyond.value
    return ResidualReport(
        name=name,
        lhs=lhs.value,
        rhs=rhs,
        stat_error=float(math.hypot(lhs.error, rhs_err)) if kind == "monte_carlo" else 0.0,
        tolerance=tol,
        error_kind=kind,
        params={"r_min": r_min, "r_max": r_max, "shells": shells, "kind": kind, "rel_tol": rel_tol,
                "samples": samples if kind == "monte_carlo" else None, "seed": seed},
        extras={"tail": beyond.value, "quadrature_error": float(lhs.error + rhs_err) if kind == "quadrature" else None},
    )


# ------------------------------------------------------------ density of g under mu
def _bspline_cdf(u: np.ndarray) -> np.ndarray:
    """CDF of the cardinal cubic B-spline supported on [-2, 2]."""
    u = np.clip(np.asarray(u, dtype=float), -2.0, 2.0)
    a = np.abs(u)
    # Integral of the kernel from 0 to |u|, then symmetrized.
    inner = 2.0 / 3.0 * a - a**3 / 3.0 + a**4 / 8.0  # |u| <= 1
    outer = 11.0 / 24.0 + ((2 - 1) ** 4 - (2 - a) ** 4) / 24.0  # 1 < |u| <= 2
    half = np.where(a <= 1.0, inner, outer)
    return 0.5 + np.sign(u) * half


def density_weight(model: SpectralModel, g, x: np.ndarray) -> np.ndarray:
    """w(x) such that p(r) = E_mu[H(g - r) w] for the density p of g under mu.

    w = <x, Dg>/|Q^{1/2} Dg|^2 - Tr[Q D^2 g]/|Q^{1/2} Dg|^2 + 2 <D^2 g Q Dg, Q Dg>/|Q^{1/2} Dg|^4.
    """
    lam = model.lambdas
    dg = g.grad(x)
    d2 = g.hess(x)
    qdg = lam * dg
    s = np.sum(dg * qdg, axis=1)
    tr = np.einsum("k,mkk->m", lam, d2)
    curv = np.einsum("mk,mkl,ml->m", qdg, d2, qdg)
    return (np.sum(x * dg, axis=1) - tr) / s + 2.0 * curv / s**2


@dataclass
class HypothesisIntegrals:
    values: dict[str, float]
    errors: dict[str, float]
    tail_index: dict[str, float]
    refinements: dict[str, list[float]]
    diverges: dict[str, bool]

    @property
    def any_divergent(self) -> bool:
        return any(self.diverges.values())

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "errors": self.errors,
            "tail_index": self.tail_index,
            "refinements": self.refinements,
            "diverges": self.diverges,
        }


def hill_tail_index(vals: np.ndarray, top: int | None = None) -> float:
    """Hill estimator of the tail index of |vals|."""
    a = np.sort(np.abs(vals[np.isfinite(vals)]))
    k = top or max(50, int(math.sqrt(a.size)))
    k = min(k, a.size - 1)
    tail = a[-k:]
    thresh = a[-k - 1]
    if thresh <= 0:
        return float("inf")
    spread = float(np.mean(np.log(tail / thresh)))
    return float("inf") if spread <= 0 else 1.0 / spread  # bounded values: no heavy tail


def _refine(vals: np.ndarray, base: int, levels: int) -> list[float]:
    return [float(np.mean(vals[: base * 4**k])) for k in range(levels)]


def hypothesis_integrals(
    model: SpectralModel,
    g,
    samples: int = 1_000_000,
    seed: int = 0,
    levels: int = 4,
    min_tail_index: float = 1.15,
    max_growth: float = 2.0,
) -> HypothesisIntegrals:
    """Monte Carlo estimates of I1, I2, I3 and J1 with divergence flags.

    An integral is flagged when the Hill estimate of its integrand's tail index is below
    ``min_tail_index`` (a mean needs index > 1) or when the estimate grows by more than
    ``max_growth`` over ``levels - 1`` fourfold refinements of the sample size.
    """
    x = sample_mu(model, stream(seed, 0xA1), samples)
    lam = model.lambdas
    dg = g.grad(x)
    d2 = g.hess(x)
    qdg = lam * dg
    s = np.sum(dg * qdg, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrands = {
            "I1": np.einsum("k,mkk->m", lam, d2) / s,
            "I2": np.einsum("mk,mkl,ml->m", qdg, d2, qdg) / s**2,
            "I3": np.sum(x * dg, axis=1) / s,
            "J1": 1.0 / np.sum(lam * x * x, axis=1),
        }
    base = max(1000, samples // 4 ** (levels - 1))
    values, errors, tails, refs, div = {}, {}, {}, {}, {}
    for key, v in integrands.items():
        v = np.where(np.isfinite(v), v, np.inf)
        values[key] = float(np.mean(v))
        errors[key] = float(np.std(v, ddof=1) / math.sqrt(v.size)) if np.all(np.isfinite(v)) else float("inf")
        # Integrands that vanish identically have no tail.
        tails[key] = hill_tail_index(v) if np.any(v != 0) else float("inf")
        refs[key] = _refine(v, base, levels)
        r0, r1 = abs(refs[key][0]), abs(refs[key][-1])
        growth = r1 / r0 if r0 > 0 else (1.0 if r1 == 0 else float("inf"))
        div[key] = bool(tails[key] < min_tail_index or growth > max_growth or not np.isfinite(values[key]))
    return HypothesisIntegrals(values, errors, tails, refs, div)


@dataclass
class DensityEstimate:
    r: float
    value: float
    std_error: float
    h_shell: float
    samples: int

    def to_dict(self) -> dict:
        return {"r": self.r, "value": self.value, "std_error": self.std_error, "h_shell": self.h_shell,
                "samples": self.samples}


def pushforward_density(
    model: SpectralModel,
    g,
    r: float | np.ndarray,
    h_shell: float = DEFAULT_H_SHELL,
    samples: int = 1_000_000,
    seed: int = 0,
    check_hypothesis: bool = True,
    points: np.ndarray | None = None,
) -> DensityEstimate | list[DensityEstimate]:
    """Density of g under mu at level(s) r from the integration-by-parts weight.

    The step function H(g - r) is smoothed by the CDF of a cubic B-spline of total width
    4 h_shell, so p(r) is estimated by E_mu[K((g - r)/h_shell) w(X)].
    """
    from .errors import HypothesisViolated

    if check_hypothesis:
        hyp = hypothesis_integrals(model, g, samples=min(samples, 400_000), seed=seed)
        bad = [k for k in ("I1", "I2", "I3") if hyp.diverges[k]]
        if bad:
            raise HypothesisViolated(f"integrals {bad} diverge under refinement")
    x = points if points is not None else sample_mu(model, stream(seed, 0xD5), samples)
    gv = g.value(x)
    w = density_weight(model, g, x)
    out = []
    for level in np.atleast_1d(r):
        vals = _bspline_cdf((gv - level) / h_shell) * w
        vals = np.where(np.isfinite(vals), vals, 0.0)
        out.append(DensityEstimate(float(level), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)),
                                   h_shell, int(vals.size)))
    return out[0] if np.ndim(r) == 0 else out


def histogram_density(model: SpectralModel, g, r: float, width: float, samples: int, seed: int = 0) -> Estimate:
    """Plain histogram estimate of the density of g at r (cross-check)."""
    gv = g.value(sample_mu(model, stream(seed, 0xB1), samples))
    hit = (np.abs(gv - r) <= width / 2) / width
    return Estimate(float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(samples)), "monte_carlo")
