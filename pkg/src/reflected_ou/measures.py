"""Integration backends for mu, nu (mu conditioned on K) and the penalized measure nu_eps.

Every backend exposes ``expect(func) -> Estimate``. Quadrature rules report an error
bound (difference to a rule of half the order); sample sets report a standard error.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .convexbody import ConvexBody, WholeSpace
from .errors import ChainNotMixed, EmptyShell, RejectionStarved
from .spectral import SpectralModel, sample_mu

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float
    kind: str

    def __add__(self, other: Estimate) -> Estimate:
        return combine([self, other], [1.0, 1.0])

    def __sub__(self, other: Estimate) -> Estimate:
        return combine([self, other], [1.0, -1.0])

    def scale(self, c: float) -> Estimate:
        return Estimate(c * self.value, abs(c) * self.error, self.kind)


def combine(parts: list[Estimate], coefs: list[float]) -> Estimate:
    """Linear combination; errors add in quadrature for MC and linearly for quadrature."""
    value = float(sum(c * p.value for c, p in zip(coefs, parts)))
    kinds = {p.kind for p in parts}
    errs = [abs(c) * p.error for c, p in zip(coefs, parts)]
    if kinds == {"quadrature"}:
        return Estimate(value, float(sum(errs)), "quadrature")
    return Estimate(value, float(np.sqrt(np.sum(np.square(errs)))), "monte_carlo")


def ratio(num: Estimate, den: Estimate) -> Estimate:
    """num/den with first-order error propagation (independent errors)."""
    v = num.value / den.value
    if num.kind == den.kind == "quadrature":
        err = abs(num.error / den.value) + abs(v * den.error / den.value)
        return Estimate(v, err, "quadrature")
    err = np.hypot(num.error / den.value, v * den.error / den.value)
    return Estimate(v, float(err), "monte_carlo")


@dataclass
class QuadratureRule:
    """Weighted nodes; ``coarse`` is a lower-order rule used for the error bound."""

    points: np.ndarray
    weights: np.ndarray
    coarse: tuple[np.ndarray, np.ndarray] | None = None
    kind: str = "quadrature"
    meta: dict = field(default_factory=dict)

    def expect(self, func: Func) -> Estimate:
        v = float(self.weights @ np.asarray(func(self.points), dtype=float))
        err = 0.0
        if self.coarse is not None:
            pc, wc = self.coarse
            err = abs(v - float(wc @ np.asarray(func(pc), dtype=float)))
        return Estimate(v, err, "quadrature")


@dataclass
class SampleSet:
    """Monte Carlo sample; ``groups`` holds one chain label per sample for MCMC output."""

    points: np.ndarray
    groups: np.ndarray | None = None
    kind: str = "monte_carlo"
    meta: dict = field(default_factory=dict)

    def expect(self, func: Func) -> Estimate:
        vals = np.asarray(func(self.points), dtype=float)
        if self.groups is None:
            return Estimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size)), "monte_carlo")
        labels, inv = np.unique(self.groups, return_inverse=True)
        means = np.bincount(inv, weights=vals) / np.bincount(inv)
        return Estimate(float(vals.mean()), float(means.std(ddof=1) / np.sqrt(labels.size)), "monte_carlo")


Integrator = QuadratureRule | SampleSet


# ----------------------------------------------------------------------------- grids
def _gauss_legendre(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def _composite(breaks: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = zip(*(_gauss_legendre(a, b, m) for a, b in zip(breaks[:-1], breaks[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def _hermite_tensor(model: SpectralModel, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.hermite.hermgauss(order)
    nodes = np.sqrt(2.0) * t
    w = w / np.sqrt(np.pi)
    grids = np.meshgrid(*([nodes] * model.dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * model.dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) * model.sqrt_lambdas
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


def mu_rule(model: SpectralModel, order: int = 60) -> QuadratureRule:
    """Tensor Gauss-Hermite rule for mu (dimension <= 3)."""
    if model.dim > 3:
        raise ValueError("tensor quadrature for mu is limited to dimension <= 3")
    return QuadratureRule(*_hermite_tensor(model, order), coarse=_hermite_tensor(model, order // 2))


def _interval_nodes(model: SpectralModel, body: ConvexBody, eps: float | None, m: int):
    """Nodes/weights (Lebesgue) on K, extended by exterior panels when eps is given."""
    a, b = body.interval()
    xs, ws = _composite(np.linspace(a, b, 5), m)
    if eps is not None:
        s = 1.0 / np.sqrt(model.alphas[0] + 1.0 / eps)
        tail = np.array([0, 0.5, 1, 2, 4, 7, 11, 16, 24]) * s
        xr, wr = _composite(b + tail, m)
        xl, wl = _composite(a - tail[::-1], m)
        xs, ws = np.concatenate([xl, xs, xr]), np.concatenate([wl, ws, wr])
    return xs[:, None], ws


def _polar_nodes(model, body, eps, m_theta, m_r):
    """Polar nodes around the origin covering K (and an exterior band when eps is given)."""
    theta = 2 * np.pi * np.arange(m_theta) / m_theta
    u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    s_b = body.boundary_radius(u)
    t, w = np.polynomial.legendre.leggauss(m_r)
    frac, wfrac = 0.5 * (t + 1), 0.5 * w
    # Radial panels: [0, s_b] split in two, then exterior panels scaled by the penalty width.
    pts, wts = [], []
    panels = [(0.0, 0.5), (0.5, 1.0)]
    for lo, hi in panels:
        s = s_b[:, None] * (lo + (hi - lo) * frac[None, :])
        ds = s_b[:, None] * (hi - lo) * wfrac[None, :]
        pts.append(s)
        wts.append(ds * s)
    if eps is not None:
        width = 1.0 / np.sqrt(model.alphas[0] + 1.0 / eps)
        tail = np.array([0, 0.5, 1, 2, 4, 7, 11, 16, 24]) * width
        for lo, hi in zip(tail[:-1], tail[1:]):
            s = s_b[:, None] + lo + (hi - lo) * frac[None, :]
            pts.append(s)
            wts.append((hi - lo) * wfrac[None, :] * s)
    s = np.concatenate(pts, axis=1)
    w = np.concatenate(wts, axis=1) * (2 * np.pi / m_theta)
    xy = s[..., None] * u[:, None, :]
    return xy.reshape(-1, 2), w.ravel()


def _restricted_rule(model, body, eps, order):
    """Normalized rule for nu (eps None) or nu_eps, plus the unnormalized mass."""

    def build(m):
        if model.dim == 1:
            x, w = _interval_nodes(model, body, eps, m)
        elif model.dim == 2:
            x, w = _polar_nodes(model, body, eps, 4 * m, m)
        else:
            raise ValueError("quadrature for restricted measures needs dimension <= 2")
        dens = model.density(x)
        if eps is not None:
            dens = dens * np.exp(-body.distance(x) ** 2 / eps)
        w = w * dens
        mass = w.sum()
        return x, w / mass, mass

    x, w, mass = build(order)
    xc, wc, mass_c = build(order // 2)
    meta = {"mass": float(mass), "mass_error": float(abs(mass - mass_c))}
    return QuadratureRule(x, w, coarse=(xc, wc), meta=meta)


def nu_rule(model: SpectralModel, body: ConvexBody, order: int = 64) -> QuadratureRule:
    """Quadrature for nu = mu(. | K); ``meta['mass']`` is mu(K)."""
    if isinstance(body, WholeSpace):
        rule = mu_rule(model, order)
        rule.meta = {"mass": 1.0, "mass_error": 0.0}
        return rule
    return _restricted_rule(model, body, None, order)


def nu_eps_rule(model: SpectralModel, body: ConvexBody, eps: float, order: int = 64) -> QuadratureRule:
    """Quadrature for nu_eps proportional to exp(-d_K^2/eps) mu."""
    if isinstance(body, WholeSpace):
        return nu_rule(model, body, order)
    return _restricted_rule(model, body, eps, order)


# -------------------------------------------------------------------- level sets
def _radial_level(g, r: float, u: np.ndarray) -> np.ndarray:
    """s > 0 with g(s u) = r along each unit direction u (g increasing along rays)."""
    lo = np.zeros(u.shape[0])
    hi = np.ones(u.shape[0])
    while True:
        grow = g.value(hi[:, None] * u) < r
        if not grow.any():
            break
        hi[grow] *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = g.value(mid[:, None] * u) < r
        lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
        if np.max(hi - lo) <= 4e-16 * np.max(hi):
            break
    return 0.5 * (lo + hi)


def level_set_rule(model: SpectralModel, g, r: float, order: int = 256) -> QuadratureRule:
    """Nodes on {g = r} with weights of the co-area measure sigma_r (unnormalized).

    Dimension one: roots y of g = r with weight p(y)/|g'(y)|. Dimension two: polar
    parametrization around the origin with weight p(y) s / <Dg(y), u> dtheta.
    """
    if model.dim == 1:
        span = 40.0 * float(model.sqrt_lambdas[0]) + 10.0
        grid = np.linspace(-span, span, 40001)
        vals = g.value(grid[:, None]) - r
        roots = []
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]:
            if vals[i] == 0:
                roots.append(grid[i])
            elif vals[i + 1] != 0:
                roots.append(brentq(lambda s: float(g.value(np.array([[s]]))[0]) - r, grid[i], grid[i + 1], xtol=1e-15))
        y = np.unique(np.array(roots, dtype=float))[:, None]
        if y.size == 0:
            return QuadratureRule(np.zeros((0, 1)), np.zeros(0), coarse=(np.zeros((0, 1)), np.zeros(0)))
        w = model.density(y) / np.abs(g.grad(y)[:, 0])
        return QuadratureRule(y, w, coarse=(y, w))
    if model.dim == 2:
        def build(m):
            if float(g.value(np.zeros(2))[0]) >= r:
                return np.zeros((0, 2)), np.zeros(0)
            theta = 2 * np.pi * np.arange(m) / m
            u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
            s = _radial_level(g, r, u)
            y = s[:, None] * u
            w = model.density(y) * s / np.sum(g.grad(y) * u, axis=1) * (2 * np.pi / m)
            return y, w

        return QuadratureRule(*build(order), coarse=build(order // 2))
    raise ValueError("level-set quadrature needs dimension <= 2")


# --------------------------------------------------------------------- sampling
def mu_samples(model: SpectralModel, rng: np.random.Generator, count: int) -> SampleSet:
    return SampleSet(sample_mu(model, rng, count))


def nu_rejection(
    model: SpectralModel, body: ConvexBody, rng: np.random.Generator, count: int
) -> SampleSet:
    """Rejection sampling of nu from ``count`` draws of mu; ``meta`` carries the mass estimate."""
    x = sample_mu(model, rng, count)
    inside = np.asarray(body.contains(x))
    rate = float(inside.mean())
    if rate < 1e-3:
        raise RejectionStarved(f"acceptance rate {rate:.2e} below 1e-3")
    lo, hi = wilson_interval(int(inside.sum()), count)
    return SampleSet(
        x[inside],
        meta={"mass": rate, "mass_error": float(np.sqrt(rate * (1 - rate) / count)), "wilson": (lo, hi),
              "draws": count},
    )


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return float(c - half), float(c + half)


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction for an array (chains, draws)."""
    c, n = chains.shape
    half = n // 2
    parts = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m = parts.shape[1]
    w = parts.var(axis=1, ddof=1).mean()
    b = m * parts.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0
    var = (m - 1) / m * w + b / m
    return float(np.sqrt(var / w))


def nu_eps_mala(
    model: SpectralModel,
    body: ConvexBody,
    eps: float,
    rng: np.random.Generator,
    draws: int = 2000,
    chains: int = 32,
    burn_in: int = 2000,
    thin: int = 10,
    rhat_max: float = 1.05,
) -> SampleSet:
    """Preconditioned MALA for nu_eps; raises ChainNotMixed when split-R-hat > ``rhat_max``."""
    lam = model.lambdas
    sq = np.sqrt(lam)

    def logp_grad(x):
        p, d = body.project_points(x)
        lp = -0.5 * np.sum(x * x / lam, axis=1) - d * d / eps
        gr = -x / lam - (2.0 / eps) * (x - p)
        return lp, gr

    x = body.project_points(sample_mu(model, rng, chains))[0]
    lp, gr = logp_grad(x)
    tau = min(1.0, 0.5 * np.sqrt(eps / lam.max()))
    acc_hist = []

    def step(x, lp, gr, tau):
        mean_x = x + 0.5 * tau**2 * lam * gr
        y = mean_x + tau * sq * rng.standard_normal(x.shape)
        lpy, gry = logp_grad(y)
        mean_y = y + 0.5 * tau**2 * lam * gry
        q_xy = -np.sum((y - mean_x) ** 2 / lam, axis=1) / (2 * tau**2)
        q_yx = -np.sum((x - mean_y) ** 2 / lam, axis=1) / (2 * tau**2)
        log_a = lpy - lp + q_yx - q_xy
        accept = np.log(rng.uniform(size=x.shape[0])) < log_a
        x = np.where(accept[:, None], y, x)
        lp = np.where(accept, lpy, lp)
        gr = np.where(accept[:, None], gry, gr)
        return x, lp, gr, accept.mean()

    for i in range(burn_in):
        x, lp, gr, a = step(x, lp, gr, tau)
        acc_hist.append(a)
        if (i + 1) % 50 == 0:
            rate = float(np.mean(acc_hist[-50:]))
            tau *= float(np.exp(np.clip(rate - 0.574, -0.5, 0.5)))
    kept = np.empty((draws, chains, model.dim))
    acc = 0.0
    for i in range(draws):
        for _ in range(thin):
            x, lp, gr, a = step(x, lp, gr, tau)
            acc += a
        kept[i] = x
    acc /= draws * thin
    traces = np.concatenate([kept.transpose(1, 0, 2), body.distance(kept.reshape(-1, model.dim)).reshape(draws, chains).T[..., None]], axis=2)
    rhat = max(split_rhat(traces[:, :, k]) for k in range(traces.shape[2]))
    if rhat > rhat_max:
        raise ChainNotMixed(f"split R-hat {rhat:.3f} exceeds {rhat_max}")
    pts = kept.transpose(1, 0, 2).reshape(-1, model.dim)
    groups = np.repeat(np.arange(chains), draws)
    return SampleSet(pts, groups=groups, meta={"rhat": rhat, "acceptance": acc, "step": tau})


def shell_samples(
    g, f: Func, r: float, h_shell: float, points: np.ndarray
) -> Estimate:
    """(1/2h) E_mu[f 1(|g - r| <= h)] from mu samples ``points``."""
    gv = g.value(points)
    hit = np.abs(gv - r) <= h_shell
    if not hit.any():
        raise EmptyShell(f"no samples within {h_shell:g} of level {r:g}")
    vals = np.zeros(points.shape[0])
    vals[hit] = f(points[hit]) / (2 * h_shell)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size)), "monte_carlo")
