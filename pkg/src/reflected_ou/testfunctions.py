"""Test functions with analytic derivatives and the fixed, versioned families used by checks."""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

FAMILY_VERSION = "tf-v1"

Exps = tuple[int, ...]


class Polynomial:
    """Multivariate polynomial stored as {exponent tuple: coefficient}."""

    def __init__(self, dim: int, terms: dict[Exps, float] | Iterable[tuple[float, Exps]] = ()):
        self.dim = int(dim)
        acc: dict[Exps, float] = {}
        items = terms.items() if isinstance(terms, dict) else ((e, c) for c, e in terms)
        for exps, coef in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.dim or min(exps, default=0) < 0:
                raise ValueError(f"bad exponent tuple {exps} for dimension {self.dim}")
            acc[exps] = acc.get(exps, 0.0) + float(coef)
        self.terms = {e: c for e, c in acc.items() if c != 0.0}

    @classmethod
    def constant(cls, dim: int, c: float) -> Polynomial:
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def coordinate(cls, dim: int, k: int) -> Polynomial:
        e = [0] * dim
        e[k] = 1
        return cls(dim, {tuple(e): 1.0})

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dim, float(other))
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.dim, out)

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial(self.dim, {e: c * float(other) for e, c in self.terms.items()})
        out: dict[Exps, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.dim, out)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __pow__(self, k: int):
        out = Polynomial.constant(self.dim, 1.0)
        for _ in range(k):
            out = out * self
        return out

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def derivative(self, k: int) -> Polynomial:
        out: dict[Exps, float] = {}
        for e, c in self.terms.items():
            if e[k] > 0:
                e2 = list(e)
                e2[k] -= 1
                out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * e[k]
        return Polynomial(self.dim, out)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for e, c in self.terms.items():
            mono = np.full(x.shape[0], c)
            for k, p in enumerate(e):
                if p:
                    mono = mono * x[:, k] ** p
            out += mono
        return out

    def to_dict(self) -> dict:
        return {"dim": self.dim, "terms": [[list(e), c] for e, c in sorted(self.terms.items())]}


@dataclass
class TestFunction:
    """Smooth test function with analytic first and second derivatives.

    ``sup_abs`` and ``sup_grad`` are optional declared bounds on the region where
    the function is integrated; :meth:`check_bounds` verifies them on samples.
    """

    __test__ = False  # not a pytest class

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    sup_abs: float | None = None
    sup_grad: float | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.value(x)

    def laplacian(self, x) -> np.ndarray:
        return np.trace(self.hess(x), axis1=1, axis2=2)

    def check_bounds(self, x: np.ndarray, slack: float = 1e-9) -> None:
        if self.sup_abs is not None:
            v = np.max(np.abs(self.value(x)), initial=0.0)
            if v > self.sup_abs * (1 + slack) + slack:
                raise ValueError(f"{self.name}: sampled |phi| = {v:g} exceeds declared {self.sup_abs:g}")
        if self.sup_grad is not None:
            v = np.max(np.linalg.norm(self.grad(x), axis=1), initial=0.0)
            if v > self.sup_grad * (1 + slack) + slack:
                raise ValueError(f"{self.name}: sampled |Dphi| = {v:g} exceeds declared {self.sup_grad:g}")

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, **self.meta}


def from_polynomial(p: Polynomial, name: str) -> TestFunction:
    n = p.dim
    d1 = [p.derivative(k) for k in range(n)]
    d2 = [[d1[k].derivative(l) for l in range(n)] for k in range(n)]

    def grad(x):
        return np.stack([d(x) for d in d1], axis=1)

    def hess(x):
        return np.stack([np.stack([d(x) for d in row], axis=1) for row in d2], axis=1)

    return TestFunction(name, p, grad, hess, kind="polynomial", meta={"polynomial": p.to_dict()})


def constant(dim: int, c: float = 1.0) -> TestFunction:
    tf = from_polynomial(Polynomial.constant(dim, c), f"const({c:g})")
    tf.sup_abs, tf.sup_grad = abs(c), 0.0
    return tf


def coordinate(dim: int, k: int = 0) -> TestFunction:
    return from_polynomial(Polynomial.coordinate(dim, k), f"x{k + 1}")


def trig(h, part: str = "cos", scale: float = 1.0) -> TestFunction:
    """Real (``cos``) or imaginary (``sin``) part of scale * exp(i <h, x>)."""
    h = np.asarray(h, dtype=float)
    if part not in ("cos", "sin"):
        raise ValueError("part must be 'cos' or 'sin'")
    f, df = (np.cos, lambda t: -np.sin(t)) if part == "cos" else (np.sin, np.cos)
    d2f = (lambda t: -np.cos(t)) if part == "cos" else (lambda t: -np.sin(t))

    def value(x):
        return scale * f(np.atleast_2d(x) @ h)

    def grad(x):
        return scale * df(np.atleast_2d(x) @ h)[:, None] * h

    def hess(x):
        return scale * d2f(np.atleast_2d(x) @ h)[:, None, None] * np.outer(h, h)

    return TestFunction(
        f"{part}<h,x>",
        value,
        grad,
        hess,
        kind="exponential",
        sup_abs=abs(scale),
        sup_grad=abs(scale) * float(np.linalg.norm(h)),
        meta={"h": h.tolist(), "part": part, "scale": scale},
    )


def polynomial_family(dim: int) -> list[TestFunction]:
    """Ten fixed polynomials of degree at most four.

    They use the first two coordinates; in dimension one both slots refer to x1.
    """
    a = Polynomial.coordinate(dim, 0)
    b = Polynomial.coordinate(dim, min(1, dim - 1))
    one = Polynomial.constant(dim, 1.0)
    polys = [
        ("1", one),
        ("a", a),
        ("a^2", a**2),
        ("a^3-a", a**3 - a),
        ("a^4", a**4),
        ("1+a+a^2/2", one + a + 0.5 * a**2),
        ("ab", a * b),
        ("a^2b-b", a**2 * b - b),
        ("(a^2+b^2)^2", (a**2 + b**2) ** 2),
        ("1/2-a+b^3", 0.5 * one - a + b**3),
    ]
    return [from_polynomial(p, f"{FAMILY_VERSION}/poly/{name}") for name, p in polys]


def positive_polynomial_family(dim: int, count: int = 20, seed: int = 271828) -> list[TestFunction]:
    """Polynomials c + q(x)^2 with c in [0.2, 1] and q a random quadratic; all >= c > 0."""
    rng = np.random.default_rng([seed, dim, count])
    out = []
    for i in range(count):
        q = Polynomial.constant(dim, rng.uniform(-1, 1))
        for k in range(dim):
            q = q + rng.uniform(-1, 1) * Polynomial.coordinate(dim, k)
        for _ in range(2):
            k, m = rng.integers(0, dim, size=2)
            q = q + 0.5 * rng.uniform(-1, 1) * Polynomial.coordinate(dim, k) * Polynomial.coordinate(dim, m)
        p = rng.uniform(0.2, 1.0) + q * q
        out.append(from_polynomial(p, f"{FAMILY_VERSION}/positive/{i}"))
    return out


def trig_family(dim: int) -> list[TestFunction]:
    """Real and imaginary parts of exp(i<h,x>) for a small fixed lattice of h."""
    hs = []
    for k in range(min(dim, 3)):
        for m in (1, 2):
            h = np.zeros(dim)
            h[k] = m
            hs.append(h)
    if dim > 1:
        hs.append(np.r_[1.0, 1.0, np.zeros(dim - 2)])
    return [trig(h, part) for h in hs for part in ("cos", "sin")]


def bounds_on_body(tf: TestFunction, points: np.ndarray, margin: float = 1.05) -> TestFunction:
    """Declare sup bounds from samples covering the integration region (with margin)."""
    tf.sup_abs = margin * float(np.max(np.abs(tf.value(points))))
    tf.sup_grad = margin * float(np.max(np.linalg.norm(tf.grad(points), axis=1)))
    return tf
