"""Run configuration: a versioned JSON schema; unknown keys are errors."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .convexbody import Ball, ConvexBody, Ellipsoid, IntegrandBody, QuadraticLevel, WholeSpace
from .errors import ConfigError
from .spectral import SpectralModel
from .testfunctions import (
    Polynomial,
    TestFunction,
    constant,
    coordinate,
    from_polynomial,
    polynomial_family,
    positive_polynomial_family,
    trig,
    trig_family,
)

SCHEMA_VERSION = 1


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(Strict):
    alphas: list[float] | None = None
    preset: Literal["constant", "dirichlet_laplacian"] | None = None
    dim: int | None = Field(default=None, ge=1)
    alpha: float = Field(default=1.0, gt=0)
    length: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.alphas is None) == (self.preset is None):
            raise ValueError("give exactly one of 'alphas' or 'preset'")
        if self.preset is not None and self.dim is None:
            raise ValueError("a preset needs 'dim'")
        if self.alphas is not None and any(not a > 0 for a in self.alphas):
            raise ValueError("alphas must be positive")
        return self

    def build(self) -> SpectralModel:
        if self.alphas is not None:
            return SpectralModel(tuple(self.alphas))
        if self.preset == "constant":
            return SpectralModel.constant(self.dim, self.alpha)
        return SpectralModel.dirichlet_laplacian(self.dim, self.length)


class BodySpec(Strict):
    kind: Literal["ball", "ellipsoid", "integrand", "whole_space"] = "ball"
    radius: float = Field(default=1.0, gt=0)
    weights: list[float] | None = None
    j_coefficients: list[float] | None = None
    rho: float = Field(default=1.0, gt=0)
    length: float = Field(default=1.0, gt=0)

    def build(self, dim: int) -> ConvexBody:
        if self.kind == "ball":
            return Ball(dim, self.radius)
        if self.kind == "ellipsoid":
            if self.weights is None or len(self.weights) != dim:
                raise ConfigError(f"ellipsoid needs {dim} weights")
            return Ellipsoid(self.weights)
        if self.kind == "integrand":
            if self.j_coefficients is None:
                raise ConfigError("integrand body needs j_coefficients")
            return IntegrandBody(dim, self.j_coefficients, self.rho, self.length)
        return WholeSpace(dim)


class FunctionSpec(Strict):
    """A test function or a fixed family of them."""

    kind: Literal["polynomial", "coordinate", "constant", "trig", "family", "radial"]
    terms: list[tuple[list[int], float]] | None = None
    index: int = Field(default=0, ge=0)
    value: float = 1.0
    h: list[float] | None = None
    part: Literal["cos", "sin"] = "cos"
    scale: float = 1.0
    family: Literal["polynomial", "positive_polynomial", "trig"] | None = None
    count: int = Field(default=20, ge=1)
    name: str | None = None

    def build(self, dim: int) -> list[TestFunction]:
        if self.kind == "family":
            if self.family == "polynomial":
                return polynomial_family(dim)
            if self.family == "positive_polynomial":
                return positive_polynomial_family(dim, self.count)
            if self.family == "trig":
                return trig_family(dim)
            raise ConfigError("family kind needs 'family'")
        if self.kind == "polynomial":
            if not self.terms:
                raise ConfigError("polynomial needs 'terms'")
            if any(len(e) != dim for e, _ in self.terms):
                raise ConfigError(f"polynomial exponents must have length {dim}")
            p = Polynomial(dim, {tuple(e): c for e, c in self.terms})
            return [from_polynomial(p, self.name or "poly")]
        if self.kind == "coordinate":
            if self.index >= dim:
                raise ConfigError(f"coordinate index {self.index} out of range for dim {dim}")
            return [coordinate(dim, self.index)]
        if self.kind == "constant":
            return [constant(dim, self.value)]
        if self.kind == "radial":
            e = np.eye(dim, dtype=int)
            p = Polynomial(dim, {tuple(2 * row): 1.0 for row in e})
            return [from_polynomial(p, self.name or "|x|^2")]
        if self.h is None or len(self.h) != dim:
            raise ConfigError(f"trig needs 'h' of length {dim}")
        return [trig(self.h, self.part, self.scale)]

    def build_one(self, dim: int) -> TestFunction:
        fs = self.build(dim)
        if len(fs) != 1:
            raise ConfigError("expected a single function, got a family")
        return fs[0]


class LevelSpec(Strict):
    """Level function for surface computations: the body's g or a diagonal quadratic."""

    kind: Literal["body", "quadratic"] = "body"
    weights: list[float] | None = None

    def build(self, dim: int, body: ConvexBody):
        if self.kind == "body":
            if body.g is None:
                raise ConfigError("the whole space has no level function")
            return body.g
        w = self.weights if self.weights is not None else [1.0] * dim
        if len(w) != dim:
            raise ConfigError(f"quadratic level needs {dim} weights")
        return QuadraticLevel(w)


class SchemeSpec(Strict):
    kind: Literal["penalized", "projected"] = "penalized"
    eps: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    h: float = Field(default=1e-3, gt=0)
    T: float = Field(default=1.0, gt=0)
    paths: int = Field(default=1000, ge=1)
    x0: list[float] | None = None
    stride: int | None = Field(default=None, ge=1)

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("eps values must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return v


class EstimatorSpec(Strict):
    method: Literal["auto", "quadrature", "monte_carlo"] = "auto"
    samples: int = Field(default=1_000_000, ge=100)
    h_shell: float = Field(default=0.02, gt=0)
    order: int = Field(default=64, ge=4)
    mala_draws: int = Field(default=2000, ge=10)
    mala_chains: int = Field(default=32, ge=2)
    mala_burn_in: int = Field(default=2000, ge=0)
    mala_thin: int = Field(default=10, ge=1)


class DriftConfig(Strict):
    kind: Literal["constant", "gradient", "bounded"] = "constant"
    vector: list[float] | None = None
    potential: FunctionSpec | None = None
    components: list[FunctionSpec] | None = None
    clamp: float | None = Field(default=None, gt=0)
    sup: float | None = Field(default=None, ge=0)

    def build(self, dim: int):
        from .perturb import DriftSpec

        if self.kind == "constant":
            v = self.vector if self.vector is not None else [0.0] * dim
            if len(v) != dim:
                raise ConfigError(f"drift vector needs length {dim}")
            return DriftSpec.constant(v)
        if self.kind == "gradient":
            if self.potential is None:
                raise ConfigError("gradient drift needs 'potential'")
            return DriftSpec.gradient(self.potential.build_one(dim), dim)
        if not self.components or len(self.components) != dim or self.clamp is None:
            raise ConfigError(f"bounded drift needs {dim} components and 'clamp'")
        comps = [c.build_one(dim) for c in self.components]
        c = float(self.clamp)

        def field(x):
            return np.clip(np.stack([f(x) for f in comps], axis=1), -c, c)

        # Clamping each component bounds |F| by clamp * sqrt(dim); a tighter declared
        # value is accepted and checked on samples by DriftSpec.validate.
        sup = self.sup if self.sup is not None else c * float(np.sqrt(dim))
        return DriftSpec.bounded(field, sup, dim, name="clamped_polynomial")


class CheckSpec(Strict):
    check: str
    params: dict[str, Any] = Field(default_factory=dict)


class ResolventSpec(Strict):
    lam: float = Field(default=1.0, gt=0)
    f: FunctionSpec = FunctionSpec(kind="coordinate")
    method: Literal["grid", "monte_carlo", "neumann"] = "grid"
    eps: float | None = Field(default=None, gt=0)
    points: list[list[float]] | None = None
    grid_nodes: int | None = Field(default=None, ge=16)
    target_tol: float = Field(default=1e-2, gt=0)


class SurfaceSpec(Strict):
    level: LevelSpec = LevelSpec()
    f: FunctionSpec = FunctionSpec(kind="constant")
    r: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    density: bool = True
    r_max: float | None = Field(default=None, gt=0)


class PerturbSpec(Strict):
    drift: DriftConfig = DriftConfig(kind="constant")
    lam: float = Field(default=1.0, gt=0)
    f: FunctionSpec = FunctionSpec(kind="coordinate")
    grid_nodes: int | None = Field(default=None, ge=16)


class RunConfig(Strict):
    schema_version: Literal[1]
    seed: int = Field(ge=0, lt=2**64)
    model: ModelSpec = ModelSpec(preset="constant", dim=1)
    body: BodySpec = BodySpec()
    scheme: SchemeSpec = SchemeSpec()
    estimator: EstimatorSpec = EstimatorSpec()
    suite: list[CheckSpec] = Field(default_factory=list)
    suite_name: str | None = None
    resolvent: ResolventSpec = ResolventSpec()
    surface: SurfaceSpec = SurfaceSpec()
    perturb: PerturbSpec = PerturbSpec()
    output_dir: str = "runs/latest"
    jobs: int = Field(default=1, ge=1)

    def build_model(self) -> SpectralModel:
        return self.model.build()

    def build_body(self) -> ConvexBody:
        return self.body.build(self.build_model().dim)


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or an empty default when ``path`` is None) and apply overrides."""
    data: dict = {"schema_version": SCHEMA_VERSION}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return parse_config(data)
