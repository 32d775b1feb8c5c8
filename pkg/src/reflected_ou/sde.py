"""Time stepping for the penalized SDE and a projected reference scheme.

Both schemes start from the exact Ornstein-Uhlenbeck transition. The penalized
scheme follows it with the exact proximal map of ``h * U_eps``; the projected scheme
follows it with the projection onto K.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convexbody import ConvexBody
from .errors import SolverDiverged
from .rng import PathNoise, block_steps
from .spectral import SpectralModel, ou_coefficients, ou_step_exact


@dataclass(frozen=True)
class Scheme:
    """``penalized`` with a finite or infinite eps, or ``projected``."""

    kind: str
    eps: float | None = None

    def __post_init__(self):
        if self.kind == "penalized":
            if self.eps is None or not self.eps > 0:
                raise ValueError("penalized scheme needs eps > 0")
        elif self.kind == "projected":
            if self.eps is not None:
                raise ValueError("projected scheme takes no eps")
        else:
            raise ValueError(f"unknown scheme {self.kind!r}")

    @classmethod
    def penalized(cls, eps: float) -> Scheme:
        return cls("penalized", float(eps))

    @classmethod
    def projected(cls) -> Scheme:
        return cls("projected")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eps": self.eps}


def proximal_penalty(body: ConvexBody, y: np.ndarray, eps: float, h: float) -> np.ndarray:
    """Exact implicit step for the penalty: y + h/(h + eps) (Pi_K(y) - y)."""
    if math.isinf(eps):
        return y
    p, _ = body.project_points(y)
    return y + (h / (h + eps)) * (p - y)


def step_penalized(
    model: SpectralModel,
    body: ConvexBody,
    eps: float,
    x: np.ndarray,
    h: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    y = np.atleast_2d(ou_step_exact(model, x, h, rng=rng, noise=noise))
    out = proximal_penalty(body, y, eps, h)
    return out[0] if np.ndim(x) == 1 else out


def step_projected(
    model: SpectralModel,
    body: ConvexBody,
    x: np.ndarray,
    h: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    y = np.atleast_2d(ou_step_exact(model, x, h, rng=rng, noise=noise))
    out, _ = body.project_points(y)
    return out[0] if np.ndim(x) == 1 else out


class Accumulator:
    """Per-chunk observer of the simulation; ``update`` sees states of shape (S, P, n)."""

    def update(self, step: int, x: np.ndarray) -> None:  # pragma: no cover - interface
        raise NotImplementedError

    def result(self) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


def _advance(model, body, scheme, x, noise, decay, std, h):
    s, p, n = x.shape
    y = (x * decay + std * noise[None, :, :]).reshape(s * p, n)
    if scheme.kind == "penalized":
        y = proximal_penalty(body, y, scheme.eps, h)
    else:
        y, _ = body.project_points(y)
    return y.reshape(s, p, n)


def _run_chunk(model, body, scheme, x0, h, steps, seed, path_ids, make_acc, tag):
    noise_src = PathNoise(seed, path_ids, model.dim, tag=tag)
    decay, std = ou_coefficients(model, h)
    x = np.broadcast_to(x0[:, None, :], (x0.shape[0], len(path_ids), model.dim)).copy()
    acc = make_acc(x0.shape[0], len(path_ids))
    acc.update(0, x)
    per_block = block_steps(len(path_ids), model.dim)
    k = 0
    while k < steps:
        b = min(per_block, steps - k)
        block = noise_src.next_block(b)
        for j in range(b):
            try:
                x = _advance(model, body, scheme, x, block[j], decay, std, h)
            except SolverDiverged as exc:
                raise SolverDiverged(
                    f"{exc} (step {k + j + 1}, paths {path_ids[0]}..{path_ids[-1]})"
                ) from exc
            acc.update(k + j + 1, x)
        k += b
    return acc.result()


def run_paths(
    model: SpectralModel,
    body: ConvexBody,
    scheme: Scheme,
    x0: np.ndarray,
    h: float,
    steps: int,
    seed: int,
    paths: int,
    make_acc: Callable[[int, int], Accumulator],
    jobs: int = 1,
    tag: int = 0,
) -> np.ndarray:
    """Simulate ``paths`` trajectories from each start in ``x0`` (S, n).

    All starts share each path's noise (common random numbers). Accumulator results
    are concatenated along axis 1 (the path axis). Output does not depend on ``jobs``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if h <= 0 or steps < 0 or paths < 1:
        raise ValueError("need h > 0, steps >= 0, paths >= 1")
    ids = np.arange(paths)
    nchunks = max(1, min(paths, int(jobs)))
    chunks = [c for c in np.array_split(ids, nchunks) if c.size]

    def work(c):
        return _run_chunk(model, body, scheme, x0, h, steps, seed, c, make_acc, tag)

    if len(chunks) == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(work, chunks))
    return np.concatenate(parts, axis=1)


class _StoreStates(Accumulator):
    def __init__(self, starts, paths, stride, steps, dim):
        self.keep = sorted(set(range(0, steps + 1, stride)) | {steps})
        self.index = {s: i for i, s in enumerate(self.keep)}
        self.out = np.empty((starts, paths, len(self.keep), dim))

    def update(self, step, x):
        i = self.index.get(step)
        if i is not None:
            self.out[:, :, i, :] = x

    def result(self):
        return self.out


@dataclass
class PathEnsemble:
    scheme: Scheme
    step: float
    horizon: float
    paths: int
    seed: int
    x0: np.ndarray
    time_grid: np.ndarray
    states: np.ndarray  # (paths, stored times, n)
    stride: int
    model: dict = field(default_factory=dict)
    body: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {
            "scheme": self.scheme.to_dict(),
            "h": self.step,
            "T": self.horizon,
            "paths": self.paths,
            "seed": self.seed,
            "x0": self.x0.tolist(),
            "stride": self.stride,
            "stored_times": int(self.time_grid.size),
            "model": self.model,
            "body": self.body,
        }

    def write(self, directory: str | Path, stem: str = "ensemble") -> tuple[Path, Path]:
        """Columnar CSV (path_id, t, x1..xn) plus a JSON manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        n = self.states.shape[2]
        p, t = np.meshgrid(np.arange(self.paths), self.time_grid, indexing="ij")
        table = np.column_stack([p.ravel(), t.ravel(), self.states.reshape(-1, n)])
        csv = directory / f"{stem}.csv"
        header = ",".join(["path_id", "t"] + [f"x{k + 1}" for k in range(n)])
        np.savetxt(csv, table, delimiter=",", header=header, comments="", fmt=["%d", "%.10g"] + ["%.17g"] * n)
        man = directory / f"{stem}.manifest.json"
        man.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return csv, man


def simulate(
    model: SpectralModel,
    body: ConvexBody,
    scheme: Scheme,
    x0: np.ndarray,
    T: float,
    h: float,
    paths: int,
    seed: int,
    stride: int | None = None,
    full_storage: bool = False,
    jobs: int = 1,
) -> PathEnsemble:
    """Simulate ``paths`` trajectories on the uniform grid 0, h, ..., T."""
    if not (T >= h > 0) or paths < 1:
        raise ValueError("need T >= h > 0 and paths >= 1")
    steps = int(round(T / h))
    if abs(steps * h - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a multiple of h={h}")
    x0 = np.asarray(x0, dtype=float).reshape(1, model.dim)
    if full_storage:
        stride = 1
    elif stride is None:
        stride = max(1, math.ceil(T / (1000 * h)))
    out = run_paths(
        model, body, scheme, x0, h, steps, seed, paths,
        lambda s, p: _StoreStates(s, p, stride, steps, model.dim), jobs=jobs,
    )[0]
    keep = sorted(set(range(0, steps + 1, stride)) | {steps})
    return PathEnsemble(
        scheme=scheme,
        step=h,
        horizon=steps * h,
        paths=paths,
        seed=seed,
        x0=x0[0],
        time_grid=np.asarray(keep) * h,
        states=out,
        stride=stride,
        model=model.to_dict(),
        body=body.to_dict(),
    )
