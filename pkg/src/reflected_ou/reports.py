"""Residual reports shared by every verification routine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _clean(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class ResidualReport:
    """One check. ``kind`` is ``identity`` (residual = lhs - rhs) or ``inequality``
    (residual = max(lhs - rhs, 0), the amount by which lhs <= rhs is violated)."""

    name: str
    lhs: float
    rhs: float
    stat_error: float
    tolerance: float
    kind: str = "identity"
    error_kind: str = "quadrature"
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        d = self.lhs - self.rhs
        return max(d, 0.0) if self.kind == "inequality" else d

    @property
    def passed(self) -> bool:
        r = self.residual
        return bool(math.isfinite(r) and abs(r) <= max(self.tolerance, 3.0 * self.stat_error))

    def to_dict(self) -> dict:
        return _clean(
            {
                "name": self.name,
                "kind": self.kind,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "residual": self.residual,
                "stat_error": self.stat_error,
                "error_kind": self.error_kind,
                "tolerance": self.tolerance,
                "passed": self.passed,
                "params": self.params,
                "extras": self.extras,
            }
        )

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (
            f"{mark} {self.name}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
            f"residual={self.residual:.3g} err={self.stat_error:.2g} tol={self.tolerance:.2g}"
        )


def flag_report(name: str, ok: bool, params=None, extras=None) -> ResidualReport:
    """Encode a yes/no criterion (e.g. monotonicity) as an inequality 0 <= 0 or 1 <= 0."""
    return ResidualReport(
        name=name,
        lhs=0.0 if ok else 1.0,
        rhs=0.0,
        stat_error=0.0,
        tolerance=0.0,
        kind="inequality",
        error_kind="exact",
        params=params or {},
        extras=extras or {},
    )
