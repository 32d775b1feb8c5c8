"""Runs the built-in acceptance suite and reports one PASS/FAIL line per criterion.

The whole suite is run once (checks in parallel) and each criterion is a test over its
entries. Run ``python tests/test_acceptance.py`` for the lines without pytest.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import pytest

from reflected_ou import catalog
from reflected_ou.cli import run_suite
from reflected_ou.config import parse_config

try:
    from conftest import CRITERIA
except ImportError:  # pragma: no cover - run as a script
    CRITERIA = {}

SEED = 20240517
JOBS = 4

LABELS = {
    1: "integration by parts for nu",
    2: "boundary limit of the penalized identity",
    3: "resolvent bounds on the grid",
    4: "gradient bound along penalized paths",
    5: "penalized to Neumann convergence",
    6: "invariance and stationarity",
    7: "co-area formula",
    8: "pushforward density and integrability hypothesis",
    9: "log-Sobolev inequality",
    10: "drift perturbation",
    11: "determinism across parallel degrees",
}


def _config(out: Path, suite_name: str):
    return parse_config({"schema_version": 1, "seed": SEED, "suite_name": suite_name, "output_dir": str(out)})


def _summarize(records: list[dict]) -> tuple[bool, str]:
    bad = []
    total = 0
    for rec in records:
        if rec["error"]:
            bad.append(f"{rec['check']}: {rec['error']['type']}")
        for r in rec["reports"]:
            total += 1
            if not r["passed"]:
                if r["kind"] == "inequality":
                    bad.append(f"{r['name']} {r['lhs']:.3g} > {r['rhs']:.3g}")
                else:
                    bad.append(f"{r['name']} residual={r['residual']:.3g} tol={r['tolerance']:.3g}")
    ok = not bad
    detail = f"{total} reports" + ("" if ok else "; failing: " + "; ".join(bad))
    return ok, detail


def _record(criterion: int, ok: bool, detail: str) -> str:
    line = f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}  {LABELS[criterion]}: {detail}"
    CRITERIA[criterion] = (ok, line)
    print(line)
    return line


def run_acceptance(out: Path) -> dict[int, list[dict]]:
    code = run_suite(_config(out, "acceptance"), out, "acceptance", JOBS, echo=lambda *_: None)
    assert code in (0, 1), f"acceptance run ended with exit status {code}"
    records = json.loads((out / "reports.json").read_text())
    grouped: dict[int, list[dict]] = defaultdict(list)
    for (criterion, check, _), rec in zip(catalog.ACCEPTANCE, records):
        assert rec["check"] == check
        grouped[criterion].append(rec)
    return grouped


@pytest.fixture(scope="module")
def acceptance(tmp_path_factory):
    return run_acceptance(tmp_path_factory.mktemp("acceptance"))


@pytest.mark.parametrize("criterion", list(range(1, 11)))
def test_criterion(acceptance, criterion):
    ok, detail = _summarize(acceptance[criterion])
    line = _record(criterion, ok, detail)
    assert ok, line


def test_reports_are_identical_across_parallel_degrees(tmp_path):
    # The smoke suite contains the Monte Carlo checks (MC integration, path simulation,
    # Feynman-Kac gradients), which are the ones whose output could depend on scheduling.
    blobs = []
    for jobs in (1, 4):
        out = tmp_path / f"jobs{jobs}"
        run_suite(_config(out, "smoke"), out, "smoke", jobs, echo=lambda *_: None)
        blobs.append((out / "reports.json").read_bytes())
    same = blobs[0] == blobs[1]
    line = _record(11, same, f"smoke suite reports.json {'byte-identical' if same else 'differs'} at jobs 1 and 4")
    assert same, line


if __name__ == "__main__":  # pragma: no cover
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        for c, recs in sorted(run_acceptance(Path(d)).items()):
            _record(c, *_summarize(recs))
