"""End-to-end acceptance: the full suite is run twice through the command line.

Each criterion gets one PASS/FAIL line, repeated in the terminal summary.
"""
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cspwb.suite import SUITES, compare_artifact_trees

CRITERIA = sorted(SUITES, key=int)


def run_suite(out: Path) -> dict:
    proc = subprocess.run([sys.executable, "-m", "cspwb", "suite", "run", "--out", str(out)],
                          capture_output=True, text=True, timeout=1800)
    report = {r["key"]: r for r in json.loads((out / "report.json").read_text())}
    return {"returncode": proc.returncode, "stdout": proc.stdout, "stderr": proc.stderr,
            "report": report, "artifacts": out / "artifacts"}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("suite")
    # sequential on purpose: the timing budgets assume an otherwise idle core
    return run_suite(base / "runA"), run_suite(base / "runB")


@pytest.mark.parametrize("key", CRITERIA)
def test_criterion(runs, key, criterion_log):
    r = runs[0]["report"][key]
    line = (f"[{'PASS' if r['passed'] else 'FAIL'}] criterion {key}: {r['title']} -- "
            f"{r['detail']} ({r['seconds']:.1f}s)")
    print(line)
    criterion_log[key] = line
    assert r["passed"], line


def test_criterion_10_determinism(runs, criterion_log):
    a, b = runs
    diff = compare_artifact_trees(a["artifacts"], b["artifacts"])
    files = sum(1 for p in Path(a["artifacts"]).rglob("*") if p.is_file())
    ok = not diff and files > 0 and a["returncode"] == 0 and b["returncode"] == 0
    line = (f"[{'PASS' if ok else 'FAIL'}] criterion 10: two full suite runs emit byte-identical "
            f"artifacts -- {files} files, {len(diff)} differing")
    print(line)
    criterion_log["10"] = line
    assert ok, (line, diff[:10], a["stderr"][-2000:], b["stderr"][-2000:])
