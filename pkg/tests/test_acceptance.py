"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
written straight to the terminal.
"""

import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from ellipmoment.verification import CHECKS, FAMILIES, THM1_FAMILIES

SEED = 42
SAMPLES = 1_000_000


@pytest.fixture
def emit(capsys):
    def _emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"

    return _emit


def _timed(name, samples=SAMPLES):
    t0 = time.perf_counter()
    runs = CHECKS[name](SEED, samples)
    return runs, time.perf_counter() - t0


def _failures(runs):
    return [f"{r['check']}/{r['family']}/n={r['n']}: got {r['got']!r} want {r['expected']!r} tol {r['tolerance']!r}"
            for r in runs if not r["pass"]]


def test_criterion_01_constants_cross_check(emit):
    runs, secs = _timed("constants")
    assert {(r["family"], r["n"]) for r in runs} == {(f, n) for f in FAMILIES for n in (1, 2, 3, 5)}
    for r in runs:
        assert r["tolerance"] == (1e-7 if r["family"] == "logistic" else 1e-9)
    bad = _failures(runs)
    emit(1, "closed-form constants match radial quadrature", not bad and secs < 5.0,
         f"{len(runs)} cases, worst {max(r['got'] for r in runs):.2e}, {secs:.1f} s" + ("; " + "; ".join(bad) if bad else ""))


def test_criterion_02_reference_values(emit):
    runs, _ = _timed("reference_values")
    names = {r["check"] for r in runs}
    assert names == {"logistic_c2", "laplace_b_star", "laplace_b_dstar", "normal_b_star", "normal_b_dstar"}
    assert sum(r["check"].startswith("laplace") for r in runs) == 10
    for r in runs:
        assert r["tolerance"] == (0.0 if r["family"] == "normal" else 1e-10)
    bad = _failures(runs)
    emit(2, "logistic c2 = 1/pi, Laplace b* and b**, Normal b* = b** = 1", not bad, "; ".join(bad))


def test_criterion_03_covariance(emit):
    runs, secs = _timed("covariance")
    fams = {r["family"] for r in runs if r["check"] == "cov_X"}
    assert fams == set(FAMILIES)
    bad = _failures(runs)
    emit(3, "sample covariance equals b* Sigma and (b**/b*) Sigma", not bad and secs < 60.0,
         f"{len(runs)} entries from {2 * SAMPLES} draws, {secs:.1f} s" + ("; " + "; ".join(bad) if bad else ""))


def test_criterion_04_student_t(emit):
    runs, _ = _timed("student_t")
    assert {r["family"] for r in runs} == {"t(p=5)", "t(p=6)", "t(p=10)"}
    for r in runs:
        assert len(r["candidates"]) == 2 and r["tolerance"] == 1e-9
    supported = sorted({(r["check"], r["supported"]) for r in runs})
    bad = _failures(runs)
    emit(4, "Student-t b* = p/(p-2) and b** = p^2/((p-2)(p-4))", not bad,
         ", ".join(f"{c}: {s}" for c, s in supported) + ("; " + "; ".join(bad) if bad else ""))


def test_criterion_05_thm1_vs_mc(emit):
    runs, secs = _timed("thm1_mc")
    assert len(runs) == len(THM1_FAMILIES) * 2 * 3
    worst = max(abs(r["got"] - r["expected"]) / (r["tolerance"] / 3.0) for r in runs)
    bad = _failures(runs)
    emit(5, "x1sq_moment_thm1 agrees with direct Monte Carlo", not bad and secs < 600.0,
         f"24 cases at {SAMPLES} samples, worst {worst:.2f} se, {secs:.0f} s" + ("; " + "; ".join(bad) if bad else ""))


def test_criterion_06_thm1_equals_thm2(emit):
    runs, _ = _timed("thm1_thm2")
    assert sum(r["instances"] for r in runs) == 200
    bad = _failures(runs)
    emit(6, "thm1 and thm2 agree on injected inner expectations", not bad,
         f"200 instances, worst {max(r['got'] for r in runs):.1e}")


def test_criterion_07_normal_recursion(emit):
    runs, secs = _timed("normal_recursion")
    assert [r["n"] for r in runs] == [1, 2, 3, 4]
    bad = _failures(runs)
    emit(7, "Normal recursion matches Isserlis", not bad and secs < 30.0,
         f"{sum(r['moments'] for r in runs)} moments, worst rel {max(r['got'] for r in runs):.1e}, {secs:.1f} s")


def test_criterion_08_radial_ks(emit):
    runs, _ = _timed("radial_ks")
    assert len(runs) == 2 * len(FAMILIES)
    assert all(r["tolerance"] == pytest.approx(1.63 / math.sqrt(1e5)) for r in runs)
    bad = _failures(runs)
    emit(8, "KS statistic of radii below 1.63/sqrt(N)", not bad,
         f"worst {max(r['got'] for r in runs):.4f} vs {runs[0]['tolerance']:.4f}")


def test_criterion_09_constant_collapse(emit):
    runs, _ = _timed("constant_collapse")
    assert {r["family"] for r in runs} == set(FAMILIES)
    bad = _failures(runs)
    emit(9, "constant f collapses to sigma11 b* + mu1^2 with zero stderr", not bad,
         f"worst {max(r['got'] for r in runs):.1e}")


def _verify(tmp_path, name, *extra):
    exe = shutil.which("ellipmoment")
    cmd = [exe] if exe else [sys.executable, "-m", "ellipmoment"]
    out = tmp_path / name
    # determinism does not depend on the sample size, so a small run keeps this quick
    proc = subprocess.run(cmd + ["verify", "--seed", str(SEED), "--samples", "20000", "--out", str(out), *extra],
                          capture_output=True, text=True)
    return proc.returncode, out.read_bytes()


def test_criterion_10_cli_determinism(emit, tmp_path):
    import json

    code_a, a = _verify(tmp_path, "a.json")
    code_b, b = _verify(tmp_path, "b.json", "--workers", "3")
    passed = json.loads(a)["pass"]
    ok = a == b and code_a == code_b == (0 if passed else 1)
    emit(10, "verify --seed 42 reports are byte-identical and exit code follows pass", ok,
         f"{len(a)} bytes, exit {code_a}, report pass={passed}")


def test_criterion_10_exit_code_on_failure(monkeypatch, tmp_path):
    from ellipmoment import cli, verification

    def failing(seed, samples):
        return [verification._run("forced", "normal", 1, 0.0, 1.0, 0.0, False)]

    monkeypatch.setitem(verification.CHECKS, "constants", failing)
    assert cli.main(["verify", "--checks", "constants", "--out", str(tmp_path / "r.json")]) == 1
