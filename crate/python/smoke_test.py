#!/usr/bin/env python3
"""Smoke test for the curvglue_py extension module.

Builds the cdylib if needed, links it into a temp directory under the
importable name, and runs a handful of end-to-end checks:

    python3 python/smoke_test.py
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_or_build_cdylib():
    override = os.environ.get("CURVGLUE_PY_LIB")
    if override:
        return override
    candidates = [
        os.path.join(REPO, "target", "release", "libcurvglue_py.so"),
        os.path.join(REPO, "target", "debug", "libcurvglue_py.so"),
        os.path.join(REPO, "target", "release", "libcurvglue_py.dylib"),
        os.path.join(REPO, "target", "debug", "libcurvglue_py.dylib"),
    ]
    for path in candidates:
        if os.path.exists(path):
            return path
    print("building curvglue-py (release) ...")
    subprocess.run(
        ["cargo", "build", "-p", "curvglue-py", "--release"],
        cwd=REPO,
        check=True,
    )
    for path in candidates:
        if os.path.exists(path):
            return path
    raise SystemExit("could not locate the built extension module")


def import_module():
    lib = locate_or_build_cdylib()
    tmp = tempfile.mkdtemp(prefix="curvglue-py-")
    suffix = ".so" if lib.endswith(".so") else ".dylib"
    shutil.copy(lib, os.path.join(tmp, "curvglue_py" + suffix))
    sys.path.insert(0, tmp)
    import curvglue_py

    return curvglue_py


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} !~ {b} (tol {tol})"


def main():
    cg = import_module()

    names = cg.builtin_names()
    assert len(names) == 6, names
    assert "doubled-disk-2d" in names

    # scenario surface
    disk = cg.Scenario.builtin("doubled-disk-2d")
    assert disk.n == 2
    approx(disk.l_spectrum[0], 2.0, 1e-10)
    g = disk.metric("m0", [1.0, 0.1])
    approx(g[0][0], 0.81, 1e-12)
    approx(g[1][1], 1.0, 1e-12)
    gamma = disk.christoffels("m0", [1.0, 0.1])
    approx(gamma[1][0][0], (1.0 - 0.1), 1e-9)  # Γ^n_{11} = -½ ∂_n g_11

    # curvature functionals on the untouched sides
    hemi = cg.Scenario.builtin("doubled-hemisphere-2d")
    val = hemi.functional_value("m0", "operator", [1.0, 0.2])
    approx(val, 1.0, 1e-8)
    identity_error, slack = hemi.boundary_check(1.0)
    assert identity_error <= 1e-4, identity_error
    assert slack >= -1e-5, slack

    # transition profile
    p = cg.Profile(0.2)
    approx(p.f(0.0), 1.0, 0.0)
    assert p.f(0.3) == 0.0
    approx(p.big_f(0.2), 0.0, 1e-12)
    assert 0.0 < p.amplitude <= 0.2**3
    violations = dict(p.certify())
    assert max(v for k, v in violations.items() if k != "big_f_peak_error") <= 1e-10
    try:
        cg.Profile(0.6)
        raise SystemExit("delta gate missing")
    except ValueError:
        pass

    # config parsing with a located error
    try:
        cg.Scenario.from_config("name = broken\nn = 2\nwidth = 0.4\n[g0]\ng0[1][1] = sin(x1\n")
        raise SystemExit("parse error not raised")
    except ValueError as e:
        assert "line 5" in str(e), e

    # a small certification sweep, deterministic across runs
    result = cg.certify(disk, "operator", deltas=[0.4, 0.2], seed=42)
    assert result.passed, result.rows
    eps = [row.eps_observed for row in result.rows]
    assert eps[1] < eps[0], eps
    again = cg.certify(disk, "operator", deltas=[0.4, 0.2], seed=42)
    assert result.csv == again.csv

    # hypothesis refusal surfaces as an exception
    mixed = cg.Scenario.from_config(
        "name = mixed\nn = 3\nwidth = 0.4\n"
        "[g0]\ng0[1][1] = exp(-1.2 * xn)\ng0[2][2] = exp(1.0 * xn)\n"
        "[g1]\ng1[1][1] = exp(1.2 * xn)\ng1[2][2] = exp(-1.0 * xn)\n"
        "[metadata]\nkappa.scalar = -2.0\nl_spectrum = -1.0, 1.2\n"
    )
    try:
        cg.certify(mixed, "operator", deltas=[0.4, 0.2])
        raise SystemExit("hypothesis refusal not raised")
    except ValueError as e:
        assert "positive semidefinite" in str(e), e

    print("smoke test passed:", len(names), "scenarios,", len(result.rows), "sweep rows")


if __name__ == "__main__":
    main()
