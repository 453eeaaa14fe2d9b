"""The ten acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed again in the terminal
summary).  The boundary identity for the rotational disk field does not
hold for that field, so criterion 5 is run as stated and marked as an
expected failure; its closed-field and flat-container parts are checked
separately.
"""

import json
import os

import numpy as np
import pytest

from fbindex import hodge as hd
from fbindex.bounds import EUCLIDEAN, SPHERE, stable_classification
from fbindex.cli import main
from fbindex.geometry import compute_geometry
from fbindex.jacobi import assemble, constrained_spectrum
from fbindex.mesh import topology
from fbindex.pipeline import DEFAULT_SUITE, RunConfig, build_surface, run_suite
from fbindex.surfaces import disk_mesh, gen_disk_in_ball
from fbindex.testfields import (
    boundary_identity_residual,
    build_test_set,
    inequality_chain,
    mean_zero_residual,
)

pytestmark = pytest.mark.slow

FBCMC = ("cylinder_L2", "cylinder_L4", "cylinder_L7", "disk_in_ball", "hemisphere")


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    rows, path = run_suite(RunConfig(command="suite", out=str(out), jobs=os.cpu_count() or 1))
    return out, rows


def _row(rows, case, res):
    return next(r for r in rows if r["case"] == case and r["res"] == res)


def _report(out, case, res):
    with open(out / f"{case}_res{res}" / "report.json") as fh:
        return json.load(fh)


# 1 ----------------------------------------------------------------------------------


def test_criterion_1_harmonic_dimensions(record_criterion):
    meshes = {
        "disk": disk_mesh(16),
        "annulus": build_surface("annulus").mesh,
        "punctured_torus": build_surface("punctured_torus").mesh,
        "cylinder": build_surface("cylinder", {"res": 48}).mesh,
        "genus2": build_surface("genus2").mesh,
    }
    found, ok = [], True
    for name, m in meshes.items():
        expected = topology(m).harmonic_dimension
        dims = tuple(hd.harmonic_basis(m, which).dim for which in hd.BOUNDARY_CONDITIONS)
        ok &= dims == (expected, expected)
        found.append(f"{name}={dims[0]}/{dims[1]} (2g+k-1={expected})")
    record_criterion(1, ok, "; ".join(found))
    assert ok


# 2 ----------------------------------------------------------------------------------


def test_criterion_2_cylinder_oracle(suite, record_criterion):
    out, rows = suite
    idx = {L: _row(rows, f"cylinder_L{L}", 48)["index_fem"] for L in (2, 4, 7)}
    r48, r96 = _row(rows, "cylinder_L4", 48), _row(rows, "cylinder_L4", 96)
    exact = (np.pi / 4) ** 2 - 1
    relerr = abs(r48["lambda1_J"] - exact) / abs(exact)
    order = r96["lambda1_J_order"]
    ok = idx == {2: 0, 4: 1, 7: 2} and relerr < 0.03 and abs(order - 2.0) < 0.25
    record_criterion(2, ok, f"index L=2,4,7: {idx[2]},{idx[4]},{idx[7]}; lambda_1(L=4) rel. error {relerr:.2e}; "
                            f"order {order:.3f}")
    assert ok


# 3 ----------------------------------------------------------------------------------


def test_criterion_3_stable_reproductions(suite, record_criterion):
    out, rows = suite
    stable = set(stable_classification(EUCLIDEAN).admissible)
    parts, ok = [], True
    for case, levels in (("hemisphere", (3, 4, 5)), ("disk_in_ball", (8, 16, 32))):
        for res in levels:
            rep = _report(out, case, res)
            zeros = rep["lemma_residuals"]["numerical_zeros"]
            tol = rep["tolerances"]["zero_tol"]
            # both have a two-dimensional space of horizontal translations
            ok &= rep["index_fem"] == 0 and len(zeros) == 2 and all(abs(z) < tol for z in zeros)
            ok &= (rep["g"], rep["k"]) in stable
        parts.append(f"{case}: index 0, zeros {['%.1e' % z for z in zeros]} < {tol:.1e}, (g,k)=({rep['g']},{rep['k']})")
    record_criterion(3, ok, "; ".join(parts))
    assert ok


# 4 ----------------------------------------------------------------------------------


def test_criterion_4_mean_zero(record_criterion):
    worst = {}
    for name in ("annulus", "punctured_torus"):
        m = build_surface(name).mesh
        g = compute_geometry(m)
        b = hd.harmonic_basis(m)
        worst[name] = max(float(mean_zero_residual(build_test_set(b[j], m, g)).max()) for j in range(b.dim))
    ok = all(v < 1e-9 for v in worst.values())
    record_criterion(4, ok, ", ".join(f"{k} max residual {v:.1e}" for k, v in worst.items()) + " (tol 1e-9)")
    assert ok


# 5 ----------------------------------------------------------------------------------


def _rotational_mismatch(res):
    m, c, _ = gen_disk_in_ball(res)
    x = m.vertices
    xi = np.c_[-x[:, 1], x[:, 0], np.zeros(len(x))]
    return boundary_identity_residual(build_test_set(xi, m, compute_geometry(m)), c)


def _flat_container_sides():
    out = {}
    for name, params, levels in (("hemisphere", {}, (3, 4, 5)), ("cylinder", {"L": 4.0}, (24, 48, 96))):
        seq = []
        for res in levels:
            s = build_surface(name, dict(params, res=res))
            m = s.mesh
            w = hd.assemble_complex(m).d0 @ m.vertices[:, 0] if name == "hemisphere" else hd.harmonic_basis(m)[0]
            bi = boundary_identity_residual(build_test_set(w, m, compute_geometry(m)), s.container)
            seq.append((bi.rhs, max(abs(bi.lhs_w), abs(bi.lhs_wbar)) / bi.boundary_norm_sq))
        out[name] = seq
    return out


@pytest.mark.xfail(strict=True, reason="the rotational disk field is not closed; its two sides differ by O(1)")
def test_criterion_5_boundary_identity(record_criterion):
    bis = {res: _rotational_mismatch(res) for res in (8, 16, 32)}
    mism = [max(bis[r].as_tuple()) for r in (8, 16, 32)]
    literal = mism[1] <= 0.05 and mism[2] < mism[1] < mism[0]
    flat = _flat_container_sides()
    flat_ok = all(rhs == 0.0 for s in flat.values() for rhs, _ in s) and all(
        s[-1][1] < s[0][1] and s[-1][1] < 1e-3 for s in flat.values())
    b = bis[16]
    record_criterion(
        5, literal and flat_ok,
        f"disk rotational field: lhs {b.lhs_w:.3f} vs rhs {b.rhs:.3f}, mismatch {mism[0]:.3f}/{mism[1]:.3f}/{mism[2]:.3f}"
        f" at res 8/16/32 (tol 0.05); plane and slab sides -> 0: {flat_ok}")
    assert literal and flat_ok


def test_criterion_5_flat_containers_sides_vanish():
    for name, seq in _flat_container_sides().items():
        assert all(rhs == 0.0 for rhs, _ in seq), name
        lhs = [v for _, v in seq]
        assert lhs[2] < lhs[1] < lhs[0] and lhs[2] < 1e-3, (name, lhs)


def test_criterion_5_closed_tangential_disk_field():
    # xi = grad(x - x r^2 / 3) is closed and tangent to the rim; rhs = -8 pi / 9
    mism = []
    for res in (8, 16, 32):
        m, c, _ = gen_disk_in_ball(res)
        x, y = m.vertices[:, 0], m.vertices[:, 1]
        w = hd.assemble_complex(m).d0 @ (x - x * (x * x + y * y) / 3.0)
        bi = boundary_identity_residual(build_test_set(w, m, compute_geometry(m)), c)
        assert bi.rhs == pytest.approx(-8 * np.pi / 9, rel=0.01)
        mism.append(max(bi.as_tuple()))
    assert mism[1] <= 0.05 and max(mism) < 1e-3


# 6 ----------------------------------------------------------------------------------


def test_criterion_6_inequality_chain(record_criterion):
    s = build_surface("cylinder", {"L": 4.0, "res": 48})
    m = s.mesh
    g = compute_geometry(m)
    q = assemble(m, g, s.container)
    chains = [inequality_chain(build_test_set(f, m, g), q, s.oracle.exact_H)
              for f in hd.harmonic_basis(m).forms.T]
    worst = max(ch.relative_epsilon for ch in chains)
    h = build_surface("hemisphere", {"res": 4}).mesh
    h_dim = hd.harmonic_basis(h).dim
    ok = len(chains) == 1 and worst <= 0.05 and h_dim == 0
    record_criterion(6, ok, f"cylinder eps/dominant = {worst:.2e} (tol 0.05); hemisphere has dim H^1 = {h_dim}, "
                            "so no harmonic field enters")
    assert ok


# 7 ----------------------------------------------------------------------------------


def test_criterion_7_comparison_rows(suite, record_criterion):
    out, rows = suite
    bad, n = [], 0
    for r in rows:
        if r["case"] not in FBCMC:
            continue
        rep = _report(out, r["case"], r["res"])
        tol = rep["tolerances"]["comparison_tol"]
        scan = [x for x in rep["rows"] if x["variant"] == "scan"]
        n += 1
        if sorted(x["alpha"] for x in scan) != [1, 2, 3] or not all(x["pass"] for x in scan):
            bad.append(f"{r['case']}@{r['res']} scan")
        if not rep["index_fem"] >= rep["index_bound"]:
            bad.append(f"{r['case']}@{r['res']} index")
    ok = not bad and n == sum(len(c[3]) for c in DEFAULT_SUITE if c[0] in FBCMC)
    record_criterion(7, ok, f"{n} surfaces, scan rows alpha=1..3 within 5h and index >= bound" +
                     (f"; failing: {bad}" if bad else ""))
    assert ok


# 8 ----------------------------------------------------------------------------------


def test_criterion_8_classification(record_criterion):
    e, s = stable_classification(EUCLIDEAN), stable_classification(SPHERE)
    ok_e = set(e.admissible) == {(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2)}
    ok_s = set(s.reference) <= set(s.admissible) | set(s.extra_in_reference) and (0, 5) in s.missing_from_reference
    flagged = [line for line in s.lines() if line.startswith("DISCREPANCY")]
    ok = ok_e and ok_s and any("(0, 5)" in line for line in flagged)
    record_criterion(8, ok, f"euclidean {list(e.admissible)}; sphere flags: {flagged}")
    assert ok


# 9 ----------------------------------------------------------------------------------


def _agree(dense, iterative, rtol=1e-7):
    # relative on nonzero eigenvalues; the numerical kernel against the spectral scale
    scale = np.abs(dense).max()
    kernel = np.abs(dense) <= 1e-10 * scale
    rel = np.abs(iterative - dense) / np.where(kernel, scale, np.abs(dense))
    return float(rel.max())


def test_criterion_9_cross_solver(record_criterion):
    worst = {}
    for name, surf, params, levels in DEFAULT_SUITE:
        s = build_surface(surf, dict(params, res=levels[0]))
        m = s.mesh
        errs = []
        if s.container is not None:
            q = assemble(m, compute_geometry(m), s.container)
            errs.append(_agree(constrained_spectrum(q, 8, "dense").eigenvalues,
                               constrained_spectrum(q, 8, "shift_invert").eigenvalues))
        for which in hd.BOUNDARY_CONDITIONS:
            errs.append(_agree(hd.one_form_spectrum(m, 25, "dense", which=which).eigenvalues,
                               hd.one_form_spectrum(m, 25, "shift_invert", which=which).eigenvalues))
        worst[f"{name}@{levels[0]}"] = max(errs)
    ok = max(worst.values()) <= 1e-7
    record_criterion(9, ok, f"max relative disagreement {max(worst.values()):.1e} over {len(worst)} surfaces (tol 1e-7)")
    assert ok


# 10 ---------------------------------------------------------------------------------


def _tree(root):
    files = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            p = os.path.join(dirpath, n)
            with open(p, "rb") as fh:
                data = fh.read()
            if n.endswith(".json"):
                d = json.loads(data)
                if isinstance(d, dict):
                    d.pop("timestamp", None)
                    d.pop("out", None)
                data = json.dumps(d, sort_keys=True).encode()
            files[os.path.relpath(p, root)] = data
    return files


def test_criterion_10_determinism(tmp_path, record_criterion):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"scale": 0.5, "seed": 0}))
    trees = []
    for run in ("a", "b"):
        rc = main(["suite", "--config", str(cfg), "--out", str(tmp_path / run)])
        assert rc == 0
        trees.append(_tree(tmp_path / run))
    differ = sorted(k for k in trees[0].keys() | trees[1].keys() if trees[0].get(k) != trees[1].get(k))
    stamps = json.loads((tmp_path / "a" / "cylinder_L4_res24" / "report.json").read_text())["timestamp"]
    ok = not differ and bool(stamps)
    record_criterion(10, ok, f"{len(trees[0])} files identical modulo the timestamp field" +
                     (f"; differing: {differ}" if differ else ""))
    assert ok
