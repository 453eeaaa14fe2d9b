"""Surface registry, per-surface analysis and suite runs.

``analyze`` chains geometry, the index form, the Hodge complex, the test
functions and the comparison bounds for one surface and returns a
:class:`~fbindex.bounds.VerificationReport`; ``write_analysis`` writes it
with spectra and residual tables.  ``run_suite`` does this for every case of
a suite, possibly in parallel, and writes one aggregate table.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import numpy as np

from . import hodge as hd
from .bounds import (
    AmbientModel,
    VerificationReport,
    check_constant_mean_curvature,
    index_lower_bound,
    verify_comparison,
)
from .errors import ConfigError, FBIndexError, GeometryError, SolverError
from .geometry import Container, check_free_boundary, compute_geometry, container_from_dict
from .jacobi import assemble, constrained_spectrum, default_zero_tol, morse_index
from .mesh import Mesh, read_mesh, topology, write_off
from .surfaces import (
    AnalyticOracle,
    annulus_mesh,
    gen_cylinder_in_slab,
    gen_disk_in_ball,
    gen_hemisphere_on_plane,
    gen_punctured_torus,
    genus2_mesh,
)
from .testfields import (
    boundary_identity_residual,
    build_test_set,
    inequality_chain,
    jacobi_formula_residual,
    mean_zero_residual,
    solve_orthogonality_system,
)

__all__ = [
    "RunConfig",
    "Surface",
    "SURFACE_NAMES",
    "build_surface",
    "analyze",
    "hodge_summary",
    "write_analysis",
    "write_error",
    "DEFAULT_SUITE",
    "run_suite",
    "OUT_ENV",
]

log = logging.getLogger(__name__)

OUT_ENV = "FBINDEX_OUT"


@dataclass
class RunConfig:
    """Everything a run depends on; serializable to and from JSON."""

    command: str = "analyze"
    surface: Optional[str] = None
    params: dict = field(default_factory=dict)
    mesh: Optional[str] = None
    container: Any = None
    out: Optional[str] = None
    seed: int = 0
    method: str = "auto"
    ambient: str = "euclidean"
    jacobi_count: int = 8
    hodge_count: int = 25
    alpha_max: int = 3
    zero_tol: Optional[float] = None
    free_boundary_tol: float = 1e-2
    cmc_tol: float = 1e-3
    comparison_tol_factor: float = 5.0
    figures: bool = True
    scale: float = 1.0
    jobs: int = 1
    cases: Optional[list] = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def output_dir(self) -> str:
        return self.out or os.environ.get(OUT_ENV) or "fbindex_out"


# -- surfaces ----------------------------------------------------------------------


@dataclass
class Surface:
    name: str
    mesh: Mesh
    container: Optional[Container]
    oracle: Optional[AnalyticOracle]
    params: dict


SURFACE_NAMES = ("disk", "hemisphere", "cylinder", "annulus", "punctured_torus", "genus2")

_DEFAULTS = {
    "disk": {"res": 16, "tilt": 0.0},
    "hemisphere": {"r": 1.0, "res": 4},
    "cylinder": {"r": 1.0, "L": 4.0, "res": 48},
    "annulus": {"inner": 0.5, "outer": 1.0, "res": 32},
    "punctured_torus": {"R": 2.0, "r": 1.0, "res": 4},
    "genus2": {"res": 1},
}


def build_surface(name: str, params: Optional[dict] = None) -> Surface:
    """Generate a named suite surface; unknown names or parameters raise ``ConfigError``."""
    if name not in _DEFAULTS:
        raise ConfigError(f"unknown surface {name!r}; expected one of {list(SURFACE_NAMES)}")
    p = dict(_DEFAULTS[name])
    for k, v in (params or {}).items():
        if v is None:
            continue
        if k not in p:
            raise ConfigError(f"surface {name!r} has no parameter {k!r}")
        p[k] = v
    try:
        if name == "disk":
            m, c, o = gen_disk_in_ball(int(p["res"]), float(p["tilt"]))
        elif name == "hemisphere":
            m, c, o = gen_hemisphere_on_plane(float(p["r"]), int(p["res"]))
        elif name == "cylinder":
            m, c, o = gen_cylinder_in_slab(float(p["r"]), float(p["L"]), int(p["res"]))
        elif name == "annulus":
            n = int(p["res"])
            m, c, o = annulus_mesh(float(p["inner"]), float(p["outer"]), n, max(2, round(6 * n / 32))), None, None
        elif name == "punctured_torus":
            m, c, o = gen_punctured_torus(int(p["res"]), float(p["R"]), float(p["r"])), None, None
        else:
            m, c, o = genus2_mesh(int(p["res"])), None, None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from None
    return Surface(name, m, c, o, p)


def load_surface(cfg: RunConfig) -> Surface:
    """Surface from ``cfg.surface`` or from ``cfg.mesh`` plus ``cfg.container``."""
    if cfg.mesh:
        try:
            m = read_mesh(cfg.mesh)
        except OSError as exc:
            raise FileNotFoundError(f"cannot read mesh {cfg.mesh}: {exc}") from exc
        c = cfg.container
        if isinstance(c, str):
            with open(c) as fh:
                c = json.load(fh)
        if isinstance(c, dict) and "container" in c:
            c = c["container"]
        container = None if c is None or (isinstance(c, dict) and c.get("type") == "none") else container_from_dict(c)
        return Surface(os.path.splitext(os.path.basename(cfg.mesh))[0], m, container, None, {})
    if not cfg.surface:
        raise ConfigError("give a surface name or a mesh path")
    return build_surface(cfg.surface, cfg.params)


# -- analysis -------------------------------------------------------------------------


def hodge_summary(m: Mesh, g, method: str = "auto", seed: int = 0) -> dict:
    """Harmonic dimensions for both conditions and the exact mean-zero checks."""
    topo = topology(m)
    out = {"g": topo.genus, "k": topo.boundary_components, "expected_dim": topo.harmonic_dimension}
    bases = {}
    for which in hd.BOUNDARY_CONDITIONS:
        b = hd.harmonic_basis(m, which, method=method, seed=seed)
        bases[which] = b
        out[f"dim_{which}"] = b.dim
        out[f"gap_{which}"] = b.gap_ratio
        out[f"first_nonzero_{which}"] = b.first_nonzero
    tb = bases["tangential_field"]
    mz = [float(mean_zero_residual(build_test_set(tb[j], m, g)).max()) for j in range(tb.dim)]
    out["mean_zero_max"] = max(mz) if mz else 0.0
    if tb.dim:
        nb = bases["normal_field"]
        cx = hd.assemble_complex(m)
        S = hd.star(tb.forms, m)
        P = nb.forms @ (nb.forms.T @ (cx.M1 @ S))
        frac = np.sqrt(np.einsum("ij,ij->j", P, cx.M1 @ P) / np.einsum("ij,ij->j", S, cx.M1 @ S))
        out["star_duality_min"] = float(frac.min())
    return out, bases


@dataclass
class Analysis:
    report: VerificationReport
    jacobi: Any
    hodge: Any
    lemma_rows: list
    surface: Surface
    zero_tol: float
    oracle_eigenvalues: Optional[np.ndarray] = None


def analyze(surface: Surface, cfg: RunConfig) -> Analysis:
    """Full check of one free-boundary surface; raises package errors on failed preconditions."""
    m, c = surface.mesh, surface.container
    if c is None:
        raise ConfigError(f"surface {surface.name!r} has no container; only Hodge checks apply")
    a = AmbientModel.from_tag(cfg.ambient)
    topo = topology(m)
    g = compute_geometry(m)
    notes = []

    dev = check_free_boundary(m, g, c)
    if dev > cfg.free_boundary_tol:
        raise GeometryError(
            f"not a free-boundary surface: conormal deviates from the container normal by {dev:.3e} rad "
            f"(tolerance {cfg.free_boundary_tol:g})"
        )
    H = check_constant_mean_curvature(g.interior_mean_curvature(), cfg.cmc_tol * max(1.0, float(np.abs(g.H).max())))
    mean_convex = c.is_mean_convex()
    if not mean_convex:
        notes.append("container is not mean convex; the comparison need not hold")
    if a.tag != "euclidean":
        notes.append(f"inferred: {a.equation_multiplier} orthogonality equations per eigenfunction "
                     f"from {a.frame_count} ambient frames")

    q = assemble(m, g, c)
    zt = cfg.zero_tol if cfg.zero_tol is not None else default_zero_tol(q)
    count = max(cfg.jacobi_count, cfg.alpha_max)
    if surface.oracle is not None and surface.oracle.exact_index is not None:
        count = max(count, surface.oracle.exact_index + 4)
    while True:
        jac = constrained_spectrum(q, count, method=cfg.method, seed=cfg.seed)
        try:
            idx = morse_index(jac, zt)
            break
        except SolverError:
            if 2 * count >= m.n_vertices - 2:
                raise
            count *= 2

    hs, bases = hodge_summary(m, g, cfg.method, cfg.seed)
    f = a.equation_multiplier
    hcount = max(cfg.hodge_count, f * (cfg.alpha_max - 1) + 1)
    hspec = hd.one_form_spectrum(m, hcount, method=cfg.method, seed=cfg.seed)

    # test functions of each tangential harmonic field
    lemma_rows = []
    tb = bases["tangential_field"]
    for j in range(tb.dim):
        t = build_test_set(tb[j], m, g)
        bi = boundary_identity_residual(t, c, q)
        chain = inequality_chain(t, q, H)
        lemma_rows += [
            (j, "mean_zero", float(mean_zero_residual(t).max())),
            (j, "boundary_identity_w", bi.mismatch_w),
            (j, "boundary_identity_wbar", bi.mismatch_wbar),
            (j, "laplacian_formula", jacobi_formula_residual(t, q, seed=cfg.seed)),
            (j, "chain_lhs", chain.lhs),
            (j, "chain_rhs", chain.rhs),
            (j, "chain_relative_epsilon", chain.relative_epsilon),
        ]

    bound = index_lower_bound(topo.genus, topo.boundary_components, a)
    systems = []
    for alpha in range(1, cfg.alpha_max + 1):
        if alpha - 1 > len(jac.eigenvalues) or tb.dim == 0:
            break
        sol = solve_orthogonality_system(tb, jac.eigenvectors[:, : alpha - 1], alpha, True, m, g)
        systems.append({"alpha": alpha, "equations": sol.n_equations, "unknowns": sol.n_unknowns,
                        "exact": sol.exact, "residual": sol.residual})

    h = m.mean_edge_length
    rows = verify_comparison(jac.eigenvalues, hspec.eigenvalues, H, a, cfg.alpha_max,
                             tol=cfg.comparison_tol_factor * h)
    mz = [v for (_, name, v) in lemma_rows if name == "mean_zero"]
    checks = {
        "free_boundary": dev <= cfg.free_boundary_tol,
        "mean_convex": bool(mean_convex),
        "harmonic_dim_tangential": hs["dim_tangential_field"] == topo.harmonic_dimension,
        "harmonic_dim_normal": hs["dim_normal_field"] == topo.harmonic_dimension,
        "mean_zero": all(v < 1e-9 for v in mz),
        "index_at_least_bound": idx.index >= bound,
    }
    oracle_vals = None
    if surface.oracle is not None and surface.oracle.exact_jacobi_eigenvalues is not None:
        oracle_vals = surface.oracle.eigenvalues(len(jac.eigenvalues))
    report = VerificationReport(
        surface=surface.name,
        g=topo.genus,
        k=topo.boundary_components,
        H=H,
        index_fem=idx.index,
        index_bound=bound,
        rows=[r.to_dict() for r in rows],
        lemma_residuals={
            "per_field": [{"field": j, "quantity": n, "value": v} for (j, n, v) in lemma_rows],
            "orthogonality_systems": systems,
            "hodge": hs,
        },
        checks=checks,
        tolerances={
            "zero_tol": zt,
            "comparison_tol": cfg.comparison_tol_factor * h,
            "free_boundary_tol": cfg.free_boundary_tol,
            "cmc_tol": cfg.cmc_tol,
            "mean_zero_tol": 1e-9,
        },
        notes=notes
        + [
            f"numerical zeros: {list(idx.numerical_zeros)}",
            f"free-boundary deviation {dev:.3e} rad",
            f"mesh: V={m.n_vertices} E={m.n_edges} F={m.n_faces} h={h:.6g}",
        ],
    )
    report.lemma_residuals["numerical_zeros"] = list(idx.numerical_zeros)
    report.lemma_residuals["free_boundary_deviation"] = dev
    report.lemma_residuals["mean_edge_length"] = h
    if oracle_vals is not None:
        report.lemma_residuals["oracle_jacobi"] = [float(x) for x in oracle_vals]
        report.lemma_residuals["oracle_index"] = surface.oracle.exact_index
    report.decide()
    return Analysis(report, jac, hspec, lemma_rows, surface, zt, oracle_vals)


# -- output ------------------------------------------------------------------------------


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def write_analysis(an: Analysis, out_dir: str, figures: bool = True) -> dict:
    """Write report JSON, spectra CSVs, the lemma table and (optionally) an SVG figure."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "jacobi": os.path.join(out_dir, "jacobi_spectrum.csv"),
        "hodge": os.path.join(out_dir, "hodge_spectrum.csv"),
        "lemmas": os.path.join(out_dir, "lemma_residuals.csv"),
    }
    _write(paths["report"], an.report.to_json())
    ex = an.oracle_eigenvalues
    _write(paths["jacobi"], _csv(
        ["n", "eigenvalue", "relative_residual", "exact"],
        [(i + 1, float(v), float(r), "" if ex is None else float(ex[i]))
         for i, (v, r) in enumerate(zip(an.jacobi.eigenvalues, an.jacobi.residuals))],
    ))
    _write(paths["hodge"], _csv(
        ["n", "eigenvalue", "relative_residual"],
        [(i + 1, float(v), float(r)) for i, (v, r) in enumerate(zip(an.hodge.eigenvalues, an.hodge.residuals))],
    ))
    _write(paths["lemmas"], _csv(["field", "quantity", "value"], an.lemma_rows))
    if figures:
        from .plotting import plot_analysis

        paths["figure"] = os.path.join(out_dir, "spectra.svg")
        plot_analysis(an, paths["figure"])
    return paths


def write_error(exc: BaseException, out_dir: Optional[str]) -> str:
    """Machine-readable error record; written to ``out_dir/error.json`` when possible."""
    code = getattr(exc, "exit_code", 4 if isinstance(exc, OSError) else 1)
    text = json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code},
                      indent=2, sort_keys=True) + "\n"
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write(os.path.join(out_dir, "error.json"), text)
        except OSError:
            pass
    return text


def write_generated(surface: Surface, out_dir: str) -> dict:
    """Mesh as (N)OFF plus a JSON container descriptor with the free-boundary deviation."""
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, surface.name)
    write_off(surface.mesh, base + ".off")
    desc = {"surface": surface.name, "params": surface.params,
            "container": surface.container.to_dict() if surface.container is not None else {"type": "none"}}
    topo = topology(surface.mesh)
    desc["topology"] = {"g": topo.genus, "k": topo.boundary_components}
    if surface.container is not None:
        g = compute_geometry(surface.mesh)
        desc["free_boundary_deviation"] = check_free_boundary(surface.mesh, g, surface.container)
    if surface.oracle is not None:
        desc["oracle"] = {"H": surface.oracle.exact_H, "A_norm_sq": surface.oracle.exact_A_norm_sq,
                          "index": surface.oracle.exact_index}
    _write(base + ".json", json.dumps(desc, indent=2, sort_keys=True) + "\n")
    return {"mesh": base + ".off", "container": base + ".json"}


# -- suite ---------------------------------------------------------------------------------

# name, surface, fixed parameters, resolutions (finest last)
DEFAULT_SUITE = [
    ("cylinder_L2", "cylinder", {"L": 2.0}, [48, 96]),
    ("cylinder_L4", "cylinder", {"L": 4.0}, [24, 48, 96]),
    ("cylinder_L7", "cylinder", {"L": 7.0}, [48, 96]),
    ("disk_in_ball", "disk", {}, [8, 16, 32]),
    ("hemisphere", "hemisphere", {}, [3, 4, 5]),
    ("annulus", "annulus", {}, [32, 64]),
    ("punctured_torus", "punctured_torus", {}, [4, 8]),
    ("genus2", "genus2", {}, [1, 2]),
]

_LEVEL_SURFACES = {"hemisphere", "genus2"}


def _scaled(surface: str, res: int, scale: float) -> int:
    if scale == 1.0:
        return res
    if surface in _LEVEL_SURFACES:
        return max(0 if surface == "genus2" else 1, res + int(round(math.log2(scale))))
    lo = {"cylinder": 8, "disk": 4, "annulus": 8, "punctured_torus": 2}[surface]
    return max(lo, int(round(res * scale)))


def _suite_cases(cfg: RunConfig):
    spec = cfg.cases if cfg.cases is not None else DEFAULT_SUITE
    out = []
    for entry in spec:
        if isinstance(entry, dict):
            name, surf, params, levels = entry["name"], entry["surface"], entry.get("params", {}), entry["levels"]
        else:
            name, surf, params, levels = entry
        for res in levels:
            r = _scaled(surf, int(res), cfg.scale)
            out.append((name, surf, dict(params, res=r), r))
    return out


AGG_COLUMNS = [
    "case", "surface", "res", "V", "h", "g", "k", "expected_dim", "dim_tangential", "dim_normal",
    "gap_ratio_min", "hodge_first_nonzero", "mean_zero_max", "index_fem", "index_exact", "index_bound",
    "numerical_zeros", "lambda1_J", "lambda1_J_exact", "lambda1_J_error", "min_scan_margin",
    "min_minimal_margin", "verdict", "status", "lambda1_J_order", "hodge_order",
]


def _run_case(args):
    name, surf, params, res, cfg_dict, out_root = args
    cfg = RunConfig.from_dict(cfg_dict)
    case_id = f"{name}_res{res}"
    out_dir = os.path.join(out_root, case_id)
    row = {k: "" for k in AGG_COLUMNS}
    row.update(case=name, surface=surf, res=res)
    try:
        s = build_surface(surf, params)
        m = s.mesh
        row.update(V=m.n_vertices, h=m.mean_edge_length)
        if s.container is None:
            g = compute_geometry(m)
            hs, _ = hodge_summary(m, g, cfg.method, cfg.seed)
            os.makedirs(out_dir, exist_ok=True)
            _write(os.path.join(out_dir, "hodge_report.json"),
                   json.dumps(_plain(hs), indent=2, sort_keys=True) + "\n")
            ok = hs["dim_tangential_field"] == hs["expected_dim"] == hs["dim_normal_field"] and hs["mean_zero_max"] < 1e-9
            verdict = "PASS" if ok else "FAIL"
        else:
            an = analyze(s, cfg)
            write_analysis(an, out_dir, figures=cfg.figures)
            rep = an.report
            hs = rep.lemma_residuals["hodge"]
            verdict = rep.verdict
            lam = float(an.jacobi.eigenvalues[0])
            scan = [r["margin"] for r in rep.rows if r["variant"] == "scan" and r["margin"] is not None]
            minimal = [r["margin"] for r in rep.rows if r["variant"] == "minimal"]
            row.update(index_fem=rep.index_fem, index_bound=rep.index_bound,
                       numerical_zeros=len(rep.lemma_residuals["numerical_zeros"]), lambda1_J=lam,
                       min_scan_margin=min(scan) if scan else "", min_minimal_margin=min(minimal))
            if an.oracle_eigenvalues is not None:
                row.update(lambda1_J_exact=float(an.oracle_eigenvalues[0]),
                           lambda1_J_error=abs(lam - float(an.oracle_eigenvalues[0])),
                           index_exact=s.oracle.exact_index)
        row.update(g=hs["g"], k=hs["k"], expected_dim=hs["expected_dim"],
                   dim_tangential=hs["dim_tangential_field"], dim_normal=hs["dim_normal_field"],
                   gap_ratio_min=min(hs["gap_tangential_field"], hs["gap_normal_field"]),
                   hodge_first_nonzero=hs["first_nonzero_tangential_field"], mean_zero_max=hs["mean_zero_max"],
                   verdict=verdict, status="ok")
    except FBIndexError as exc:
        write_error(exc, out_dir)
        row.update(verdict="FAIL", status=f"{type(exc).__name__}: {exc}")
    return row


def _plain(d):
    return json.loads(json.dumps(d, default=float))


def _orders(rows: list[dict]) -> None:
    """Observed convergence orders between consecutive levels of each case."""
    by_case: dict = {}
    for r in rows:
        by_case.setdefault(r["case"], []).append(r)
    for rs in by_case.values():
        for i in range(1, len(rs)):
            a, b = rs[i - 1], rs[i]
            if a["h"] == "" or b["h"] == "" or a["h"] == b["h"]:
                continue
            lh = math.log(a["h"] / b["h"])
            ea, eb = a["lambda1_J_error"], b["lambda1_J_error"]
            if ea not in ("", 0.0) and eb not in ("", 0.0):
                b["lambda1_J_order"] = math.log(ea / eb) / lh
            if i >= 2:
                c0 = rs[i - 2]["hodge_first_nonzero"]
                c1, c2 = a["hodge_first_nonzero"], b["hodge_first_nonzero"]
                if "" not in (c0, c1, c2) and not any(isinstance(x, float) and math.isnan(x) for x in (c0, c1, c2)):
                    d1, d2 = abs(c1 - c0), abs(c2 - c1)
                    if d1 > 0 and d2 > 0:
                        b["hodge_order"] = math.log(d1 / d2) / lh


def run_suite(cfg: RunConfig) -> tuple[list[dict], str]:
    """Run every suite case; returns the aggregate rows and the CSV path."""
    out_root = cfg.output_dir()
    os.makedirs(out_root, exist_ok=True)
    _write(os.path.join(out_root, "config.json"), json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    cases = _suite_cases(cfg)
    payload = [(n, s, p, r, cfg.to_dict(), out_root) for (n, s, p, r) in cases]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            rows = list(ex.map(_run_case, payload))
    else:
        rows = [_run_case(p) for p in payload]
    _orders(rows)
    path = os.path.join(out_root, "suite_summary.csv")
    _write(path, _csv(AGG_COLUMNS, [[r[k] for k in AGG_COLUMNS] for r in rows]))
    if cfg.figures:
        from .plotting import plot_suite

        plot_suite(rows, os.path.join(out_root, "convergence.svg"))
    return rows, path
