"""Command line front end.

Commands
--------
gen       write a suite surface as OFF plus a JSON container descriptor
analyze   full verification of one surface; exit 0 iff the verdict is PASS
suite     every suite case, one aggregate CSV with convergence orders
compare   comparison rows from spectra stored in files (any ambient model)
classify  (g, k) with vanishing index bound, checked against the reference lists

Exit codes: 0 pass, 1 failing verdict, 2 config, 3 geometry or mesh,
4 I/O, 5 solver.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .bounds import AmbientModel, stable_classification, verify_comparison
from .errors import ConfigError, FBIndexError
from .pipeline import (
    OUT_ENV,
    SURFACE_NAMES,
    RunConfig,
    analyze,
    build_surface,
    load_surface,
    run_suite,
    write_analysis,
    write_error,
    write_generated,
)

log = logging.getLogger("fbindex")

_SURFACE_FLAGS = ("r", "L", "res", "tilt", "inner", "outer", "R")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fbindex", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file; its keys override the flags")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./fbindex_out)")
        sp.add_argument("--seed", type=int)

    def surface_flags(sp):
        sp.add_argument("--surface", help=f"one of {', '.join(SURFACE_NAMES)}")
        sp.add_argument("--r", type=float, help="radius (cylinder, hemisphere, torus tube)")
        sp.add_argument("--L", type=float, help="cylinder length")
        sp.add_argument("--R", type=float, help="torus core radius")
        sp.add_argument("--res", type=int, help="resolution or refinement level")
        sp.add_argument("--tilt", type=float, help="disk contact-angle perturbation in radians")
        sp.add_argument("--inner", type=float)
        sp.add_argument("--outer", type=float)

    sp = sub.add_parser("gen", help="write a suite surface to OFF + JSON")
    common(sp)
    surface_flags(sp)

    sp = sub.add_parser("analyze", help="verify one surface")
    common(sp)
    surface_flags(sp)
    sp.add_argument("--mesh", help="OFF or OBJ mesh instead of --surface")
    sp.add_argument("--container", help="container JSON (as written by gen)")
    sp.add_argument("--ambient", choices=["euclidean", "sphere"])
    sp.add_argument("--alpha-max", type=int, dest="alpha_max")
    sp.add_argument("--method", choices=["auto", "dense", "shift_invert"])
    sp.add_argument("--zero-tol", type=float, dest="zero_tol")
    sp.add_argument("--no-figures", action="store_false", dest="figures", default=None)

    sp = sub.add_parser("suite", help="run the default suite")
    common(sp)
    sp.add_argument("--scale", type=float, help="resolution multiplier (0.5 halves every level)")
    sp.add_argument("--jobs", type=int, help="parallel worker processes")
    sp.add_argument("--method", choices=["auto", "dense", "shift_invert"])
    sp.add_argument("--no-figures", action="store_false", dest="figures", default=None)

    sp = sub.add_parser("compare", help="comparison rows from spectra files")
    common(sp)
    sp.add_argument("--jacobi", required=True, help="CSV with an 'eigenvalue' column, or one value per line")
    sp.add_argument("--hodge", required=True, help="same format for the 1-form Laplacian")
    sp.add_argument("--H", type=float, required=True, dest="H")
    sp.add_argument("--ambient", choices=["euclidean", "sphere"], default="euclidean")
    sp.add_argument("--alpha-max", type=int, dest="alpha_max", default=3)
    sp.add_argument("--tol", type=float, default=0.0)

    sp = sub.add_parser("classify", help="topologies with vanishing index bound")
    sp.add_argument("--ambient", choices=["euclidean", "sphere"], default="euclidean")
    return p


def _config(args) -> RunConfig:
    d = {"command": args.command}
    for k in ("surface", "mesh", "container", "out", "seed", "ambient", "alpha_max", "method",
              "zero_tol", "figures", "scale", "jobs"):
        v = getattr(args, k, None)
        if v is not None:
            d[k] = v
    params = {k: getattr(args, k) for k in _SURFACE_FLAGS if getattr(args, k, None) is not None}
    if params:
        d["params"] = params
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                over = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config}: {exc}") from None
        if not isinstance(over, dict):
            raise ConfigError("config file must hold a JSON object")
        over.pop("command", None)
        if "params" in over and "params" in d:
            over["params"] = {**d["params"], **over["params"]}
        d.update(over)
    return RunConfig.from_dict(d)


def _read_values(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if lines and "eigenvalue" in lines[0]:
        return np.array([float(r["eigenvalue"]) for r in csv.DictReader(lines)])
    try:
        return np.array([float(ln.split(",")[0]) for ln in lines])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _print_rows(rows, out=sys.stdout):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["alpha", "variant", "lambda_J", "m_alpha", "lambda_delta", "rhs", "margin", "pass"])
    for r in rows:
        r = r if isinstance(r, dict) else r.to_dict()
        w.writerow([r["alpha"], r["variant"], r["lambda_J"], r["m_alpha"], r["lambda_delta"], r["rhs"],
                    r["margin"], r["pass"]])


def cmd_gen(cfg: RunConfig) -> int:
    if not cfg.surface:
        raise ConfigError("gen needs --surface")
    s = build_surface(cfg.surface, cfg.params)
    paths = write_generated(s, cfg.output_dir())
    for k, v in paths.items():
        print(f"{k}\t{v}")
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    s = load_surface(cfg)
    an = analyze(s, cfg)
    out = cfg.output_dir()
    paths = write_analysis(an, out, figures=cfg.figures)
    rep = an.report
    print(f"surface\t{rep.surface}\ng\t{rep.g}\nk\t{rep.k}\nH\t{rep.H:.10g}")
    print(f"index_fem\t{rep.index_fem}\nindex_bound\t{rep.index_bound}")
    print(f"numerical_zeros\t{len(rep.lemma_residuals['numerical_zeros'])}")
    _print_rows(rep.rows)
    for k, v in paths.items():
        print(f"{k}\t{v}")
    print(f"verdict\t{rep.verdict}")
    return 0 if rep.verdict == "PASS" else 1


def cmd_suite(cfg: RunConfig) -> int:
    rows, path = run_suite(cfg)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["case", "res", "index_fem", "dim_tangential", "verdict", "status"])
    for r in rows:
        w.writerow([r["case"], r["res"], r["index_fem"], r["dim_tangential"], r["verdict"], r["status"]])
    print(f"summary\t{path}")
    return 0 if all(r["verdict"] == "PASS" for r in rows) else 1


def cmd_compare(args) -> int:
    a = AmbientModel.from_tag(args.ambient)
    jac, hod = _read_values(args.jacobi), _read_values(args.hodge)
    rows = verify_comparison(jac, hod, args.H, a, args.alpha_max, args.tol)
    _print_rows(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "comparison.json"), "w") as fh:
            json.dump([r.to_dict() for r in rows], fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all(r.passed for r in rows if r.variant == "scan") else 1


def cmd_classify(args) -> int:
    c = stable_classification(AmbientModel.from_tag(args.ambient))
    for line in c.lines():
        print(line)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    out_dir = None
    try:
        args = _parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "classify":
            return cmd_classify(args)
        cfg = _config(args)
        out_dir = cfg.output_dir()
        return {"gen": cmd_gen, "analyze": cmd_analyze, "suite": cmd_suite}[args.command](cfg)
    except (FBIndexError, OSError) as exc:
        sys.stderr.write(write_error(exc, out_dir))
        return exc.exit_code if isinstance(exc, FBIndexError) else 4


if __name__ == "__main__":
    sys.exit(main())
