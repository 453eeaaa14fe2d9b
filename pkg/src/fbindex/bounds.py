"""Eigenvalue comparison, integer index bounds and stable (g, k) enumerations.

For a free-boundary CMC surface in a mean convex container the comparison
reads

    lambda^J_alpha <= -2 (H^2 + c) + lambda^Delta_{m(alpha)},   m(alpha) > f (alpha - 1),

with ambient curvature offset ``c`` and ``f`` the number of orthogonality
equations per Jacobi eigenfunction.  Counting equations also gives the
integer index bound: the index is at least the largest ``alpha`` with
``2g + k - 1 > f alpha - f / 2``.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, GeometryError

__all__ = [
    "AmbientModel",
    "EUCLIDEAN",
    "SPHERE",
    "index_lower_bound",
    "fractional_bound",
    "Classification",
    "stable_classification",
    "ComparisonRow",
    "verify_comparison",
    "check_constant_mean_curvature",
    "VerificationReport",
    "SCHEMA_VERSION",
    "REFERENCE_STABLE_LISTS",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AmbientModel:
    """Ambient space constants.

    ``curvature_offset`` enters as ``-2 (H^2 + offset)``; ``frame_count``
    is the number of ambient coordinate fields and ``equation_multiplier``
    (twice the frame count) the number of orthogonality equations per
    Jacobi eigenfunction.
    """

    tag: str
    curvature_offset: float
    frame_count: int
    equation_multiplier: int

    def __post_init__(self):
        if self.equation_multiplier < 1:
            raise ConfigError("equation_multiplier must be >= 1")
        known = {"euclidean": (0.0, 3, 6), "sphere": (1.0, 4, 8)}
        if self.tag in known and known[self.tag] != (self.curvature_offset, self.frame_count,
                                                     self.equation_multiplier):
            raise ConfigError(f"inconsistent constants for ambient model {self.tag!r}")

    @classmethod
    def from_tag(cls, tag: str) -> "AmbientModel":
        if tag == "euclidean":
            return EUCLIDEAN
        if tag == "sphere":
            return SPHERE
        raise ConfigError(f"unknown ambient model {tag!r}")

    @classmethod
    def custom(cls, multiplier: int, offset: float = 0.0) -> "AmbientModel":
        return cls("custom", float(offset), max(1, multiplier // 2), int(multiplier))


EUCLIDEAN = AmbientModel("euclidean", 0.0, 3, 6)
SPHERE = AmbientModel("sphere", 1.0, 4, 8)

# Stable-compatible topologies as stated for each ambient space.
REFERENCE_STABLE_LISTS = {
    "euclidean": frozenset({(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2)}),
    "sphere": frozenset({(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2), (2, 1)}),
}


def index_lower_bound(g: int, k: int, a: AmbientModel = EUCLIDEAN) -> int:
    """Largest ``alpha >= 0`` with ``2g + k - 1 > f alpha - f / 2`` (exact integers)."""
    g, k = int(g), int(k)
    if g < 0 or k < 1:
        raise ConfigError(f"need g >= 0 and k >= 1, got g={g}, k={k}")
    dim = 2 * g + k - 1
    f = a.equation_multiplier
    # compare doubled quantities to stay in integers: 2 dim > 2 f alpha - f
    alpha = 0
    while 2 * dim > 2 * f * (alpha + 1) - f:
        alpha += 1
    return alpha


def fractional_bound(g: int, k: int, a: AmbientModel = EUCLIDEAN) -> float:
    """Real-valued form ``(2g + k - 1 - f/2) / f`` of the bound.

    This is ``(2g+k-4)/6`` for Euclidean space and ``(2g+k-5)/8`` for the
    sphere; the integer bound is never below its ceiling.
    """
    f = a.equation_multiplier
    return (2 * g + k - 1 - f / 2) / f


@dataclass(frozen=True)
class Classification:
    """Topologies whose integer index bound is zero, versus a reference list."""

    model: str
    admissible: tuple
    reference: Optional[tuple]
    missing_from_reference: tuple
    extra_in_reference: tuple

    @property
    def discrepancy(self) -> bool:
        return bool(self.missing_from_reference or self.extra_in_reference)

    def lines(self) -> list[str]:
        out = [f"{self.model}: admissible (g,k) = {list(self.admissible)}"]
        if self.reference is not None:
            out.append(f"{self.model}: reference list  = {list(self.reference)}")
            for gk in self.missing_from_reference:
                out.append(f"DISCREPANCY {self.model}: {gk} has index bound 0 but is not in the reference list")
            for gk in self.extra_in_reference:
                out.append(f"DISCREPANCY {self.model}: {gk} is listed but its index bound is positive")
        return out


def stable_classification(a: AmbientModel = EUCLIDEAN) -> Classification:
    """Enumerate every ``(g, k)`` with ``index_lower_bound == 0``.

    Any mismatch with the reference list is reported in the result, never
    reconciled.
    """
    f = a.equation_multiplier
    # the bound is positive once 2g + k - 1 > f / 2, so this box is exhaustive
    found = [(g, k) for g in range(f + 1) for k in range(1, f + 3) if index_lower_bound(g, k, a) == 0]
    found = tuple(sorted(found))
    reference = REFERENCE_STABLE_LISTS.get(a.tag)
    if reference is None:
        return Classification(a.tag, found, None, (), ())
    return Classification(
        a.tag,
        found,
        tuple(sorted(reference)),
        tuple(sorted(set(found) - reference)),
        tuple(sorted(reference - set(found))),
    )


def check_constant_mean_curvature(H_values: np.ndarray, tol: float) -> float:
    """Mean of ``H_values`` after checking ``max |H - mean| <= tol``."""
    H_values = np.asarray(H_values, float)
    Hm = float(np.mean(H_values))
    dev = float(np.max(np.abs(H_values - Hm))) if len(H_values) else 0.0
    if dev > tol:
        raise GeometryError(f"mean curvature is not constant: max deviation {dev:.3e} > {tol:.3e}")
    return Hm


@dataclass(frozen=True)
class ComparisonRow:
    alpha: int
    lambda_J: float
    m_alpha: Optional[int]
    lambda_delta: Optional[float]
    rhs: Optional[float]
    margin: Optional[float]
    passed: bool
    variant: str

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lambda_J": self.lambda_J,
            "m_alpha": self.m_alpha,
            "lambda_delta": self.lambda_delta,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "variant": self.variant,
        }


def verify_comparison(jac: Sequence[float], hodge: Sequence[float], H: float, a: AmbientModel = EUCLIDEAN,
                      alpha_max: int = 3, tol: float = 0.0) -> list[ComparisonRow]:
    """Comparison rows for ``alpha = 1 .. alpha_max``, two variants each.

    ``minimal`` uses ``m = f (alpha - 1) + 1``.  ``scan`` uses the smallest
    admissible ``m`` whose row passes, searching the available Hodge
    eigenvalues; it is None-valued and failing if none does.  ``margin``
    is ``rhs - lambda_J`` (nonnegative when the inequality holds) and a
    row passes when ``margin >= -tol``.  Eigenvalue sequences are 1-based
    in the formulas and 0-based here.
    """
    jac = np.asarray(getattr(jac, "eigenvalues", jac), float)
    hodge = np.asarray(getattr(hodge, "eigenvalues", hodge), float)
    f = a.equation_multiplier
    if len(jac) < alpha_max:
        raise ConfigError(f"need {alpha_max} Jacobi eigenvalues, got {len(jac)}")
    if len(hodge) < f * (alpha_max - 1) + 1:
        raise ConfigError(f"need {f * (alpha_max - 1) + 1} Hodge eigenvalues, got {len(hodge)}")
    shift = -2.0 * (H * H + a.curvature_offset)
    rows = []
    for alpha in range(1, alpha_max + 1):
        lam = float(jac[alpha - 1])
        m0 = f * (alpha - 1) + 1
        rhs = shift + float(hodge[m0 - 1])
        margin = rhs - lam
        rows.append(ComparisonRow(alpha, lam, m0, float(hodge[m0 - 1]), rhs, margin, margin >= -tol, "minimal"))
        found = None
        for mm in range(m0, len(hodge) + 1):
            r = shift + float(hodge[mm - 1])
            if r - lam >= -tol:
                found = ComparisonRow(alpha, lam, mm, float(hodge[mm - 1]), r, r - lam, True, "scan")
                break
        if found is None:
            found = ComparisonRow(alpha, lam, None, None, None, None, False, "scan")
        rows.append(found)
    return rows


@dataclass
class VerificationReport:
    """Structured verdict of one surface; serialized as versioned JSON.

    ``timestamp`` is the only field that changes between identical runs.
    """

    surface: str
    g: int
    k: int
    H: float
    index_fem: int
    index_bound: int
    rows: list = field(default_factory=list)
    lemma_residuals: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    verdict: str = "FAIL"
    schema_version: int = SCHEMA_VERSION
    timestamp: str = ""

    def decide(self) -> str:
        scan_ok = all(r["pass"] for r in self.rows if r.get("variant") == "scan")
        checks_ok = all(bool(v) for v in self.checks.values())
        self.verdict = "PASS" if scan_ok and checks_ok and self.index_fem >= self.index_bound else "FAIL"
        return self.verdict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, stamp: bool = True) -> str:
        d = self.to_dict()
        if stamp and not d["timestamp"]:
            d["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema version {d.get('schema_version')!r}")
        return cls(**d)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x
